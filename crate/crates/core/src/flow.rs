//! Flows of `X⁽⁰⁾` and of the period-2π generator `Υ = X⁽⁰⁾/ω`, their tangent
//! maps, period detection and uniform orbit sampling.
//!
//! Quadratic systems use the exact rotation unless
//! [`IntegratorConfig::force_numeric`] is set. When `ω` is analytic the pair
//! `(z, D Fl)` is integrated along `Υ` directly, with
//! `DΥ = DX⁽⁰⁾/ω − X⁽⁰⁾ ⊗ ∇ω / ω²`. When `ω` comes from period detection it
//! is constant along each orbit, so `Fl^t_Υ = Fl^{t/ω(m)}_{X⁽⁰⁾}` and
//! `D Fl^t_Υ = D Fl^{t/ω}_{X⁽⁰⁾} − (t/ω²) X⁽⁰⁾(Fl) ⊗ ∇ω(m)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, Dopri5};
use crate::phase::{Dims, PhasePoint};
use crate::system::{fast_field, SlowFastSystem};
use crate::tolerances::{
    ADAPTIVE_ATOL, ADAPTIVE_RTOL, CLOSURE_TOL, DEFAULT_RK4_STEPS_PER_ORBIT, PERIOD_REL_TOL,
    PERIOD_TIME_TOL,
};

/// Search horizon of period detection, in multiples of the estimated period.
const PERIOD_SEARCH_ORBITS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Fixed-step classical RK4, `steps_per_orbit` steps per `2π` of `Υ`-time.
    Rk4 { steps_per_orbit: usize },
    /// Dormand–Prince 5(4).
    Adaptive { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub closure_tol: f64,
    /// Integrate numerically even when an exact flow is available.
    #[serde(default)]
    pub force_numeric: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4 {
                steps_per_orbit: DEFAULT_RK4_STEPS_PER_ORBIT,
            },
            closure_tol: CLOSURE_TOL,
            force_numeric: false,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive() -> Self {
        Self {
            method: Method::Adaptive {
                rtol: ADAPTIVE_RTOL,
                atol: ADAPTIVE_ATOL,
            },
            ..Self::default()
        }
    }

    pub fn rk4(steps_per_orbit: usize) -> Self {
        Self {
            method: Method::Rk4 { steps_per_orbit },
            ..Self::default()
        }
    }

    pub fn numeric(mut self) -> Self {
        self.force_numeric = true;
        self
    }

    pub fn with_closure_tol(mut self, tol: f64) -> Self {
        self.closure_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { steps_per_orbit } => steps_per_orbit > 0,
            Method::Adaptive { rtol, atol } => rtol > 0.0 && atol > 0.0,
        };
        if ok && self.closure_tol > 0.0 {
            Ok(())
        } else {
            Err(Error::Numerics(format!("invalid integrator configuration {self:?}")))
        }
    }

    fn steps_for(&self, span: f64, orbit_time: f64) -> usize {
        match self.method {
            Method::Rk4 { steps_per_orbit } => {
                ((span.abs() / orbit_time) * steps_per_orbit as f64 - 1e-9).ceil().max(1.0) as usize
            }
            Method::Adaptive { .. } => 1,
        }
    }
}

/// A uniform discretization of the `Υ`-orbit through `base`.
#[derive(Debug, Clone)]
pub struct OrbitSample {
    pub base: PhasePoint,
    pub n_nodes: usize,
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    /// `D Fl^{t_j}_Υ(base)`; absent for state-only samples.
    pub tangent_maps: Option<Vec<DMatrix<f64>>>,
    pub closure_error: f64,
}

impl OrbitSample {
    pub fn dims(&self) -> Dims {
        self.base.dims()
    }

    pub fn tangents(&self) -> Result<&[DMatrix<f64>]> {
        self.tangent_maps
            .as_deref()
            .ok_or_else(|| Error::Numerics("orbit sample carries no tangent maps".into()))
    }

    /// The sample on every second node; used for the `N` vs `N/2` error estimate.
    pub fn subsampled(&self) -> Option<OrbitSample> {
        if !self.n_nodes.is_multiple_of(2) || self.n_nodes < 4 {
            return None;
        }
        Some(OrbitSample {
            base: self.base.clone(),
            n_nodes: self.n_nodes / 2,
            times: every_other(&self.times),
            states: every_other(&self.states),
            tangent_maps: self.tangent_maps.as_ref().map(|m| every_other(m)),
            closure_error: self.closure_error,
        })
    }
}

fn every_other<T: Clone>(v: &[T]) -> Vec<T> {
    v.iter().step_by(2).cloned().collect()
}

fn uses_exact(sys: &SlowFastSystem, cfg: &IntegratorConfig) -> bool {
    sys.quadratic().is_some() && !cfg.force_numeric
}

/// `Υ(z)` for a phase vector, with the per-step domain check.
fn upsilon_rhs(sys: &SlowFastSystem, z: &DVector<f64>) -> Result<(PhasePoint, DVector<f64>, f64)> {
    let m = PhasePoint::from_vector(sys.dims(), z.clone())?;
    sys.check_admissible(&m)?;
    let g = sys.gradient(&m)?;
    let w = sys.omega(&m)?;
    let x0 = fast_field(sys.dims(), &g).into_vector();
    Ok((m, x0, w))
}

fn x0_rhs(sys: &SlowFastSystem, z: &DVector<f64>) -> Result<DVector<f64>> {
    let m = PhasePoint::from_vector(sys.dims(), z.clone())?;
    sys.check_admissible(&m)?;
    Ok(fast_field(sys.dims(), &sys.gradient(&m)?).into_vector())
}

fn pack(z: &DVector<f64>, jac: &DMatrix<f64>) -> DVector<f64> {
    let n = z.len();
    let mut v = DVector::zeros(n + n * n);
    v.rows_mut(0, n).copy_from(z);
    v.rows_mut(n, n * n).copy_from_slice(jac.as_slice());
    v
}

fn unpack(v: &DVector<f64>, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    (
        v.rows(0, n).into_owned(),
        DMatrix::from_column_slice(n, n, &v.as_slice()[n..]),
    )
}

/// A reusable propagator along `Υ` from a fixed base point.
struct Propagator<'a> {
    sys: &'a SlowFastSystem,
    cfg: &'a IntegratorConfig,
    base: PhasePoint,
    /// `ω(base)` when `ω` is detected rather than analytic.
    detected_omega: Option<f64>,
    solver: Option<Dopri5>,
}

impl<'a> Propagator<'a> {
    fn new(sys: &'a SlowFastSystem, m: &PhasePoint, cfg: &'a IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        sys.check_admissible(m)?;
        let detected_omega = if sys.has_analytic_frequency() {
            None
        } else {
            Some(sys.omega(m)?)
        };
        let solver = match cfg.method {
            Method::Adaptive { rtol, atol } => Some(Dopri5::new(rtol, atol)?),
            Method::Rk4 { .. } => None,
        };
        Ok(Self {
            sys,
            cfg,
            base: m.clone(),
            detected_omega,
            solver,
        })
    }

    fn run<F>(&mut self, f: F, y: &DVector<f64>, t0: f64, t1: f64, orbit_time: f64) -> Result<DVector<f64>>
    where
        F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    {
        let mut f = f;
        match self.solver.as_mut() {
            Some(solver) => solver.advance(&mut f, t0, y, t1),
            None => ode::rk4(&mut f, y, t0, t1, self.cfg.steps_for(t1 - t0, orbit_time)),
        }
    }

    /// State at `Υ`-time `t1` from the state at `t0`.
    fn states(&mut self, z: &DVector<f64>, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let sys = self.sys;
        match self.detected_omega {
            None => self.run(
                |_, y| {
                    let (_, x0, w) = upsilon_rhs(sys, y)?;
                    Ok(x0 / w)
                },
                z,
                t0,
                t1,
                2.0 * PI,
            ),
            Some(w) => self.run(|_, y| x0_rhs(sys, y), z, t0 / w, t1 / w, 2.0 * PI / w),
        }
    }

    /// `(z, M)` at `Υ`-time `t1` from `(z, M)` at `t0`; for detected `ω` the
    /// matrix is the tangent map of the `X⁽⁰⁾` flow, corrected in [`Self::finish`].
    fn with_tangent(&mut self, z: &DVector<f64>, jac: &DMatrix<f64>, t0: f64, t1: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let sys = self.sys;
        let n = z.len();
        let y = pack(z, jac);
        let out = match self.detected_omega {
            None => self.run(
                |_, v| {
                    let (zz, mm) = unpack(v, n);
                    let (m, x0, w) = upsilon_rhs(sys, &zz)?;
                    let dw = sys.omega_gradient(&m)?;
                    let dups = sys.x0_jacobian(&m)? / w - (&x0 * dw.transpose()) / (w * w);
                    Ok(pack(&(x0 / w), &(dups * mm)))
                },
                &y,
                t0,
                t1,
                2.0 * PI,
            )?,
            Some(w) => self.run(
                |_, v| {
                    let (zz, mm) = unpack(v, n);
                    let m = PhasePoint::from_vector(sys.dims(), zz.clone())?;
                    Ok(pack(&x0_rhs(sys, &zz)?, &(sys.x0_jacobian(&m)? * mm)))
                },
                &y,
                t0 / w,
                t1 / w,
                2.0 * PI / w,
            )?,
        };
        Ok(unpack(&out, n))
    }

    /// Turns an integrated `(z, M)` at `Υ`-time `t` into `D Fl^t_Υ`.
    fn finish(&self, z: &DVector<f64>, jac: DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        match self.detected_omega {
            None => Ok(jac),
            Some(w) => {
                let x0 = x0_rhs(self.sys, z)?;
                let dw = self.sys.omega_gradient(&self.base)?;
                Ok(jac - (x0 * dw.transpose()) * (t / (w * w)))
            }
        }
    }
}

/// `Fl^t_Υ(m)`.
pub fn flow_upsilon(sys: &SlowFastSystem, m: &PhasePoint, t: f64, cfg: &IntegratorConfig) -> Result<PhasePoint> {
    if uses_exact(sys, cfg) {
        sys.check_admissible(m)?;
        return Ok(sys.quadratic().expect("checked").flow(m, t));
    }
    if t == 0.0 {
        sys.check_admissible(m)?;
        return Ok(m.clone());
    }
    let mut prop = Propagator::new(sys, m, cfg)?;
    let z = prop.states(m.as_vector(), 0.0, t)?;
    PhasePoint::from_vector(sys.dims(), z)
}

/// `(Fl^t_Υ(m), D Fl^t_Υ(m))`.
pub fn tangent_flow_upsilon(
    sys: &SlowFastSystem,
    m: &PhasePoint,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(PhasePoint, DMatrix<f64>)> {
    let n = sys.dims().len();
    let (point, jac) = if uses_exact(sys, cfg) {
        sys.check_admissible(m)?;
        let q = sys.quadratic().expect("checked");
        (q.flow(m, t), q.flow_tangent(m, t))
    } else if t == 0.0 {
        sys.check_admissible(m)?;
        (m.clone(), DMatrix::identity(n, n))
    } else {
        let mut prop = Propagator::new(sys, m, cfg)?;
        let (z, jac) = prop.with_tangent(m.as_vector(), &DMatrix::identity(n, n), 0.0, t)?;
        let jac = prop.finish(&z, jac, t)?;
        (PhasePoint::from_vector(sys.dims(), z)?, jac)
    };
    check_tangent(&jac, t)?;
    Ok((point, jac))
}

fn check_tangent(jac: &DMatrix<f64>, t: f64) -> Result<()> {
    let det = jac.determinant();
    if det.is_finite() && det > 0.0 && jac.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SingularTangent { t })
    }
}

fn node_times(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

fn check_nodes(n: usize) -> Result<()> {
    if n >= 8 {
        Ok(())
    } else {
        Err(Error::Numerics(format!("orbit sample needs at least 8 nodes, got {n}")))
    }
}

fn closure(base: &PhasePoint, end: &PhasePoint, tol: f64) -> Result<f64> {
    let error = base.distance(end);
    if error <= tol {
        Ok(error)
    } else {
        Err(Error::Closure { error, tol })
    }
}

/// States and tangent maps at `t_j = 2πj/N`, with the `2π`-return validated.
pub fn sample_orbit(sys: &SlowFastSystem, m: &PhasePoint, n: usize, cfg: &IntegratorConfig) -> Result<OrbitSample> {
    sample(sys, m, n, cfg, true)
}

/// As [`sample_orbit`] without tangent maps; enough for function averages.
pub fn sample_states(sys: &SlowFastSystem, m: &PhasePoint, n: usize, cfg: &IntegratorConfig) -> Result<OrbitSample> {
    sample(sys, m, n, cfg, false)
}

fn sample(sys: &SlowFastSystem, m: &PhasePoint, n: usize, cfg: &IntegratorConfig, tangents: bool) -> Result<OrbitSample> {
    check_nodes(n)?;
    let times = node_times(n);
    if uses_exact(sys, cfg) {
        sys.check_admissible(m)?;
        let q = sys.quadratic().expect("checked");
        let mut states: Vec<PhasePoint> = times.iter().map(|&t| q.flow(m, t)).collect();
        states[0] = m.clone();
        let tangent_maps = tangents.then(|| {
            let mut maps: Vec<_> = times.iter().map(|&t| q.flow_tangent(m, t)).collect();
            maps[0] = DMatrix::identity(m.dims().len(), m.dims().len());
            maps
        });
        let closure_error = closure(m, &q.flow(m, 2.0 * PI), cfg.closure_tol)?;
        return Ok(OrbitSample {
            base: m.clone(),
            n_nodes: n,
            times,
            states,
            tangent_maps,
            closure_error,
        });
    }

    let dims = sys.dims();
    let len = dims.len();
    let mut prop = Propagator::new(sys, m, cfg)?;
    let mut states = vec![m.clone()];
    let mut maps = vec![DMatrix::identity(len, len)];
    let mut z = m.as_vector().clone();
    let mut jac = DMatrix::identity(len, len);
    for j in 1..=n {
        let (t0, t1) = (times[j - 1], if j == n { 2.0 * PI } else { times[j] });
        if tangents {
            (z, jac) = prop.with_tangent(&z, &jac, t0, t1)?;
        } else {
            z = prop.states(&z, t0, t1)?;
        }
        if j < n {
            states.push(PhasePoint::from_vector(dims, z.clone())?);
            if tangents {
                let map = prop.finish(&z, jac.clone(), t1)?;
                check_tangent(&map, t1)?;
                maps.push(map);
            }
        }
    }
    let end = PhasePoint::from_vector(dims, z)?;
    let closure_error = closure(m, &end, cfg.closure_tol)?;
    Ok(OrbitSample {
        base: m.clone(),
        n_nodes: n,
        times,
        states,
        tangent_maps: tangents.then_some(maps),
        closure_error,
    })
}

/// Minimal period of the `X⁽⁰⁾`-flow through `m`.
///
/// Integrates with RK4 until the trajectory crosses the hyperplane through `m`
/// orthogonal to `X⁽⁰⁾(m)` upward and close to `m`, then bisects the crossing
/// time. When `ω` is analytic the result is checked against `2π/ω`.
pub fn find_period(sys: &SlowFastSystem, m: &PhasePoint, cfg: &IntegratorConfig) -> Result<f64> {
    sys.check_admissible(m)?;
    let normal = x0_rhs(sys, m.as_vector())?;
    let speed2 = normal.norm_squared();
    let scale = sys.x0_jacobian(m)?.norm().max(speed2.sqrt() / (1.0 + m.norm()));
    if !(scale > 0.0) {
        return Err(Error::Domain("degenerate fast flow at the base point".into()));
    }
    let steps = match cfg.method {
        Method::Rk4 { steps_per_orbit } => steps_per_orbit,
        Method::Adaptive { .. } => DEFAULT_RK4_STEPS_PER_ORBIT,
    };
    let estimated = 2.0 * PI / scale;
    let dt = estimated / steps as f64;
    let t_max = PERIOD_SEARCH_ORBITS * estimated;

    let base = m.as_vector();
    let section = |z: &DVector<f64>| normal.dot(&(z - base));
    let mut rhs = |_: f64, y: &DVector<f64>| x0_rhs(sys, y);

    let mut t = 0.0;
    let mut z = base.clone();
    let mut s_prev = 0.0;
    let mut max_dist: f64 = 0.0;
    while t < t_max {
        let z_next = ode::rk4_step(&mut rhs, t, &z, dt)?;
        let s_next = section(&z_next);
        let dist = (&z_next - base).norm();
        max_dist = max_dist.max(dist);
        // the first step leaves the section upward; ignore it
        if t > 0.0 && s_prev < 0.0 && s_next >= 0.0 && dist < 0.25 * max_dist {
            let (mut lo, mut hi) = (0.0, dt);
            while hi - lo > PERIOD_TIME_TOL {
                let mid = 0.5 * (lo + hi);
                let s_mid = section(&ode::rk4_step(&mut rhs, t, &z, mid)?);
                if s_mid < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let period = t + 0.5 * (lo + hi);
            if sys.has_analytic_frequency() {
                let expected = 2.0 * PI / sys.omega(m)?;
                if ((period - expected) / expected).abs() > PERIOD_REL_TOL {
                    return Err(Error::Numerics(format!(
                        "detected period {period} disagrees with 2π/ω = {expected}"
                    )));
                }
            }
            return Ok(period);
        }
        z = z_next;
        s_prev = s_next;
        t += dt;
    }
    Err(Error::NoReturn { t_max })
}
