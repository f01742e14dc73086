//! The first-order normal-form splitting of the averaged perturbation,
//! the first-integral property of `J` under it, the improved integral `F`
//! and long-horizon drift runs.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::averaging::{average_vector_field, mean, s_values};
use crate::connection::{fast_gradients, pi_from_lifts, horizontal_lifts, OrbitData, Quadrature};
use crate::error::{Error, Result};
use crate::fd;
use crate::ode::Dopri5;
use crate::phase::{Covector, PhasePoint, TangentVector};
use crate::system::{eval_x1, eval_xh, fast_field, slow_field, SlowFastSystem};
use crate::tolerances::{ADAPTIVE_ATOL, ADAPTIVE_RTOL, FAST_FD_STEP};

/// `⟨X⁽¹⁾⟩ = P_hor + P_ver + g·X⁽⁰⁾` at one point, with the defect.
#[derive(Debug, Clone)]
pub struct NormalFormSplit {
    pub p_hor: TangentVector,
    pub p_ver: TangentVector,
    pub g: f64,
    pub x0: TangentVector,
    pub x1_avg: TangentVector,
    /// `‖⟨X⁽¹⁾⟩ − P_hor − P_ver − g·X⁽⁰⁾‖`.
    pub residual: f64,
}

/// `P_hor = i_{dH} Π_Θ`.
pub fn p_hor(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<TangentVector> {
    let (hp, hq) = horizontal_lifts(sys, m, qc)?;
    let dh = Covector::from_vector(m.dims(), sys.gradient(m)?)?;
    Ok(pi_from_lifts(m.dims(), &hp, &hq).contract(&dh))
}

/// `P_ver = X⁽⁰⁾_{⟨K⟩}`, with the fast gradient of `⟨K⟩` by nested differences.
pub fn p_ver(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<TangentVector> {
    sys.check_admissible(m)?;
    let grad = fast_gradients(m, qc, |pt| {
        let k = crate::averaging::average_values(&OrbitData::new(sys, pt, qc)?.k_nodes());
        Ok((vec![k.value], k.error))
    })?;
    let d = m.dims();
    let mut full = DVector::zeros(d.len());
    for c in d.fast() {
        full[c] = grad[(0, c)];
    }
    Ok(fast_field(d, &full))
}

/// All terms of the splitting at `m`.
pub fn split(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<NormalFormSplit> {
    let data = OrbitData::with_tangents(sys, m, qc)?;
    let x1 = |pt: &PhasePoint| eval_x1(sys, pt);
    let x1_avg = average_vector_field(&x1, &data.orbit)?.value;
    let g = mean(&data.g_nodes(sys)?);
    let x0 = fast_field(m.dims(), &data.grads[0]);
    let p_hor = p_hor(sys, m, qc)?;
    let p_ver = p_ver(sys, m, qc)?;
    let defect = x1_avg.as_vector() - p_hor.as_vector() - p_ver.as_vector() - x0.as_vector() * g;
    Ok(NormalFormSplit {
        residual: defect.norm(),
        p_hor,
        p_ver,
        g,
        x0,
        x1_avg,
    })
}

pub fn splitting_residual(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    Ok(split(sys, m, qc)?.residual)
}

/// `|L_{⟨X⁽¹⁾⟩} J(m)|` by a central difference of the loop integral along
/// the direction of `⟨X⁽¹⁾⟩(m)`.
pub fn first_integral_defect(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    first_integral_defect_with(sys, m, qc, &|_| 0.0)
}

/// As [`first_integral_defect`] for `J + f(p, q)`; any nonconstant `f` spoils the
/// first-integral property.
pub fn first_integral_defect_with(
    sys: &SlowFastSystem,
    m: &PhasePoint,
    qc: &Quadrature,
    f: &(dyn Fn(&PhasePoint) -> f64 + Sync),
) -> Result<f64> {
    let data = OrbitData::with_tangents(sys, m, qc)?;
    let x1 = |pt: &PhasePoint| eval_x1(sys, pt);
    let dir = average_vector_field(&x1, &data.orbit)?.value;
    let speed = dir.norm();
    if speed == 0.0 {
        return Ok(0.0);
    }
    let unit = dir.as_vector() / speed;
    let value = |pt: &PhasePoint| -> Result<f64> { Ok(OrbitData::new(sys, pt, qc)?.momentum() + f(pt)) };
    let slope = fd::central4(|s| value(&m.offset(&unit, s)), FAST_FD_STEP)?;
    Ok((slope * speed).abs())
}

/// `F = J − (ε/ω) 𝒮({H, J}₁)`.
pub fn approx_integral_f(sys: &SlowFastSystem, eps: f64, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    Ok(f_from_orbit(&OrbitData::new(sys, m, qc)?, eps))
}

/// `(J, F)` from one orbit.
pub fn j_and_f(sys: &SlowFastSystem, eps: f64, m: &PhasePoint, qc: &Quadrature) -> Result<(f64, f64)> {
    let data = OrbitData::new(sys, m, qc)?;
    Ok((data.momentum(), f_from_orbit(&data, eps)))
}

fn f_from_orbit(data: &OrbitData, eps: f64) -> f64 {
    let j = data.momentum();
    if eps == 0.0 {
        return j;
    }
    let d = data.dims();
    let mut bracket = vec![0.0; data.orbit.n_nodes];
    for i in 0..d.k {
        let (jp, jq) = data.dj_slow_nodes(i);
        for (n, b) in bracket.iter_mut().enumerate() {
            let g = &data.grads[n];
            *b += g[d.p_index(i)] * jq[n] - g[d.q_index(i)] * jp[n];
        }
    }
    j - eps / data.omegas[0] * s_values(&bracket).value
}

/// The discretized homological defect `|L_Υ F₁ + {H,J}₁/ω − ⟨{H,J}₁⟩/ω|` for
/// `F₁ = −(1/ω)𝒮({H,J}₁)`, with the Lie derivative by a central difference
/// along the flow.
pub fn homological_defect(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    // F = J + ε F₁ and L_Υ J = 0, so L_Υ F₁ = (L_Υ F − L_Υ J)/ε at ε = 1
    let f1 = |pt: &PhasePoint| -> Result<f64> {
        let data = OrbitData::new(sys, pt, qc)?;
        Ok(f_from_orbit(&data, 1.0) - data.momentum())
    };
    let lie = fd::central4(
        |t| f1(&crate::flow::flow_upsilon(sys, m, t, &qc.integrator)?),
        crate::tolerances::FLOW_FD_STEP,
    )?;
    let data = OrbitData::new(sys, m, qc)?;
    let d = data.dims();
    let mut bracket = vec![0.0; data.orbit.n_nodes];
    for i in 0..d.k {
        let (jp, jq) = data.dj_slow_nodes(i);
        for (n, b) in bracket.iter_mut().enumerate() {
            let g = &data.grads[n];
            *b += g[d.p_index(i)] * jq[n] - g[d.q_index(i)] * jp[n];
        }
    }
    let w = data.omegas[0];
    Ok((lie + (bracket[0] - mean(&bracket)) / w).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quantity {
    H,
    J,
    F,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::H => "H",
            Quantity::J => "J",
            Quantity::F => "F",
        })
    }
}

/// The drift of one quantity along one trajectory of the full flow.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub eps: f64,
    pub horizon: f64,
    pub quantity: Quantity,
    pub max_drift: f64,
    /// `(t, Q(t))`.
    pub samples: Vec<(f64, f64)>,
    /// Filled in by [`drift_ladder`].
    pub slope_fit: Option<f64>,
    /// Time of the domain exit when the run was cut short.
    pub truncated_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    /// Output times, uniformly spaced over the horizon, excluding `t = 0`.
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
    pub quadrature: Quadrature,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            samples: 400,
            rtol: ADAPTIVE_RTOL,
            atol: ADAPTIVE_ATOL,
            quadrature: Quadrature::default(),
        }
    }
}

/// Reports for `H`, `J` and `F` from one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DriftRun {
    pub eps: f64,
    pub horizon: f64,
    pub h: DriftReport,
    pub j: DriftReport,
    pub f: DriftReport,
}

impl DriftRun {
    pub fn report(&self, q: Quantity) -> &DriftReport {
        match q {
            Quantity::H => &self.h,
            Quantity::J => &self.j,
            Quantity::F => &self.f,
        }
    }

    pub fn truncated_at(&self) -> Option<f64> {
        self.h.truncated_at
    }
}

/// Integrates `X_H = X⁽⁰⁾ + εX⁽¹⁾` from `m0` up to `horizon_c/ε` with the
/// adaptive integrator and records `H`, `J`, `F` at uniform output times.
/// A domain exit truncates the run and is recorded, not raised.
pub fn drift_run(sys: &SlowFastSystem, eps: f64, m0: &PhasePoint, horizon_c: f64, cfg: &DriftConfig) -> Result<DriftRun> {
    if !(eps > 0.0 && horizon_c > 0.0) {
        return Err(Error::Numerics(format!("drift run needs ε > 0 and c > 0 (ε = {eps}, c = {horizon_c})")));
    }
    if cfg.samples == 0 {
        return Err(Error::Numerics("drift run needs at least one output time".into()));
    }
    sys.check_admissible(m0)?;
    let horizon = horizon_c / eps;
    let qc = &cfg.quadrature;
    let dims = sys.dims();
    let mut solver = Dopri5::new(cfg.rtol, cfg.atol)?;
    let mut rhs = |_: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let m = PhasePoint::from_vector(dims, y.clone())?;
        Ok(eval_xh(sys, eps, &m)?.into_vector())
    };

    let record = |m: &PhasePoint| -> Result<(f64, f64, f64)> {
        let (j, f) = j_and_f(sys, eps, m, qc)?;
        Ok((sys.energy(m), j, f))
    };
    let mut series = vec![(0.0, record(m0)?)];
    let mut y = m0.as_vector().clone();
    let mut t = 0.0;
    let mut truncated_at = None;
    for s in 1..=cfg.samples {
        let t1 = horizon * s as f64 / cfg.samples as f64;
        let step = solver.advance(&mut rhs, t, &y, t1).and_then(|y1| {
            let m = PhasePoint::from_vector(dims, y1.clone())?;
            Ok((y1, record(&m)?))
        });
        match step {
            Ok((y1, values)) => {
                y = y1;
                t = t1;
                series.push((t, values));
            }
            Err(Error::Domain(_)) => {
                truncated_at = Some(solver.last_accepted_time().max(t));
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let report = |quantity: Quantity, pick: fn(&(f64, f64, f64)) -> f64| {
        let samples: Vec<(f64, f64)> = series.iter().map(|(t, v)| (*t, pick(v))).collect();
        let q0 = samples[0].1;
        let max_drift = samples.iter().map(|(_, q)| (q - q0).abs()).fold(0.0, f64::max);
        DriftReport {
            eps,
            horizon,
            quantity,
            max_drift,
            samples,
            slope_fit: None,
            truncated_at,
        }
    };
    Ok(DriftRun {
        eps,
        horizon,
        h: report(Quantity::H, |v| v.0),
        j: report(Quantity::J, |v| v.1),
        f: report(Quantity::F, |v| v.2),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Numerics("slope fit needs at least two paired values".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Numerics("slope fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerics("slope fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Drift runs over an ε-ladder with fitted orders for `J` and `F`.
#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub runs: Vec<DriftRun>,
    pub slope_j: f64,
    pub slope_f: f64,
}

pub fn drift_ladder(
    sys: &SlowFastSystem,
    ladder: &[f64],
    m0: &PhasePoint,
    horizon_c: f64,
    cfg: &DriftConfig,
) -> Result<LadderReport> {
    let mut runs = ladder
        .iter()
        .map(|&eps| drift_run(sys, eps, m0, horizon_c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (slope_j, slope_f) = ladder_slopes(&runs)?;
    for run in &mut runs {
        run.j.slope_fit = Some(slope_j);
        run.f.slope_fit = Some(slope_f);
    }
    Ok(LadderReport { runs, slope_j, slope_f })
}

/// Fitted orders `(J, F)` of the max drift against ε.
pub fn ladder_slopes(runs: &[DriftRun]) -> Result<(f64, f64)> {
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let j: Vec<f64> = runs.iter().map(|r| r.j.max_drift).collect();
    let f: Vec<f64> = runs.iter().map(|r| r.f.max_drift).collect();
    Ok((fit_slope(&eps, &j)?, fit_slope(&eps, &f)?))
}

/// The slow part of `⟨X⁽¹⁾⟩` equals that of `X⁽¹⁾_{⟨H⟩}` built from orbit
/// averages of slow gradients; used as a structural check on `P_hor`.
pub fn averaged_slow_field(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<TangentVector> {
    let data = OrbitData::new(sys, m, qc)?;
    let d = m.dims();
    let mut avg = DVector::zeros(d.len());
    for c in d.slow() {
        avg[c] = mean(&data.grads.iter().map(|g| g[c]).collect::<Vec<_>>());
    }
    Ok(slow_field(d, &avg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;

    fn pt(y: f64, x: f64, p: f64, q: f64) -> PhasePoint {
        PhasePoint::new(&[y], &[x], &[p], &[q]).unwrap()
    }

    fn sys(id: &str) -> SlowFastSystem {
        catalog::build(id, &Default::default()).unwrap()
    }

    #[test]
    fn constant_generator_split_is_trivial() {
        let s = sys("osc-const");
        let m = pt(0.6, -1.1, 0.2, 0.3);
        let qc = Quadrature::default();
        let split = split(&s, &m, &qc).unwrap();
        assert_eq!(split.p_hor.as_slice(), eval_x1(&s, &m).unwrap().as_slice());
        assert_eq!(split.p_ver.norm(), 0.0);
        assert_eq!(split.g, 0.0);
        assert!(split.residual < 1e-12);
        assert!(first_integral_defect(&s, &m, &qc).unwrap() < 1e-8);
    }

    #[test]
    fn splitting_closes_on_twisted_systems() {
        let qc = Quadrature::default();
        for id in ["u-twist", "twist2", "shear"] {
            let s = sys(id);
            let m = pt(0.6, -1.1, 0.2, 0.3);
            let split = split(&s, &m, &qc).unwrap();
            assert!(split.residual < 1e-8, "{id}: {:e}", split.residual);
            assert!(split.p_ver.slow().iter().all(|c| *c == 0.0));
            // slow parts of P_hor are the averaged slow field
            let slow = averaged_slow_field(&s, &m, &qc).unwrap();
            assert_abs_diff_eq!(split.p_hor.dp()[0], slow.dp()[0], epsilon = 1e-12);
            assert_abs_diff_eq!(split.p_hor.dq()[0], slow.dq()[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn pointwise_g_breaks_the_splitting() {
        let s = sys("twist2");
        let m = pt(0.6, -1.1, 0.2, 0.3);
        let qc = Quadrature::default();
        let split = split(&s, &m, &qc).unwrap();
        let g_pt = crate::connection::g_pointwise(&s, &m, &qc).unwrap();
        let defect = split.x1_avg.as_vector() - split.p_hor.as_vector() - split.p_ver.as_vector() - split.x0.as_vector() * g_pt;
        assert!(defect.norm() > 1e-4);
    }

    #[test]
    fn shear_has_a_vertical_part() {
        let s = sys("shear");
        let m = pt(0.6, -1.1, 0.2, 0.3);
        let pv = p_ver(&s, &m, &Quadrature::default()).unwrap();
        assert!(pv.norm() > 1e-3);
    }

    #[test]
    fn momentum_is_a_first_integral_of_the_average_but_not_renormalized() {
        let s = sys("twist2");
        let m = pt(0.6, -1.1, 0.2, 0.3);
        let qc = Quadrature::default();
        assert!(first_integral_defect(&s, &m, &qc).unwrap() < 1e-8);
        let bad = first_integral_defect_with(&s, &m, &qc, &|pt| pt.q()[0].powi(2)).unwrap();
        assert!(bad > 1e-3);
    }

    #[test]
    fn improved_integral_matches_closed_form() {
        let m = pt(0.6, -1.1, 0.2, 0.3);
        let qc = Quadrature::default();
        for id in ["u-twist", "twist2", "shear"] {
            let s = sys(id);
            let q = s.quadratic().unwrap();
            for eps in [0.0, 0.05, 0.3] {
                let f = approx_integral_f(&s, eps, &m, &qc).unwrap();
                assert_abs_diff_eq!(f, q.closed_f(eps, &m), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn f_equals_j_without_slow_dependence() {
        let dims = crate::phase::Dims::new(1, 1).unwrap();
        let s = SlowFastSystem::builder("fast-only", dims, |m| (m.y()[0].powi(2) + m.x()[0].powi(2)) / 2.0)
            .frequency(|_| 1.0)
            .build();
        let m = pt(0.6, -1.1, 0.2, 0.3);
        let qc = Quadrature::default();
        let (j, f) = j_and_f(&s, 0.2, &m, &qc).unwrap();
        assert_eq!(j, f);
    }

    #[test]
    fn homological_equation_for_the_first_correction() {
        let s = sys("twist2");
        let m = pt(0.6, -1.1, 0.2, 0.3);
        assert!(homological_defect(&s, &m, &Quadrature::default()).unwrap() < 1e-8);
    }

    #[test]
    fn slope_fit_recovers_power_laws() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert_abs_diff_eq!(fit_slope(&xs, &ys).unwrap(), 2.0, epsilon = 1e-12);
        assert!(fit_slope(&[0.1], &[1.0]).is_err());
        assert!(fit_slope(&[0.1, 0.2], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn short_drift_run_conserves_energy() {
        let s = sys("twist2");
        let m = pt(1.0, 0.2, 0.5, 0.1);
        let cfg = DriftConfig {
            samples: 20,
            ..DriftConfig::default()
        };
        let run = drift_run(&s, 0.5, &m, 1.0, &cfg).unwrap();
        assert_eq!(run.j.samples.len(), 21);
        assert!(run.h.max_drift < 1e-8);
        assert!(run.truncated_at().is_none());
        assert!(run.j.samples.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn domain_exit_truncates_the_run() {
        let base = sys("twist2");
        let q = base.quadratic().unwrap().clone();
        let (qe, qg, qw) = (q.clone(), q.clone(), q.clone());
        let fenced = SlowFastSystem::builder("fenced", q.dims(), move |m| qe.energy(m))
            .gradient(move |m| qg.gradient(m))
            .frequency(move |m| qw.omega(m))
            .domain_guard(|m| m.p()[0] > 0.3)
            .build();
        let m = pt(1.0, 0.2, 0.5, 0.1);
        let cfg = DriftConfig {
            samples: 50,
            ..DriftConfig::default()
        };
        let run = drift_run(&fenced, 0.1, &m, 1.0, &cfg).unwrap();
        let t = run.truncated_at().expect("leaves the fenced domain");
        assert!(t > 0.0 && t < run.horizon);
    }
}
