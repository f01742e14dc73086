//! Momentum map, connection 1-form and horizontal lifts of the averaged
//! connection, and the first-order corrections `V`, `K`, `⟨K⟩`, `g`.
//!
//! All slow derivatives of `J` go through the relation
//! `∂J/∂pⁱ = (∂H/∂pⁱ − ⟨∂H/∂pⁱ⟩)/ω` on a single orbit, so nothing here
//! differences quadratures across orbits in the slow directions. Fast
//! derivatives of quadrature-defined functions (`Θ`, `⟨K⟩`) use nested
//! fourth-order central differences, guarded by a noise budget.

use nalgebra::{DMatrix, DVector};

use crate::averaging::{mean, s_along_orbit, s_values, Averaged};
use crate::error::{Error, Result};
use crate::fd::{self, STENCIL_GAIN};
use crate::flow::{sample_orbit, sample_states, IntegratorConfig, OrbitSample};
use crate::phase::{Bivector, Covector, Dims, PhasePoint, TangentVector};
use crate::system::{fast_field, SlowFastSystem};
use crate::tolerances::{DEFAULT_NODES, FAST_FD_STEP, NOISE_BUDGET};

/// Quadrature and differencing parameters shared by the connection and
/// normal-form computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub nodes: usize,
    pub integrator: IntegratorConfig,
    /// Step of the nested fast-variable differences.
    pub fast_step: f64,
    pub noise_budget: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            integrator: IntegratorConfig::default(),
            fast_step: FAST_FD_STEP,
            noise_budget: NOISE_BUDGET,
        }
    }
}

impl Quadrature {
    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn with_integrator(mut self, integrator: IntegratorConfig) -> Self {
        self.integrator = integrator;
        self
    }
}

/// Gradients of `H` and `ω` along one orbit, from which `J`, `∂J`, `Θ` and
/// `K` follow without further flows.
#[derive(Debug, Clone)]
pub struct OrbitData {
    pub orbit: OrbitSample,
    pub grads: Vec<DVector<f64>>,
    pub omegas: Vec<f64>,
}

impl OrbitData {
    pub fn new(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<Self> {
        let orbit = sample_states(sys, m, qc.nodes, &qc.integrator)?;
        Self::from_orbit(sys, orbit)
    }

    pub fn with_tangents(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<Self> {
        let orbit = sample_orbit(sys, m, qc.nodes, &qc.integrator)?;
        Self::from_orbit(sys, orbit)
    }

    pub fn from_orbit(sys: &SlowFastSystem, orbit: OrbitSample) -> Result<Self> {
        let grads = orbit
            .states
            .iter()
            .map(|s| sys.gradient(s))
            .collect::<Result<Vec<_>>>()?;
        // ω is invariant; a detected ω is evaluated once
        let omegas = if sys.has_analytic_frequency() {
            orbit.states.iter().map(|s| sys.omega(s)).collect::<Result<Vec<_>>>()?
        } else {
            vec![sys.omega(&orbit.base)?; orbit.n_nodes]
        };
        Ok(Self { orbit, grads, omegas })
    }

    pub fn dims(&self) -> Dims {
        self.orbit.dims()
    }

    fn column(&self, index: usize) -> Vec<f64> {
        self.grads.iter().map(|g| g[index]).collect()
    }

    /// `J = (1/2π)∮ y·dx`, the loop integral of `y·Υ_x` over the orbit.
    pub fn momentum(&self) -> f64 {
        let d = self.dims();
        let integrand: Vec<f64> = self
            .orbit
            .states
            .iter()
            .zip(&self.grads)
            .zip(&self.omegas)
            .map(|((s, g), w)| (0..d.r).map(|i| s.y()[i] * g[d.y_index(i)]).sum::<f64>() / w)
            .collect();
        mean(&integrand)
    }

    /// `(∂J/∂pⁱ, ∂J/∂qⁱ)` at every node.
    pub fn dj_slow_nodes(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dims();
        let rel = |index: usize| {
            let col = self.column(index);
            let avg = mean(&col);
            col.iter().zip(&self.omegas).map(|(v, w)| (v - avg) / w).collect::<Vec<_>>()
        };
        (rel(d.p_index(i)), rel(d.q_index(i)))
    }

    /// `(Θᵢᵖ, Θᵢᵠ)` at every node.
    pub fn theta_nodes(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let (jp, jq) = self.dj_slow_nodes(i);
        (s_along_orbit(&jp), s_along_orbit(&jq))
    }

    /// `(Θᵢᵖ, Θᵢᵠ)` at the base point with the quadrature error estimate.
    pub fn theta(&self, i: usize) -> (Averaged<f64>, Averaged<f64>) {
        let (jp, jq) = self.dj_slow_nodes(i);
        (s_values(&jp), s_values(&jq))
    }

    /// `K = ½ Σᵢ (Θᵢᵖ ∂H/∂qⁱ − Θᵢᵠ ∂H/∂pⁱ)` at every node.
    pub fn k_nodes(&self) -> Vec<f64> {
        let d = self.dims();
        let mut k = vec![0.0; self.orbit.n_nodes];
        for i in 0..d.k {
            let (tp, tq) = self.theta_nodes(i);
            for (j, kj) in k.iter_mut().enumerate() {
                let g = &self.grads[j];
                *kj += 0.5 * (tp[j] * g[d.q_index(i)] - tq[j] * g[d.p_index(i)]);
            }
        }
        k
    }

    /// `−(1/2ω) Σᵢ (Θᵢᵖ ∂ω/∂qⁱ − Θᵢᵠ ∂ω/∂pⁱ)` at every node.
    pub fn g_nodes(&self, sys: &SlowFastSystem) -> Result<Vec<f64>> {
        let d = self.dims();
        let dw = omega_gradients(sys, &self.orbit)?;
        let mut g = vec![0.0; self.orbit.n_nodes];
        for i in 0..d.k {
            let (tp, tq) = self.theta_nodes(i);
            for (j, gj) in g.iter_mut().enumerate() {
                let w = &dw[j];
                *gj -= (tp[j] * w[d.q_index(i)] - tq[j] * w[d.p_index(i)]) / (2.0 * self.omegas[j]);
            }
        }
        Ok(g)
    }
}

/// `∇ω` at the orbit nodes. A detected frequency is differentiated once at
/// the base point and transported, `∇ω(Fl m)ᵀ = ∇ω(m)ᵀ D Fl⁻¹`.
fn omega_gradients(sys: &SlowFastSystem, orbit: &OrbitSample) -> Result<Vec<DVector<f64>>> {
    if sys.has_analytic_frequency() {
        return orbit.states.iter().map(|s| sys.omega_gradient(s)).collect();
    }
    let base = sys.omega_gradient(&orbit.base)?;
    let resampled;
    let maps = match orbit.tangent_maps.as_deref() {
        Some(maps) => maps,
        None => {
            resampled = sample_orbit(sys, &orbit.base, orbit.n_nodes, &IntegratorConfig::default())?;
            resampled.tangents()?
        }
    };
    maps.iter()
        .zip(&orbit.times)
        .map(|(jac, &t)| {
            jac.transpose()
                .lu()
                .solve(&base)
                .ok_or(Error::SingularTangent { t })
        })
        .collect()
}

/// Everything the connection provides at one point.
#[derive(Debug, Clone)]
pub struct ConnectionData {
    pub j: f64,
    pub theta_p: Vec<f64>,
    pub theta_q: Vec<f64>,
    pub hor_p: Vec<TangentVector>,
    pub hor_q: Vec<TangentVector>,
    pub v: TangentVector,
    pub k: f64,
    pub k_avg: f64,
    pub g: f64,
}

pub fn connection_data(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<ConnectionData> {
    let data = OrbitData::new(sys, m, qc)?;
    let k = sys.dims().k;
    let (theta_p, theta_q): (Vec<f64>, Vec<f64>) = (0..k)
        .map(|i| {
            let (p, q) = data.theta(i);
            (p.value, q.value)
        })
        .unzip();
    let lifts = horizontal_lifts(sys, m, qc)?;
    let k_nodes = data.k_nodes();
    Ok(ConnectionData {
        j: data.momentum(),
        v: v_from_theta(m.dims(), &theta_p, &theta_q),
        k: k_nodes[0],
        k_avg: mean(&k_nodes),
        g: mean(&data.g_nodes(sys)?),
        theta_p,
        theta_q,
        hor_p: lifts.0,
        hor_q: lifts.1,
    })
}

/// `J(m)` as the loop integral of `y·dx` along the `Υ`-orbit.
pub fn momentum_map(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    Ok(OrbitData::new(sys, m, qc)?.momentum())
}

/// `(∂J/∂pⁱ, ∂J/∂qⁱ)` at `m`.
pub fn dj_slow(sys: &SlowFastSystem, m: &PhasePoint, i: usize, qc: &Quadrature) -> Result<(f64, f64)> {
    check_slow_index(sys, i)?;
    let (p, q) = OrbitData::new(sys, m, qc)?.dj_slow_nodes(i);
    Ok((p[0], q[0]))
}

/// `(Θᵢᵖ, Θᵢᵠ) = (𝒮(∂J/∂pⁱ), 𝒮(∂J/∂qⁱ))` at `m`.
pub fn theta(sys: &SlowFastSystem, m: &PhasePoint, i: usize, qc: &Quadrature) -> Result<(Averaged<f64>, Averaged<f64>)> {
    check_slow_index(sys, i)?;
    Ok(OrbitData::new(sys, m, qc)?.theta(i))
}

fn check_slow_index(sys: &SlowFastSystem, i: usize) -> Result<()> {
    if i < sys.dims().k {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected: sys.dims().k,
            got: i + 1,
        })
    }
}

/// Nested fast-variable gradient of a vector of quadrature outputs.
///
/// `eval` returns values and their quadrature error estimates at a point.
/// Fails with a numerics error when the estimated quadrature noise,
/// amplified by the stencil, exceeds the budget.
pub(crate) fn fast_gradients<F>(m: &PhasePoint, qc: &Quadrature, eval: F) -> Result<DMatrix<f64>>
where
    F: Fn(&PhasePoint) -> Result<(Vec<f64>, f64)>,
{
    let d = m.dims();
    let h = qc.fast_step;
    let mut out: Option<DMatrix<f64>> = None;
    let mut worst: f64 = 0.0;
    for c in d.fast() {
        let column = fd::central4_vector(
            |s| {
                let (vals, err) = eval(&m.shifted(c, s))?;
                worst = worst.max(if err.is_nan() { 0.0 } else { err });
                Ok(DVector::from_vec(vals))
            },
            h,
        )?;
        let mat = out.get_or_insert_with(|| DMatrix::zeros(column.len(), 2 * d.r));
        mat.set_column(c, &column);
    }
    let amplified = worst * STENCIL_GAIN / h;
    if amplified > qc.noise_budget {
        return Err(Error::Numerics(format!(
            "quadrature noise {worst:.2e} amplified to {amplified:.2e} by the fast stencil exceeds the budget {:.1e}",
            qc.noise_budget
        )));
    }
    Ok(out.expect("at least one fast coordinate"))
}

/// `X⁽⁰⁾_F` from the fast gradient `(∂F/∂y, ∂F/∂x)` only.
fn fast_hamiltonian(dims: Dims, fast_grad: impl Iterator<Item = f64>) -> TangentVector {
    let mut full = DVector::zeros(dims.len());
    for (c, v) in fast_grad.enumerate() {
        full[c] = v;
    }
    fast_field(dims, &full)
}

/// All lifts `hor_iᵖ = ∂/∂pⁱ + X⁽⁰⁾_{Θᵢᵖ}`, `hor_iᵠ = ∂/∂qⁱ + X⁽⁰⁾_{Θᵢᵠ}`.
pub fn horizontal_lifts(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<(Vec<TangentVector>, Vec<TangentVector>)> {
    sys.check_admissible(m)?;
    let d = sys.dims();
    let grads = fast_gradients(m, qc, |pt| {
        let data = OrbitData::new(sys, pt, qc)?;
        let mut vals = Vec::with_capacity(2 * d.k);
        let mut err: f64 = 0.0;
        for i in 0..d.k {
            let (p, q) = data.theta(i);
            err = err.max(p.error).max(q.error);
            vals.push(p.value);
            vals.push(q.value);
        }
        Ok((vals, err))
    })?;
    let lift = |row: usize, slow_index: usize| {
        let corr = fast_hamiltonian(d, grads.row(row).iter().copied());
        &TangentVector::basis(d, slow_index) + &corr
    };
    Ok((
        (0..d.k).map(|i| lift(2 * i, d.p_index(i))).collect(),
        (0..d.k).map(|i| lift(2 * i + 1, d.q_index(i))).collect(),
    ))
}

/// `(hor_iᵖ, hor_iᵠ)`.
pub fn horizontal_lift(sys: &SlowFastSystem, m: &PhasePoint, i: usize, qc: &Quadrature) -> Result<(TangentVector, TangentVector)> {
    check_slow_index(sys, i)?;
    let (mut p, mut q) = horizontal_lifts(sys, m, qc)?;
    Ok((p.swap_remove(i), q.swap_remove(i)))
}

/// `Π_Θ = Σᵢ hor_iᵖ ∧ hor_iᵠ`.
pub fn pi_theta(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<Bivector> {
    let (p, q) = horizontal_lifts(sys, m, qc)?;
    Ok(pi_from_lifts(sys.dims(), &p, &q))
}

pub(crate) fn pi_from_lifts(dims: Dims, p: &[TangentVector], q: &[TangentVector]) -> Bivector {
    let mut pi = Bivector::zeros(dims);
    for (a, b) in p.iter().zip(q) {
        pi += Bivector::wedge(a, b);
    }
    pi
}

fn v_from_theta(dims: Dims, theta_p: &[f64], theta_q: &[f64]) -> TangentVector {
    let mut v = DVector::zeros(dims.len());
    for i in 0..dims.k {
        v[dims.q_index(i)] = 0.5 * theta_p[i];
        v[dims.p_index(i)] = -0.5 * theta_q[i];
    }
    TangentVector::from_vector(dims, v).expect("dims")
}

/// `V = ½ Σᵢ (Θᵢᵖ ∂/∂qⁱ − Θᵢᵠ ∂/∂pⁱ)`.
pub fn v_field(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<TangentVector> {
    let data = OrbitData::new(sys, m, qc)?;
    let (tp, tq): (Vec<f64>, Vec<f64>) = (0..sys.dims().k)
        .map(|i| {
            let (p, q) = data.theta(i);
            (p.value, q.value)
        })
        .unzip();
    Ok(v_from_theta(sys.dims(), &tp, &tq))
}

/// `⟨V⟩`: the pullback average of `V` over the orbit, with `Θ` at every node
/// taken from the same orbit.
pub fn v_avg(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<Averaged<TangentVector>> {
    let data = OrbitData::with_tangents(sys, m, qc)?;
    let d = sys.dims();
    let thetas: Vec<_> = (0..d.k).map(|i| data.theta_nodes(i)).collect();
    let maps = data.orbit.tangents()?;
    let cols = maps
        .iter()
        .enumerate()
        .map(|(j, jac)| {
            let tp: Vec<f64> = thetas.iter().map(|t| t.0[j]).collect();
            let tq: Vec<f64> = thetas.iter().map(|t| t.1[j]).collect();
            let v = v_from_theta(d, &tp, &tq);
            jac.clone()
                .lu()
                .solve(v.as_vector())
                .ok_or(Error::SingularTangent { t: data.orbit.times[j] })
        })
        .collect::<Result<Vec<_>>>()?;
    let avg = |cols: &[DVector<f64>]| cols.iter().fold(DVector::zeros(d.len()), |a, c| a + c) / cols.len() as f64;
    let value = avg(&cols);
    let half: Vec<_> = cols.iter().step_by(2).cloned().collect();
    let error = (&value - avg(&half)).amax();
    Ok(Averaged {
        value: TangentVector::from_vector(d, value)?,
        error,
    })
}

/// `K(m)`.
pub fn correction_k(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    Ok(OrbitData::new(sys, m, qc)?.k_nodes()[0])
}

/// `⟨K⟩(m)`.
pub fn averaged_k(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<Averaged<f64>> {
    Ok(crate::averaging::average_values(&OrbitData::new(sys, m, qc)?.k_nodes()))
}

/// The factor of `X⁽⁰⁾` in the averaged perturbation,
/// `g = ⟨−(1/2ω) Σᵢ (Θᵢᵖ ∂ω/∂qⁱ − Θᵢᵠ ∂ω/∂pⁱ)⟩`.
///
/// The orbit average matters: the pointwise expression (see
/// [`g_pointwise`]) differs from it by a zero-mean term that is not
/// parallel to the remaining parts of the splitting.
pub fn g_factor(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    Ok(mean(&OrbitData::new(sys, m, qc)?.g_nodes(sys)?))
}

/// `−(1/2ω) Σᵢ (Θᵢᵖ ∂ω/∂qⁱ − Θᵢᵠ ∂ω/∂pⁱ)` at `m` itself.
pub fn g_pointwise(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    Ok(OrbitData::new(sys, m, qc)?.g_nodes(sys)?[0])
}

/// `dJ(m)`: fast components by central differences of the loop integral,
/// slow components from the single-orbit relation.
pub fn momentum_differential(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<Covector> {
    let d = sys.dims();
    let fast = fast_gradients(m, qc, |pt| {
        let data = OrbitData::new(sys, pt, qc)?;
        Ok((vec![data.momentum()], 0.0))
    })?;
    let data = OrbitData::new(sys, m, qc)?;
    let mut v = DVector::zeros(d.len());
    for c in d.fast() {
        v[c] = fast[(0, c)];
    }
    for i in 0..d.k {
        let (jp, jq) = data.dj_slow_nodes(i);
        v[d.p_index(i)] = jp[0];
        v[d.q_index(i)] = jq[0];
    }
    Covector::from_vector(d, v)
}

/// Largest norm of `[hor_a, hor_b]` over all pairs of lifts, by central
/// differences of the lifts with step `outer_step`.
pub fn hor_commutator(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature, outer_step: f64) -> Result<f64> {
    let d = sys.dims();
    let lifts_at = |pt: &PhasePoint| -> Result<Vec<DVector<f64>>> {
        let (p, q) = horizontal_lifts(sys, pt, qc)?;
        Ok(p.into_iter().chain(q).map(TangentVector::into_vector).collect())
    };
    let here = lifts_at(m)?;
    let count = here.len();
    // jacobians[l] column c = ∂hor_l/∂m_c
    let mut jacobians = vec![DMatrix::zeros(d.len(), d.len()); count];
    for c in 0..d.len() {
        let stacked = fd::central4_vector(
            |s| {
                let l = lifts_at(&m.shifted(c, s))?;
                Ok(DVector::from_iterator(count * d.len(), l.into_iter().flat_map(|v| v.data.as_vec().clone())))
            },
            outer_step,
        )?;
        for (l, jac) in jacobians.iter_mut().enumerate() {
            jac.set_column(c, &stacked.rows(l * d.len(), d.len()));
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..count {
        for b in a + 1..count {
            let bracket = &jacobians[b] * &here[a] - &jacobians[a] * &here[b];
            worst = worst.max(bracket.norm());
        }
    }
    Ok(worst)
}

/// The two smallest-to-largest singular values of the `2 × n` matrix `[dH; dJ]`.
pub fn dh_dj_singular_values(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<(f64, f64)> {
    let dh = sys.gradient(m)?;
    let dj = momentum_differential(sys, m, qc)?;
    let mut mat = DMatrix::zeros(2, dh.len());
    mat.set_row(0, &dh.transpose());
    mat.set_row(1, &dj.as_vector().transpose());
    let sv = mat.singular_values();
    Ok((sv.min(), sv.max()))
}
