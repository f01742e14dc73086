//! Residuals of the verification checks, shared by the acceptance suite and
//! the experiment runner. Each function returns a nonnegative residual to be
//! compared against the matching budget in [`crate::tolerances`].

use nalgebra::{DVector, Matrix2, Vector2};
use std::f64::consts::PI;

use crate::averaging::{lie_derivative_upsilon, mean, s_of_samples};
use crate::connection::{horizontal_lifts, momentum_differential, momentum_map, OrbitData, Quadrature};
use crate::error::{Error, Result};
use crate::flow::{sample_states, tangent_flow_upsilon, IntegratorConfig};
use crate::fd::central4;
use crate::normal_form::{approx_integral_f, splitting_residual};
use crate::phase::PhasePoint;
use crate::sl2::{avg_q, avg_qq, exact_flow, q_form, s_q, QuadraticSystem};
use crate::system::{analytic, ScalarField, SlowFastSystem, TryField};

/// Outer nodes for averages of quadrature-defined functions. Every outer node
/// gets its own orbit, so the outer mean is independent of the inner one.
pub const OUTER_NODES: usize = 32;

/// Slow step of the finite differences of `J` across orbits.
pub const SLOW_FD_STEP: f64 = 1e-4;

/// Node counts of the splitting refinement check.
pub const REFINEMENT_NODES: (usize, usize) = (128, 256);

/// Fast stencil of the refinement check. Its orbits are integrated with one
/// RK4 step per node and carry ~1e-9 noise at 128 nodes; the default 1e-4
/// stencil would amplify that past the noise budget.
pub const REFINEMENT_FAST_STEP: f64 = 1e-2;

/// Closure budget of the one-step-per-node refinement orbits.
pub const REFINEMENT_CLOSURE_TOL: f64 = 1e-5;

pub type TestFunction<'a> = (&'static str, Box<dyn ScalarField + Send + Sync + 'a>);

/// `H·p`, `y·q` and `x²p` (first slow and fast coordinates) with analytic
/// gradients.
pub fn test_functions(sys: &SlowFastSystem) -> Vec<TestFunction<'_>> {
    let d = sys.dims();
    let (iy, ix, ip, iq) = (d.y_index(0), d.x_index(0), d.p_index(0), d.q_index(0));
    let n = d.len();
    let hp = analytic(
        move |m: &PhasePoint| sys.energy(m) * m[ip],
        move |m: &PhasePoint| {
            let mut g = sys.gradient(m).unwrap_or_else(|_| DVector::from_element(n, f64::NAN)) * m[ip];
            g[ip] += sys.energy(m);
            g
        },
    );
    let yq = analytic(
        move |m: &PhasePoint| m[iy] * m[iq],
        move |m: &PhasePoint| {
            let mut g = DVector::zeros(n);
            g[iy] = m[iq];
            g[iq] = m[iy];
            g
        },
    );
    let x2p = analytic(
        move |m: &PhasePoint| m[ix].powi(2) * m[ip],
        move |m: &PhasePoint| {
            let mut g = DVector::zeros(n);
            g[ix] = 2.0 * m[ix] * m[ip];
            g[ip] = m[ix].powi(2);
            g
        },
    );
    vec![("hp", Box::new(hp)), ("yq", Box::new(yq)), ("x2p", Box::new(x2p))]
}

/// `|L_Υ𝒮f − (f − ⟨f⟩)|`, `|⟨L_Υ f⟩|` and `|⟨𝒮f⟩|` at `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    pub homological: f64,
    pub mean_derivative: f64,
    pub mean_s: f64,
}

pub fn identity_residuals(
    sys: &SlowFastSystem,
    f: &dyn ScalarField,
    m: &PhasePoint,
    qc: &Quadrature,
) -> Result<IdentityResiduals> {
    let (n, cfg) = (qc.nodes, &qc.integrator);
    let s_at = |pt: &PhasePoint| -> Result<f64> {
        let orbit = sample_states(sys, pt, n, cfg)?;
        let v = orbit.states.iter().map(|s| f.value(s)).collect::<Result<Vec<_>>>()?;
        Ok(s_of_samples(&v))
    };
    let orbit = sample_states(sys, m, n, cfg)?;
    let values = orbit.states.iter().map(|s| f.value(s)).collect::<Result<Vec<_>>>()?;

    // left side by differences along the flow of the quadrature-defined 𝒮f
    let ls = lie_derivative_upsilon(sys, &TryField(s_at), m, cfg)?;
    let homological = (ls - (values[0] - mean(&values))).abs();

    // L_Υ f by the chain rule at every node
    let lf = orbit
        .states
        .iter()
        .map(|s| lie_derivative_upsilon(sys, f, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mean_derivative = mean(&lf).abs();

    let outer = sample_states(sys, m, OUTER_NODES, cfg)?;
    let s_outer = outer.states.iter().map(&s_at).collect::<Result<Vec<_>>>()?;
    let mean_s = mean(&s_outer).abs();

    Ok(IdentityResiduals { homological, mean_derivative, mean_s })
}

/// `max_i |⟨∂J/∂pⁱ⟩|, |⟨∂J/∂qⁱ⟩|` with `∂J` by slow differences of the loop
/// integral at every outer node.
pub fn momentum_average_residual(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    let outer = sample_states(sys, m, OUTER_NODES, &qc.integrator)?;
    let mut worst: f64 = 0.0;
    for c in sys.dims().slow() {
        let v = outer
            .states
            .iter()
            .map(|s| central4(|d| momentum_map(sys, &s.shifted(c, d), qc), SLOW_FD_STEP))
            .collect::<Result<Vec<_>>>()?;
        worst = worst.max(mean(&v).abs());
    }
    Ok(worst)
}

/// `max_i |⟨Θᵢ⟩|` with `Θ` from a separate orbit through every outer node.
pub fn theta_average_residual(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    let outer = sample_states(sys, m, OUTER_NODES, &qc.integrator)?;
    let k = sys.dims().k;
    let mut p = vec![Vec::with_capacity(OUTER_NODES); k];
    let mut q = vec![Vec::with_capacity(OUTER_NODES); k];
    for s in &outer.states {
        let data = OrbitData::new(sys, s, qc)?;
        for i in 0..k {
            let (tp, tq) = data.theta(i);
            p[i].push(tp.value);
            q[i].push(tq.value);
        }
    }
    Ok(p.iter().chain(&q).map(|v| mean(v).abs()).fold(0.0, f64::max))
}

/// `max |dJ(hor)|` over all horizontal lifts at `m`.
pub fn horizontal_residual(sys: &SlowFastSystem, m: &PhasePoint, qc: &Quadrature) -> Result<f64> {
    let (hp, hq) = horizontal_lifts(sys, m, qc)?;
    let dj = momentum_differential(sys, m, qc)?;
    Ok(hp.iter().chain(&hq).map(|h| h.dot(&dj).abs()).fold(0.0, f64::max))
}

/// `max |D Fl^t_Υ · hor(m) − hor(Fl^t_Υ m)|`: horizontal lifts are invariant
/// under the circle action.
pub fn pushforward_residual(sys: &SlowFastSystem, m: &PhasePoint, t: f64, qc: &Quadrature) -> Result<f64> {
    let (hp, hq) = horizontal_lifts(sys, m, qc)?;
    let (mt, jac) = tangent_flow_upsilon(sys, m, t, &qc.integrator)?;
    let (hp_t, hq_t) = horizontal_lifts(sys, &mt, qc)?;
    Ok(hp
        .iter()
        .chain(&hq)
        .zip(hp_t.iter().chain(&hq_t))
        .map(|(a, b)| (&jac * a.as_vector() - b.as_vector()).amax())
        .fold(0.0, f64::max))
}

/// Closed forms of `⟨Q_B⟩`, `𝒮(Q_B)` and `⟨Q_B Q_C⟩` against quadrature on
/// the exact rotation through `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticResiduals {
    pub average: f64,
    pub integral: f64,
    pub product: f64,
}

pub fn quadratic_residuals(
    a: &Matrix2<f64>,
    b: &Matrix2<f64>,
    c: &Matrix2<f64>,
    z: &Vector2<f64>,
    n: usize,
) -> QuadraticResiduals {
    let orbit: Vec<Vector2<f64>> = (0..n).map(|j| exact_flow(a, 2.0 * PI * j as f64 / n as f64, z)).collect();
    let qb: Vec<f64> = orbit.iter().map(|w| q_form(b, w)).collect();
    let qbc: Vec<f64> = orbit.iter().map(|w| q_form(b, w) * q_form(c, w)).collect();
    QuadraticResiduals {
        average: (mean(&qb) - q_form(&avg_q(a, b), z)).abs(),
        integral: (s_of_samples(&qb) - q_form(&s_q(a, b), z)).abs(),
        product: (mean(&qbc) - avg_qq(a, b, c, z)).abs(),
    }
}

fn quadratic(sys: &SlowFastSystem) -> Result<&QuadraticSystem> {
    sys.quadratic()
        .ok_or_else(|| Error::InvalidSystem(format!("{} has no closed forms", sys.name())))
}

/// The quadratic-form identities with the system's own `A`, `B = {h, A}₁`
/// and `C = {ω, A}₁` at `m`.
pub fn system_quadratic_residuals(sys: &SlowFastSystem, m: &PhasePoint, n: usize) -> Result<QuadraticResiduals> {
    let q = quadratic(sys)?;
    let z = Vector2::new(m.y()[0], m.x()[0]);
    Ok(quadratic_residuals(&q.a(m), &q.b_matrix(m), &q.c_matrix(m), &z, n))
}

/// Pipeline values of `Θ`, `⟨K⟩` and `F` against their closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResiduals {
    pub theta: f64,
    pub k_avg: f64,
    /// One entry per requested `ε`.
    pub f: Vec<f64>,
}

pub fn oracle_residuals(sys: &SlowFastSystem, m: &PhasePoint, eps: &[f64], qc: &Quadrature) -> Result<OracleResiduals> {
    let q = quadratic(sys)?;
    let data = OrbitData::new(sys, m, qc)?;
    let mut theta: f64 = 0.0;
    for i in 0..sys.dims().k {
        let (tp, tq) = data.theta(i);
        let (cp, cq) = q.closed_theta(m, i);
        theta = theta.max((tp.value - cp).abs()).max((tq.value - cq).abs());
    }
    let k_avg = (mean(&data.k_nodes()) - q.closed_k_avg(m)).abs();
    let f = eps
        .iter()
        .map(|&e| Ok((approx_integral_f(sys, e, m, qc)? - q.closed_f(e, m)).abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleResiduals { theta, k_avg, f })
}

/// Splitting residuals at the coarse and fine node counts of
/// [`REFINEMENT_NODES`], on orbits integrated with one RK4 step per node.
pub fn splitting_refinement(sys: &SlowFastSystem, m: &PhasePoint) -> Result<(f64, f64)> {
    let at = |n: usize| {
        let integrator = IntegratorConfig::rk4(n).numeric().with_closure_tol(REFINEMENT_CLOSURE_TOL);
        let qc = Quadrature {
            fast_step: REFINEMENT_FAST_STEP,
            ..Quadrature::default()
        };
        splitting_residual(sys, m, &qc.with_nodes(n).with_integrator(integrator))
    };
    Ok((at(REFINEMENT_NODES.0)?, at(REFINEMENT_NODES.1)?))
}
