//! Slow-fast Hamiltonian systems on `ℝ^{2r}_{y,x} × ℝ^{2k}_{p,q}` with the split
//! bracket `{,}₀ + ε{,}₁`.
//!
//! Convention: the Hamiltonian field of `F` acts as `X_F G = {F, G}`, so that
//! `{y, x}₀ = 1`, `{p, q}₁ = 1` and `X_H^{(0)} = (−∂H/∂x, ∂H/∂y, 0, 0)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{finite, Error, Result};
use crate::fd;
use crate::flow::{self, IntegratorConfig};
use crate::phase::{Dims, PhasePoint, TangentVector};
use crate::sl2::QuadraticSystem;
use crate::tolerances::FAST_GRADIENT_FLOOR;

type ScalarFn = Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&PhasePoint) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync>;
type GuardFn = Arc<dyn Fn(&PhasePoint) -> bool + Send + Sync>;

/// Step of the finite differences of a detected frequency. Each evaluation is
/// a period detection accurate to ~1e-10, so the step stays well above that.
const DETECTED_OMEGA_STEP: f64 = 1e-3;

/// A slow-fast Hamiltonian problem: the Hamiltonian, its derivatives, the
/// frequency of the periodic fast flow and the admissible domain.
///
/// Missing derivatives fall back to fourth-order central differences; a
/// missing frequency falls back to period detection.
#[derive(Clone)]
pub struct SlowFastSystem {
    name: String,
    dims: Dims,
    energy: ScalarFn,
    gradient: Option<VectorFn>,
    hessian: Option<MatrixFn>,
    frequency: Option<ScalarFn>,
    frequency_gradient: Option<VectorFn>,
    domain_guard: Option<GuardFn>,
    quadratic: Option<Arc<QuadraticSystem>>,
}

impl fmt::Debug for SlowFastSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlowFastSystem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .field("analytic_frequency", &self.frequency.is_some())
            .field("quadratic", &self.quadratic.is_some())
            .finish()
    }
}

pub struct SystemBuilder {
    inner: SlowFastSystem,
}

impl SystemBuilder {
    pub fn gradient(mut self, f: impl Fn(&PhasePoint) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.inner.gradient = Some(Arc::new(f));
        self
    }

    pub fn hessian(mut self, f: impl Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.inner.hessian = Some(Arc::new(f));
        self
    }

    pub fn frequency(mut self, f: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static) -> Self {
        self.inner.frequency = Some(Arc::new(f));
        self
    }

    pub fn frequency_gradient(
        mut self,
        f: impl Fn(&PhasePoint) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.inner.frequency_gradient = Some(Arc::new(f));
        self
    }

    pub fn domain_guard(mut self, f: impl Fn(&PhasePoint) -> bool + Send + Sync + 'static) -> Self {
        self.inner.domain_guard = Some(Arc::new(f));
        self
    }

    pub(crate) fn quadratic(mut self, q: Arc<QuadraticSystem>) -> Self {
        self.inner.quadratic = Some(q);
        self
    }

    pub fn build(self) -> SlowFastSystem {
        self.inner
    }
}

impl SlowFastSystem {
    pub fn builder(
        name: impl Into<String>,
        dims: Dims,
        energy: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static,
    ) -> SystemBuilder {
        SystemBuilder {
            inner: SlowFastSystem {
                name: name.into(),
                dims,
                energy: Arc::new(energy),
                gradient: None,
                hessian: None,
                frequency: None,
                frequency_gradient: None,
                domain_guard: None,
                quadratic: None,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Closed-form data when the system is of the form `h + ω Q_A` with `r = 1`.
    pub fn quadratic(&self) -> Option<&QuadraticSystem> {
        self.quadratic.as_deref()
    }

    pub fn has_analytic_frequency(&self) -> bool {
        self.frequency.is_some()
    }

    pub fn energy(&self, m: &PhasePoint) -> f64 {
        (self.energy)(m)
    }

    /// `(∂H/∂y, ∂H/∂x, ∂H/∂p, ∂H/∂q)`.
    pub fn gradient(&self, m: &PhasePoint) -> Result<DVector<f64>> {
        let g = match &self.gradient {
            Some(f) => f(m),
            None => fd::gradient(|pt| Ok(self.energy(pt)), m)?,
        };
        self.dims.check(g.len())?;
        if g.iter().all(|c| c.is_finite()) {
            Ok(g)
        } else {
            Err(Error::Numerics(format!("non-finite gradient of H at {:?}", m.as_slice())))
        }
    }

    pub fn hessian(&self, m: &PhasePoint) -> Result<DMatrix<f64>> {
        match &self.hessian {
            Some(f) => Ok(f(m)),
            None => {
                let jac = fd::jacobian(|pt| self.gradient(pt), m)?;
                Ok((&jac + jac.transpose()) * 0.5)
            }
        }
    }

    /// Frequency ω of the fast flow through `m`.
    pub fn omega(&self, m: &PhasePoint) -> Result<f64> {
        let w = match &self.frequency {
            Some(f) => f(m),
            None => {
                let period = flow::find_period(self, m, &IntegratorConfig::default())?;
                2.0 * std::f64::consts::PI / period
            }
        };
        let w = finite(w, "frequency")?;
        if w > 0.0 {
            Ok(w)
        } else {
            Err(Error::Domain(format!("frequency {w} is not positive")))
        }
    }

    pub fn omega_gradient(&self, m: &PhasePoint) -> Result<DVector<f64>> {
        match (&self.frequency_gradient, &self.frequency) {
            (Some(g), _) => Ok(g(m)),
            (None, Some(_)) => fd::gradient(|pt| self.omega(pt), m),
            (None, None) => {
                let n = self.dims.len();
                let mut out = DVector::zeros(n);
                for i in 0..n {
                    out[i] = fd::central4(|s| self.omega(&m.shifted(i, s)), DETECTED_OMEGA_STEP)?;
                }
                Ok(out)
            }
        }
    }

    pub fn is_admissible(&self, m: &PhasePoint) -> bool {
        if m.dims() != self.dims || !m.is_finite() {
            return false;
        }
        match &self.domain_guard {
            Some(guard) => guard(m),
            None => match self.gradient(m) {
                Ok(g) => g.rows(0, 2 * self.dims.r).norm() >= FAST_GRADIENT_FLOOR,
                Err(_) => false,
            },
        }
    }

    pub fn check_admissible(&self, m: &PhasePoint) -> Result<()> {
        if m.dims() != self.dims {
            return Err(Error::Dimension {
                expected: self.dims.len(),
                got: m.dims().len(),
            });
        }
        if self.is_admissible(m) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{:?} rejected by the domain guard", m.as_slice())))
        }
    }

    /// The generator `Υ = X⁽⁰⁾/ω` of the circle action.
    pub fn upsilon(&self, m: &PhasePoint) -> Result<TangentVector> {
        let g = self.gradient(m)?;
        let w = self.omega(m)?;
        Ok(fast_field(self.dims, &g).scaled(1.0 / w))
    }

    /// Jacobian of `X⁽⁰⁾`: rows are `(−∂²H/∂x∂·, ∂²H/∂y∂·, 0, 0)`.
    pub fn x0_jacobian(&self, m: &PhasePoint) -> Result<DMatrix<f64>> {
        let hess = self.hessian(m)?;
        let d = self.dims;
        let mut jac = DMatrix::zeros(d.len(), d.len());
        for i in 0..d.r {
            jac.set_row(d.y_index(i), &(-hess.row(d.x_index(i))));
            jac.set_row(d.x_index(i), &hess.row(d.y_index(i)));
        }
        Ok(jac)
    }
}

/// `X⁽⁰⁾_F` from the full gradient of `F`.
pub fn fast_field(dims: Dims, grad: &DVector<f64>) -> TangentVector {
    let mut v = DVector::zeros(dims.len());
    for i in 0..dims.r {
        v[dims.y_index(i)] = -grad[dims.x_index(i)];
        v[dims.x_index(i)] = grad[dims.y_index(i)];
    }
    TangentVector::from_vector(dims, v).expect("dimension fixed by dims")
}

/// `X⁽¹⁾_F` from the full gradient of `F`.
pub fn slow_field(dims: Dims, grad: &DVector<f64>) -> TangentVector {
    let mut v = DVector::zeros(dims.len());
    for i in 0..dims.k {
        v[dims.p_index(i)] = -grad[dims.q_index(i)];
        v[dims.q_index(i)] = grad[dims.p_index(i)];
    }
    TangentVector::from_vector(dims, v).expect("dimension fixed by dims")
}

/// A scalar field that may carry an analytic gradient.
pub trait ScalarField: Sync {
    fn value(&self, m: &PhasePoint) -> Result<f64>;

    fn gradient(&self, _m: &PhasePoint) -> Option<Result<DVector<f64>>> {
        None
    }
}

/// Infallible closure field without a gradient.
pub struct FnField<F>(pub F);

impl<F> ScalarField for FnField<F>
where
    F: Fn(&PhasePoint) -> f64 + Sync,
{
    fn value(&self, m: &PhasePoint) -> Result<f64> {
        finite((self.0)(m), "field value")
    }
}

/// Fallible closure field without a gradient, e.g. a quadrature result.
pub struct TryField<F>(pub F);

impl<F> ScalarField for TryField<F>
where
    F: Fn(&PhasePoint) -> Result<f64> + Sync,
{
    fn value(&self, m: &PhasePoint) -> Result<f64> {
        (self.0)(m)
    }
}

/// Closure field with an analytic gradient.
pub struct AnalyticField<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> ScalarField for AnalyticField<F, G>
where
    F: Fn(&PhasePoint) -> f64 + Sync,
    G: Fn(&PhasePoint) -> DVector<f64> + Sync,
{
    fn value(&self, m: &PhasePoint) -> Result<f64> {
        finite((self.value)(m), "field value")
    }

    fn gradient(&self, m: &PhasePoint) -> Option<Result<DVector<f64>>> {
        Some(Ok((self.gradient)(m)))
    }
}

pub fn field<F: Fn(&PhasePoint) -> f64 + Sync>(f: F) -> FnField<F> {
    FnField(f)
}

pub fn try_field<F: Fn(&PhasePoint) -> Result<f64> + Sync>(f: F) -> TryField<F> {
    TryField(f)
}

pub fn analytic<F, G>(value: F, gradient: G) -> AnalyticField<F, G>
where
    F: Fn(&PhasePoint) -> f64 + Sync,
    G: Fn(&PhasePoint) -> DVector<f64> + Sync,
{
    AnalyticField { value, gradient }
}

/// The Hamiltonian as a scalar field.
pub struct Energy<'a>(pub &'a SlowFastSystem);

impl ScalarField for Energy<'_> {
    fn value(&self, m: &PhasePoint) -> Result<f64> {
        finite(self.0.energy(m), "energy")
    }

    fn gradient(&self, m: &PhasePoint) -> Option<Result<DVector<f64>>> {
        Some(self.0.gradient(m))
    }
}

/// Gradient of a field: analytic when available, otherwise central differences.
pub fn gradient_of(f: &dyn ScalarField, m: &PhasePoint) -> Result<DVector<f64>> {
    match f.gradient(m) {
        Some(g) => g,
        None => fd::gradient(|pt| f.value(pt), m),
    }
}

/// The unperturbed field `X⁽⁰⁾_H = (−∂H/∂x, ∂H/∂y, 0, 0)`.
pub fn eval_x0(sys: &SlowFastSystem, m: &PhasePoint) -> Result<TangentVector> {
    sys.check_admissible(m)?;
    Ok(fast_field(sys.dims(), &sys.gradient(m)?))
}

/// The perturbation field `X⁽¹⁾_H = (0, 0, −∂H/∂q, ∂H/∂p)`.
pub fn eval_x1(sys: &SlowFastSystem, m: &PhasePoint) -> Result<TangentVector> {
    sys.check_admissible(m)?;
    Ok(slow_field(sys.dims(), &sys.gradient(m)?))
}

/// `X_H = X⁽⁰⁾ + ε X⁽¹⁾`.
pub fn eval_xh(sys: &SlowFastSystem, eps: f64, m: &PhasePoint) -> Result<TangentVector> {
    sys.check_admissible(m)?;
    let g = sys.gradient(m)?;
    let x0 = fast_field(sys.dims(), &g);
    let x1 = slow_field(sys.dims(), &g);
    Ok(&x0 + &x1.scaled(eps))
}

/// `{F, G}₀ = Σ ∂F/∂yⁱ ∂G/∂xⁱ − ∂F/∂xⁱ ∂G/∂yⁱ`.
pub fn bracket_fast(f: &dyn ScalarField, g: &dyn ScalarField, m: &PhasePoint) -> Result<f64> {
    let df = gradient_of(f, m)?;
    let dg = gradient_of(g, m)?;
    let d = m.dims();
    let value = (0..d.r)
        .map(|i| df[d.y_index(i)] * dg[d.x_index(i)] - df[d.x_index(i)] * dg[d.y_index(i)])
        .sum();
    finite(value, "fast bracket")
}

/// `{F, G}₁ = Σ ∂F/∂pⁱ ∂G/∂qⁱ − ∂F/∂qⁱ ∂G/∂pⁱ`.
pub fn bracket_slow(f: &dyn ScalarField, g: &dyn ScalarField, m: &PhasePoint) -> Result<f64> {
    let df = gradient_of(f, m)?;
    let dg = gradient_of(g, m)?;
    finite(slow_bracket_of_gradients(m.dims(), &df, &dg), "slow bracket")
}

pub(crate) fn slow_bracket_of_gradients(d: Dims, df: &DVector<f64>, dg: &DVector<f64>) -> f64 {
    (0..d.k)
        .map(|i| df[d.p_index(i)] * dg[d.q_index(i)] - df[d.q_index(i)] * dg[d.p_index(i)])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::phase::{Bivector, Covector};

    fn oscillator(omega0: f64) -> SlowFastSystem {
        let dims = Dims::new(1, 1).unwrap();
        SlowFastSystem::builder("osc", dims, move |m| {
            omega0 * (m.y()[0].powi(2) + m.x()[0].powi(2)) / 2.0
        })
        .frequency(move |_| omega0)
        .build()
    }

    fn coord(index: usize) -> impl ScalarField {
        analytic(move |m: &PhasePoint| m[index], move |m: &PhasePoint| {
            let mut g = DVector::zeros(m.dims().len());
            g[index] = 1.0;
            g
        })
    }

    #[test]
    fn x0_of_harmonic_oscillator() {
        let sys = oscillator(2.5);
        let m = PhasePoint::new(&[1.0], &[0.0], &[0.0], &[0.0]).unwrap();
        let v = eval_x0(&sys, &m).unwrap();
        assert!(v.dy()[0].abs() < 1e-9);
        assert!((v.dx()[0] - 2.5).abs() < 1e-9);
        assert_eq!(v.slow(), &[0.0, 0.0]);
    }

    #[test]
    fn x0_vanishes_at_equilibrium_with_permissive_guard() {
        let dims = Dims::new(1, 1).unwrap();
        let sys = SlowFastSystem::builder("eq", dims, |m| (m.y()[0].powi(2) + m.x()[0].powi(2)) / 2.0)
            .domain_guard(|_| true)
            .build();
        let m = PhasePoint::new(&[0.0], &[0.0], &[1.0], &[2.0]).unwrap();
        assert!(eval_x0(&sys, &m).unwrap().norm() < 1e-12);
        // the default guard rejects the same point
        assert!(matches!(eval_x0(&oscillator(1.0), &m), Err(Error::Domain(_))));
    }

    #[test]
    fn x1_of_osc_const_is_slow_rotation() {
        let sys = catalog::build("osc-const", &Default::default()).unwrap();
        let m = PhasePoint::new(&[0.3], &[-0.7], &[0.4], &[1.1]).unwrap();
        let v = eval_x1(&sys, &m).unwrap();
        assert_eq!(v.fast(), &[0.0, 0.0]);
        assert!((v.dp()[0] + 1.1).abs() < 1e-14);
        assert!((v.dq()[0] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn x1_vanishes_without_slow_dependence() {
        let m = PhasePoint::new(&[0.3], &[-0.7], &[0.4], &[1.1]).unwrap();
        assert!(eval_x1(&oscillator(1.0), &m).unwrap().norm() < 1e-12);
    }

    #[test]
    fn xh_is_affine_in_eps() {
        let sys = catalog::build("twist2", &Default::default()).unwrap();
        let m = PhasePoint::new(&[0.8], &[-0.2], &[0.3], &[0.6]).unwrap();
        let x0 = eval_x0(&sys, &m).unwrap();
        let x1 = eval_x1(&sys, &m).unwrap();
        assert_eq!(eval_xh(&sys, 0.0, &m).unwrap(), x0);
        let eps = 0.37;
        let diff = &eval_xh(&sys, 2.0 * eps, &m).unwrap() - &eval_xh(&sys, eps, &m).unwrap();
        assert!((&diff - &x1.scaled(eps)).norm() < 1e-14);
    }

    #[test]
    fn xh_is_contraction_with_split_poisson_tensor() {
        let sys = catalog::build("twist2", &Default::default()).unwrap();
        let m = PhasePoint::new(&[0.8], &[-0.2], &[0.3], &[0.6]).unwrap();
        let eps = 0.05;
        let dims = sys.dims();
        let mut pi = Bivector::fast_canonical(dims);
        pi += Bivector::slow_canonical(dims).scaled(eps);
        let dh = Covector::from_vector(dims, sys.gradient(&m).unwrap()).unwrap();
        let via_tensor = pi.contract(&dh);
        let direct = eval_xh(&sys, eps, &m).unwrap();
        assert!((&via_tensor - &direct).norm() < 1e-15);
    }

    #[test]
    fn canonical_brackets() {
        let m = PhasePoint::new(&[0.2], &[0.9], &[-0.4], &[0.1]).unwrap();
        let (y, x, p, q) = (coord(0), coord(1), coord(2), coord(3));
        assert_eq!(bracket_fast(&y, &x, &m).unwrap(), 1.0);
        assert_eq!(bracket_fast(&p, &q, &m).unwrap(), 0.0);
        assert_eq!(bracket_slow(&p, &q, &m).unwrap(), 1.0);
        assert_eq!(bracket_slow(&y, &x, &m).unwrap(), 0.0);
    }

    #[test]
    fn brackets_are_antisymmetric_and_leibniz() {
        let sys = catalog::build("twist2", &Default::default()).unwrap();
        let m = PhasePoint::new(&[0.5], &[0.4], &[0.3], &[-0.2]).unwrap();
        let h = Energy(&sys);
        let g = field(|m: &PhasePoint| m.y()[0] * m.q()[0] + m.x()[0].powi(3));
        let k = field(|m: &PhasePoint| (m.x()[0] * m.p()[0]).sin());
        let ab = bracket_fast(&h, &g, &m).unwrap();
        let ba = bracket_fast(&g, &h, &m).unwrap();
        assert!((ab + ba).abs() < 1e-9);
        // analytic gradients on both sides: antisymmetry is exact
        let p = coord(2);
        assert_eq!(bracket_slow(&h, &p, &m).unwrap(), -bracket_slow(&p, &h, &m).unwrap());

        let gk = field(|m: &PhasePoint| {
            (m.y()[0] * m.q()[0] + m.x()[0].powi(3)) * (m.x()[0] * m.p()[0]).sin()
        });
        let lhs = bracket_fast(&gk, &h, &m).unwrap();
        let rhs = g.value(&m).unwrap() * bracket_fast(&k, &h, &m).unwrap()
            + k.value(&m).unwrap() * bracket_fast(&g, &h, &m).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn finite_difference_gradient_matches_analytic() {
        let sys = catalog::build("twist2", &Default::default()).unwrap();
        let m = PhasePoint::new(&[0.5], &[0.4], &[0.3], &[-0.2]).unwrap();
        let exact = sys.gradient(&m).unwrap();
        let approx = fd::gradient(|pt| Ok(sys.energy(pt)), &m).unwrap();
        assert!((exact - approx).amax() < 1e-9);
    }
}
