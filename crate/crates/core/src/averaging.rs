//! The averaging operator `⟨·⟩` and the integrating operator `𝒮` along the
//! circle action, by quadrature over an [`OrbitSample`].
//!
//! `⟨A⟩ = (1/2π)∫₀^{2π} (Fl^t_Υ)^*A dt` is the periodic trapezoidal rule.
//! `𝒮(A) = (1/2π)∫₀^{2π} (t − π)(Fl^t_Υ)^*A dt` has a sawtooth weight, so the
//! plain rule is only first order; instead the samples are expanded as
//! `Σ cₙ e^{int}` and `𝒮 = −i Σ_{n≠0} cₙ/n`, which is exact on trigonometric
//! polynomials of degree below `N/2`. The weighted sum is kept as
//! [`s_function_direct`] for debugging.
//!
//! Every result carries an error estimate: the difference against the same
//! rule on every second node.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fd;
use crate::flow::{flow_upsilon, tangent_flow_upsilon, IntegratorConfig, OrbitSample};
use crate::phase::{Covector, PhasePoint, TangentVector};
use crate::system::{gradient_of, ScalarField, SlowFastSystem};
use crate::tolerances::FLOW_FD_STEP;

/// A quadrature value with its `N` vs `N/2` error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Averaged<T> {
    pub value: T,
    pub error: f64,
}

/// Orbit average of sampled values.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Quadrature weights `wⱼ` with `𝒮 ≈ Σ wⱼ f(t_j)`:
/// `wⱼ = −(2/N) Σ_{n=1}^{N/2−1} sin(n tⱼ)/n`. The Nyquist mode is dropped;
/// its antiderivative is not resolved by the sample.
pub fn s_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            -(2.0 / n as f64) * (1..n / 2).map(|k| (k as f64 * t).sin() / k as f64).sum::<f64>()
        })
        .collect()
}

/// `𝒮` at the first node from values at the uniform nodes.
pub fn s_of_samples(values: &[f64]) -> f64 {
    s_along_orbit(values)[0]
}

/// `𝒮(f)` at every node of the orbit at once: node `k` is the base point of
/// the shifted orbit, so this is the circular correlation with the weights,
/// computed by FFT.
pub fn s_along_orbit(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (idx, c) in buf.iter_mut().enumerate() {
        let freq = if idx <= n / 2 { idx as i64 } else { idx as i64 - n as i64 };
        if freq == 0 || (n.is_multiple_of(2) && idx == n / 2) {
            *c = Complex::new(0.0, 0.0);
        } else {
            // −i/n; the 1/N of the forward transform is folded in below
            *c *= Complex::new(0.0, -1.0 / freq as f64);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Even-node values of a sample, for the error estimate.
fn halved<T: Clone>(values: &[T]) -> Option<Vec<T>> {
    (values.len().is_multiple_of(2) && values.len() >= 8).then(|| values.iter().step_by(2).cloned().collect())
}

fn estimate(full: f64, half: Option<f64>) -> f64 {
    half.map_or(f64::NAN, |h| (full - h).abs())
}

/// Values of a scalar field at the orbit nodes.
pub fn sample_values(f: &dyn ScalarField, orbit: &OrbitSample) -> Result<Vec<f64>> {
    orbit.states.iter().map(|s| f.value(s)).collect()
}

/// `⟨f⟩(m) = (1/N) Σ f(states[j])`.
pub fn average_function(f: &dyn ScalarField, orbit: &OrbitSample) -> Result<Averaged<f64>> {
    let v = sample_values(f, orbit)?;
    Ok(average_values(&v))
}

pub fn average_values(v: &[f64]) -> Averaged<f64> {
    let value = mean(v);
    Averaged {
        value,
        error: estimate(value, halved(v).map(|h| mean(&h))),
    }
}

/// `𝒮(f)(m)` by the spectral rule.
pub fn s_function(f: &dyn ScalarField, orbit: &OrbitSample) -> Result<Averaged<f64>> {
    let v = sample_values(f, orbit)?;
    Ok(s_values(&v))
}

pub fn s_values(v: &[f64]) -> Averaged<f64> {
    let value = s_of_samples(v);
    Averaged {
        value,
        error: estimate(value, halved(v).map(|h| s_of_samples(&h))),
    }
}

/// `𝒮(f)(m)` by the weighted trapezoidal sum `(1/N) Σ (tⱼ − π) f(tⱼ)`, with
/// the jump of the weight at `t = 0` split evenly. Second order only.
pub fn s_function_direct(f: &dyn ScalarField, orbit: &OrbitSample) -> Result<f64> {
    let v = sample_values(f, orbit)?;
    let n = v.len() as f64;
    Ok(v.iter()
        .zip(&orbit.times)
        .skip(1)
        .map(|(f, t)| (t - PI) * f)
        .sum::<f64>()
        / n)
}

/// `L_Υ f(m) = df(Υ(m))`, analytic when `f` carries a gradient, otherwise a
/// fourth-order central difference along the flow with step `1e-5`.
pub fn lie_derivative_upsilon(
    sys: &SlowFastSystem,
    f: &dyn ScalarField,
    m: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    if let Some(g) = f.gradient(m) {
        let g = g?;
        return Ok(sys.upsilon(m)?.as_vector().dot(&g));
    }
    fd::central4(|t| f.value(&flow_upsilon(sys, m, t, cfg)?), FLOW_FD_STEP)
}

/// A vector field given by a closure.
pub type VectorField<'a> = dyn Fn(&PhasePoint) -> Result<TangentVector> + Sync + 'a;
/// A 1-form given by a closure.
pub type OneForm<'a> = dyn Fn(&PhasePoint) -> Result<Covector> + Sync + 'a;

/// Pullbacks `D Fl^{-1}_j · X(states[j])` at every node.
pub fn pulled_back_vectors(x: &VectorField, orbit: &OrbitSample) -> Result<Vec<DVector<f64>>> {
    let maps = orbit.tangents()?;
    orbit
        .states
        .iter()
        .zip(maps)
        .zip(&orbit.times)
        .map(|((s, jac), &t)| {
            let v = x(s)?;
            jac.clone()
                .lu()
                .solve(v.as_vector())
                .ok_or(Error::SingularTangent { t })
        })
        .collect()
}

fn average_columns(cols: &[DVector<f64>]) -> DVector<f64> {
    cols.iter().fold(DVector::zeros(cols[0].len()), |acc, c| acc + c) / cols.len() as f64
}

fn s_columns(cols: &[DVector<f64>]) -> DVector<f64> {
    let w = s_weights(cols.len());
    cols.iter()
        .zip(&w)
        .fold(DVector::zeros(cols[0].len()), |acc, (c, w)| acc + c * *w)
}

fn vector_estimate(full: &DVector<f64>, half: Option<DVector<f64>>) -> f64 {
    half.map_or(f64::NAN, |h| (full - h).amax())
}

/// `⟨X⟩(m) = (1/N) Σ D Fl_j^{-1} X(states[j])`.
pub fn average_vector_field(x: &VectorField, orbit: &OrbitSample) -> Result<Averaged<TangentVector>> {
    let cols = pulled_back_vectors(x, orbit)?;
    let value = average_columns(&cols);
    let error = vector_estimate(&value, halved(&cols).map(|h| average_columns(&h)));
    Ok(Averaged {
        value: TangentVector::from_vector(orbit.dims(), value)?,
        error,
    })
}

/// `𝒮(X)(m)` with the spectral weights.
pub fn s_vector_field(x: &VectorField, orbit: &OrbitSample) -> Result<Averaged<TangentVector>> {
    let cols = pulled_back_vectors(x, orbit)?;
    let value = s_columns(&cols);
    let error = vector_estimate(&value, halved(&cols).map(|h| s_columns(&h)));
    Ok(Averaged {
        value: TangentVector::from_vector(orbit.dims(), value)?,
        error,
    })
}

/// `⟨α⟩(m) = (1/N) Σ α(states[j]) · D Fl_j`.
pub fn average_one_form(alpha: &OneForm, orbit: &OrbitSample) -> Result<Averaged<Covector>> {
    let maps = orbit.tangents()?;
    let rows: Vec<DVector<f64>> = orbit
        .states
        .iter()
        .zip(maps)
        .map(|(s, jac)| Ok(jac.tr_mul(alpha(s)?.as_vector())))
        .collect::<Result<_>>()?;
    let value = average_columns(&rows);
    let error = vector_estimate(&value, halved(&rows).map(|h| average_columns(&h)));
    Ok(Averaged {
        value: Covector::from_vector(orbit.dims(), value)?,
        error,
    })
}

/// `L_Υ X(m) = d/dt|₀ D Fl^{-t}·X(Fl^t m)` by a central difference in `t`.
pub fn lie_derivative_vector_field(
    sys: &SlowFastSystem,
    x: &VectorField,
    m: &PhasePoint,
    cfg: &IntegratorConfig,
) -> Result<TangentVector> {
    let pulled = |t: f64| -> Result<DVector<f64>> {
        let (mt, jac): (PhasePoint, DMatrix<f64>) = tangent_flow_upsilon(sys, m, t, cfg)?;
        let v = x(&mt)?;
        jac.lu().solve(v.as_vector()).ok_or(Error::SingularTangent { t })
    };
    let d = fd::central4_vector(pulled, FLOW_FD_STEP)?;
    TangentVector::from_vector(m.dims(), d)
}

/// A scalar field whose values are orbit quadratures, e.g. `p ↦ 𝒮(f)(p)`.
pub fn quadrature_field<'a>(
    f: impl Fn(&PhasePoint) -> Result<f64> + Sync + 'a,
) -> impl ScalarField + 'a {
    crate::system::TryField(f)
}

/// `⟨f⟩` as a scalar field: each evaluation samples the orbit through its argument.
pub fn averaged_field<'a>(
    sys: &'a SlowFastSystem,
    f: Arc<dyn ScalarField + Send + 'a>,
    n: usize,
    cfg: &'a IntegratorConfig,
) -> impl ScalarField + 'a {
    crate::system::TryField(move |m: &PhasePoint| {
        let orbit = crate::flow::sample_states(sys, m, n, cfg)?;
        Ok(average_function(f.as_ref(), &orbit)?.value)
    })
}

/// `𝒮(f)` as a scalar field.
pub fn s_field<'a>(
    sys: &'a SlowFastSystem,
    f: Arc<dyn ScalarField + Send + 'a>,
    n: usize,
    cfg: &'a IntegratorConfig,
) -> impl ScalarField + 'a {
    crate::system::TryField(move |m: &PhasePoint| {
        let orbit = crate::flow::sample_states(sys, m, n, cfg)?;
        Ok(s_function(f.as_ref(), &orbit)?.value)
    })
}

/// Gradient of a scalar field, for assembling 1-forms from fields.
pub fn differential(f: &dyn ScalarField, m: &PhasePoint) -> Result<Covector> {
    Covector::from_vector(m.dims(), gradient_of(f, m)?)
}
