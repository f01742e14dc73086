//! Fourth-order central difference stencils.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::phase::PhasePoint;

/// Relative step of the gradient fallback: `h = max(1e-5, 1e-5·|x|)`.
pub(crate) fn coordinate_step(x: f64) -> f64 {
    1e-5_f64.max(1e-5 * x.abs())
}

/// Sum of absolute stencil weights times `1/h`; multiplies the noise in
/// the sampled values into noise in the derivative.
pub(crate) const STENCIL_GAIN: f64 = 18.0 / 12.0;

/// `(−f(2h) + 8f(h) − 8f(−h) + f(−2h)) / 12h`.
pub(crate) fn central4<F>(mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fp2 = f(2.0 * h)?;
    let fp1 = f(h)?;
    let fm1 = f(-h)?;
    let fm2 = f(-2.0 * h)?;
    Ok((-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h))
}

pub(crate) fn central4_vector<F>(mut f: F, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64) -> Result<DVector<f64>>,
{
    let fp2 = f(2.0 * h)?;
    let fp1 = f(h)?;
    let fm1 = f(-h)?;
    let fm2 = f(-2.0 * h)?;
    Ok((-fp2 + fp1 * 8.0 - fm1 * 8.0 + fm2) / (12.0 * h))
}

/// Gradient of a scalar function of the phase point.
pub(crate) fn gradient<F>(f: F, m: &PhasePoint) -> Result<DVector<f64>>
where
    F: Fn(&PhasePoint) -> Result<f64>,
{
    let n = m.dims().len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let h = coordinate_step(m[i]);
        out[i] = central4(|s| f(&m.shifted(i, s)), h)?;
    }
    Ok(out)
}

/// Jacobian of a vector-valued function, column `j` is `∂F/∂m_j`.
pub(crate) fn jacobian<F>(f: F, m: &PhasePoint) -> Result<DMatrix<f64>>
where
    F: Fn(&PhasePoint) -> Result<DVector<f64>>,
{
    let n = m.dims().len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = coordinate_step(m[j]);
        let col = central4_vector(|s| f(&m.shifted(j, s)), h)?;
        out.set_column(j, &col);
    }
    Ok(out)
}
