//! Explicit Runge–Kutta integrators: classical fixed-step RK4 and the
//! Dormand–Prince 5(4) embedded pair with step-size control.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Right-hand side `ẏ = f(t, y)`. Errors abort the integration, which is how
/// domain exits propagate.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    fn eval(&mut self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        self(t, y)
    }
}

pub fn rk4_step(f: &mut impl Rhs, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = f.eval(t, y)?;
    let k2 = f.eval(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f.eval(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f.eval(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// `steps` equal RK4 steps from `t0` to `t1`.
pub fn rk4(f: &mut impl Rhs, y0: &DVector<f64>, t0: f64, t1: f64, steps: usize) -> Result<DVector<f64>> {
    let steps = steps.max(1);
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.clone();
    for s in 0..steps {
        y = rk4_step(f, t0 + s as f64 * h, &y, h)?;
    }
    Ok(y)
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights are the last row of A (FSAL); these are fifth minus fourth
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4). The step size is carried between calls to
/// [`Dopri5::advance`] so that sampling a trajectory at many output times
/// does not restart the controller.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    h: Option<f64>,
    t_accepted: f64,
    accepted: usize,
    rejected: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Result<Self> {
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(Error::Numerics(format!(
                "integrator tolerances must be positive (rtol {rtol}, atol {atol})"
            )));
        }
        Ok(Self {
            rtol,
            atol,
            max_steps: 1_000_000,
            h: None,
            t_accepted: 0.0,
            accepted: 0,
            rejected: 0,
        })
    }

    /// Time of the last accepted step; after a failed [`advance`](Self::advance)
    /// this is where the trajectory was last known to be valid.
    pub fn last_accepted_time(&self) -> f64 {
        self.t_accepted
    }

    pub fn stats(&self) -> (usize, usize) {
        (self.accepted, self.rejected)
    }

    fn error_norm(&self, y: &DVector<f64>, y_new: &DVector<f64>, err: &DVector<f64>) -> f64 {
        let n = y.len() as f64;
        let sum: f64 = (0..y.len())
            .map(|i| {
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }

    /// Integrates from `(t0, y0)` to exactly `t1` (either direction).
    pub fn advance(&mut self, f: &mut impl Rhs, t0: f64, y0: &DVector<f64>, t1: f64) -> Result<DVector<f64>> {
        let span = t1 - t0;
        self.t_accepted = t0;
        if span == 0.0 {
            return Ok(y0.clone());
        }
        let dir = span.signum();
        let mut t = t0;
        let mut y = y0.clone();
        let mut k0 = f.eval(t, &y)?;
        let mut h = match self.h {
            Some(h) => h.abs(),
            None => self.initial_step(&y, &k0),
        };
        let mut steps = 0;
        while dir * (t1 - t) > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::Numerics(format!("step limit reached at t = {t}")));
            }
            let natural = h;
            let mut last = false;
            if h >= (t1 - t).abs() {
                h = (t1 - t).abs();
                last = true;
            }
            let hs = dir * h;
            let mut k = vec![k0.clone()];
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate() {
                    if A[s][j] != 0.0 {
                        ys.axpy(hs * A[s][j], kj, 1.0);
                    }
                }
                k.push(f.eval(t + C[s] * hs, &ys)?);
            }
            let mut y_new = y.clone();
            let mut err = DVector::zeros(y.len());
            for s in 0..7 {
                if s < 6 && A[6][s] != 0.0 {
                    y_new.axpy(hs * A[6][s], &k[s], 1.0);
                }
                err.axpy(hs * E[s], &k[s], 1.0);
            }
            let norm = self.error_norm(&y, &y_new, &err);
            if !norm.is_finite() {
                return Err(Error::Numerics(format!("non-finite local error at t = {t}")));
            }
            if norm <= 1.0 {
                t = if last { t1 } else { t + hs };
                y = y_new;
                k0 = k.swap_remove(6);
                self.t_accepted = t;
                self.accepted += 1;
                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                // carry the controller's step, not the one clipped to t1
                h = if last { natural.max(h * factor) } else { h * factor };
                self.h = Some(h);
            } else {
                self.rejected += 1;
                h *= (0.9 * norm.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Numerics(format!("step size underflow at t = {t}")));
                }
            }
        }
        Ok(y)
    }

    fn initial_step(&self, y: &DVector<f64>, f0: &DVector<f64>) -> f64 {
        let scale: DVector<f64> = y.map(|v| self.atol + self.rtol * v.abs());
        let d0 = y.component_div(&scale).norm() / (y.len() as f64).sqrt();
        let d1 = f0.component_div(&scale).norm() / (y.len() as f64).sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(0.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rotation(_t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![-y[1], y[0]]))
    }

    #[test]
    fn rk4_is_fourth_order() {
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let err = |steps| {
            let y = rk4(&mut rotation, &y0, 0.0, 1.0, steps).unwrap();
            ((y[0] - 1f64.cos()).powi(2) + (y[1] - 1f64.sin()).powi(2)).sqrt()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn dopri_meets_tolerance_and_reaches_endpoint() {
        let mut solver = Dopri5::new(1e-10, 1e-12).unwrap();
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let mut y = y0.clone();
        let mut t = 0.0;
        for i in 1..=50 {
            let t1 = i as f64 * 0.4;
            y = solver.advance(&mut rotation, t, &y, t1).unwrap();
            t = t1;
        }
        assert_abs_diff_eq!(y[0], 20f64.cos(), epsilon = 1e-8);
        assert_abs_diff_eq!(y[1], 20f64.sin(), epsilon = 1e-8);
        assert_eq!(solver.last_accepted_time(), 20.0);
        // backwards
        let back = solver.advance(&mut rotation, 20.0, &y, 0.0).unwrap();
        assert_abs_diff_eq!((back - y0).norm(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn rhs_errors_abort() {
        let mut solver = Dopri5::new(1e-8, 1e-10).unwrap();
        let mut f = |t: f64, y: &DVector<f64>| {
            if t > 1.0 {
                Err(Error::Domain("left".into()))
            } else {
                Ok(y.clone())
            }
        };
        let y0 = DVector::from_vec(vec![1.0]);
        let err = solver.advance(&mut f, 0.0, &y0, 2.0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(solver.last_accepted_time() <= 1.0);
    }

    #[test]
    fn rejects_nonpositive_tolerances() {
        assert!(Dopri5::new(0.0, 1e-12).is_err());
    }
}
