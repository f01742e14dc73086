//! Fixtures shared by the criterion benches.

use slowfast::catalog::{self, Params};
use slowfast::{PhasePoint, SlowFastSystem};

/// A built-in system with default parameters.
pub fn system(id: &str) -> SlowFastSystem {
    catalog::build(id, &Params::new()).expect("built-in system")
}

/// The reference starting point of the drift studies.
pub fn reference_point() -> PhasePoint {
    PhasePoint::new(&[1.0], &[0.2], &[0.5], &[0.1]).expect("valid point")
}

/// `n` samples of a smooth periodic signal, for quadrature kernels.
pub fn periodic_signal(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let t = std::f64::consts::TAU * j as f64 / n as f64;
            (t.cos() + 0.3 * (2.0 * t).sin()).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_admissible() {
        for id in ["twist2", "anharmonic"] {
            assert!(system(id).is_admissible(&reference_point()));
        }
        assert_eq!(periodic_signal(16).len(), 16);
    }
}
