//! Seeded generation of admissible test points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhasePoint;
use crate::system::SlowFastSystem;

/// Box and shell bounds of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBounds {
    /// Fast coordinates are drawn from `[−fast_box, fast_box]`.
    pub fast_box: f64,
    /// Slow coordinates are drawn from `[−slow_box, slow_box]`.
    pub slow_box: f64,
    /// Accepted range of the fast energy: `Q_A(z)` for quadratic systems,
    /// `|z|²/2` otherwise.
    pub shell: (f64, f64),
}

impl Default for SamplingBounds {
    fn default() -> Self {
        Self {
            fast_box: 2.0,
            slow_box: 1.0,
            shell: (0.5, 2.0),
        }
    }
}

/// Rejection is declared hopeless above this rate.
const MAX_REJECTION_RATE: f64 = 0.99;
/// Draws attempted before the rate is judged.
const MIN_ATTEMPTS: usize = 1000;

fn fast_energy(sys: &SlowFastSystem, m: &PhasePoint) -> f64 {
    match sys.quadratic() {
        Some(q) => q.momentum(m),
        None => m.fast().iter().map(|v| v * v).sum::<f64>() / 2.0,
    }
}

/// `count` admissible points from `seed`, bitwise reproducible.
pub fn generate_points(sys: &SlowFastSystem, count: usize, seed: u64, bounds: &SamplingBounds) -> Result<Vec<PhasePoint>> {
    if !(bounds.fast_box > 0.0 && bounds.slow_box > 0.0 && bounds.shell.0 <= bounds.shell.1) {
        return Err(Error::Sampling(format!("invalid bounds {bounds:?}")));
    }
    let d = sys.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        let comps: Vec<f64> = (0..d.len())
            .map(|c| {
                let half = if c < 2 * d.r { bounds.fast_box } else { bounds.slow_box };
                rng.gen_range(-half..=half)
            })
            .collect();
        let m = PhasePoint::from_slice(d, &comps)?;
        let e = fast_energy(sys, &m);
        if e >= bounds.shell.0 && e <= bounds.shell.1 && sys.is_admissible(&m) {
            out.push(m);
        }
        if attempts >= MIN_ATTEMPTS {
            let rate = 1.0 - out.len() as f64 / attempts as f64;
            if rate > MAX_REJECTION_RATE {
                return Err(Error::Sampling(format!(
                    "rejection rate {:.2}% after {attempts} draws",
                    100.0 * rate
                )));
            }
        }
    }
    Ok(out)
}
