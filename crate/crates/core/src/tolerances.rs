//! Numerical budgets used across the pipeline and by the verification suites.
//!
//! Every threshold lives here so that tests and the experiment runner assert
//! against the same numbers. Nothing downstream should tune these per check.

/// Maximum admissible distance between `Fl^{2π}(m)` and `m` for an orbit sample.
pub const CLOSURE_TOL: f64 = 1e-9;

/// Default number of quadrature nodes per orbit.
pub const DEFAULT_NODES: usize = 256;

/// Default RK4 steps per 2π orbit. At 1024 steps the phase error of the
/// harmonic orbit after one turn is about 3e-10, inside [`CLOSURE_TOL`].
pub const DEFAULT_RK4_STEPS_PER_ORBIT: usize = 1024;

/// Adaptive integrator tolerances for long-horizon runs.
pub const ADAPTIVE_RTOL: f64 = 1e-10;
pub const ADAPTIVE_ATOL: f64 = 1e-12;

/// Step along the flow for the central difference defining `L_Υ f`.
pub const FLOW_FD_STEP: f64 = 1e-5;

/// Fast-variable step of the nested finite differences of quadrature-defined
/// functions (Θ, ⟨K⟩).
pub const FAST_FD_STEP: f64 = 1e-4;

/// Upper bound on quadrature noise amplified through the nested stencil.
pub const NOISE_BUDGET: f64 = 1e-6;

/// Relative agreement required between a detected period and `2π/ω`.
pub const PERIOD_REL_TOL: f64 = 1e-6;

/// Time resolution of the period bisection.
pub const PERIOD_TIME_TOL: f64 = 1e-10;

/// Operator identities (homological equation, zero averages).
pub const IDENTITY_TOL: f64 = 1e-7;

/// Horizontal-lift identities (`L_hor J = 0`, push-forward invariance).
pub const HORIZONTAL_TOL: f64 = 1e-6;

/// Closed-form quadratic calculus vs quadrature on the exact flow.
pub const Q_LINEAR_TOL: f64 = 1e-10;
pub const Q_PRODUCT_TOL: f64 = 1e-9;

/// sl(2) field invariants (`det A = 1`, `A² = −I`).
pub const SL2_TOL: f64 = 1e-12;

/// Quadrature pipeline vs closed forms (Θ, ⟨K⟩, F).
pub const ORACLE_TOL: f64 = 1e-7;

/// Defect of the averaged perturbation splitting.
pub const SPLIT_TOL: f64 = 1e-5;

/// Required reduction of the splitting defect when the node count doubles.
pub const SPLIT_REFINEMENT_FACTOR: f64 = 3.0;

/// `|L_{⟨X1⟩} J|` bound and the lower bound the renormalized momentum must break.
pub const FIRST_INTEGRAL_TOL: f64 = 1e-6;
pub const RENORMALIZED_DEFECT_MIN: f64 = 1e-3;

/// Accepted log-log slopes of the maximal drift against ε.
pub const SLOPE_BAND_J: (f64, f64) = (0.7, 1.3);
pub const SLOPE_BAND_F: (f64, f64) = (1.7, 2.3);

/// Energy conservation gate for every drift run.
pub const ENERGY_DRIFT_TOL: f64 = 1e-8;

/// Minimum number of output samples of a drift run.
pub const MIN_DRIFT_SAMPLES: usize = 200;

/// Default domain guard: fast gradient norm bounded away from zero.
pub const FAST_GRADIENT_FLOOR: f64 = 1e-8;
