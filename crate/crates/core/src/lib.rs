//! Averaging and first-order normal forms for slow-fast Hamiltonian systems
//! whose fast flow is periodic.
//!
//! The pipeline: a [`SlowFastSystem`] defines `H` and the frequency `ω`;
//! [`flow`] samples orbits of the circle action generated by `Υ = X⁽⁰⁾/ω`;
//! [`averaging`] turns samples into `⟨·⟩` and `𝒮`; [`connection`] builds the
//! momentum map, connection form and horizontal lifts; [`normal_form`]
//! assembles the averaged-perturbation splitting, the improved integral and
//! drift runs. [`sl2`] holds the closed forms of the quadratic case, used as
//! the reference throughout. [`checks`] packages the verification residuals.

pub mod averaging;
pub mod catalog;
pub mod checks;
pub mod connection;
pub mod error;
mod fd;
pub mod flow;
pub mod normal_form;
pub mod ode;
pub mod phase;
pub mod sampling;
pub mod sl2;
pub mod system;
pub mod tolerances;

pub use averaging::Averaged;
pub use connection::{ConnectionData, Quadrature};
pub use error::{Error, Result};
pub use flow::{IntegratorConfig, Method, OrbitSample};
pub use normal_form::{DriftConfig, DriftReport, DriftRun, NormalFormSplit, Quantity};
pub use phase::{Bivector, Covector, Dims, PhasePoint, TangentVector};
pub use sampling::{generate_points, SamplingBounds};
pub use sl2::{QuadraticSystem, Sl2Field, SlowFunction};
pub use system::{ScalarField, SlowFastSystem};
