//! A user-defined system through the builder, without analytic gradients.

use slowfast::connection::momentum_map;
use slowfast::normal_form::splitting_residual;
use slowfast::{Dims, PhasePoint, Quadrature, Result, SlowFastSystem};

fn oscillator() -> Result<SlowFastSystem> {
    Ok(SlowFastSystem::builder("my-osc", Dims::new(1, 1)?, |m: &PhasePoint| {
        0.5 * (m.y()[0].powi(2) + m.x()[0].powi(2)) * (1.0 + 0.1 * m.p()[0].powi(2))
    })
    .frequency(|m: &PhasePoint| 1.0 + 0.1 * m.p()[0].powi(2))
    .build())
}

#[test]
fn momentum_is_the_action() -> Result<()> {
    let sys = oscillator()?;
    let m = PhasePoint::new(&[1.0], &[0.0], &[0.5], &[0.0])?;
    let j = momentum_map(&sys, &m, &Quadrature::default())?;
    assert!((j - 0.5).abs() < 1e-9, "{j}");
    Ok(())
}

#[test]
fn splitting_holds_with_difference_gradients() -> Result<()> {
    let sys = oscillator()?;
    let m = PhasePoint::new(&[0.8], &[-0.3], &[0.4], &[0.2])?;
    let r = splitting_residual(&sys, &m, &Quadrature::default())?;
    assert!(r < 1e-5, "{r}");
    Ok(())
}
