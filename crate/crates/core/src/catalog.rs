//! Built-in systems keyed by string id.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase::Dims;
use crate::sl2::{
    q_form, q_form_gradient, symplectic, ConstantField, QuadraticSystem, ShearField, Sl2Field,
    SlowFunction, TwistField,
};
use crate::system::SlowFastSystem;

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Serialize)]
pub struct SystemInfo {
    pub id: &'static str,
    pub description: &'static str,
    pub quadratic: bool,
    pub defaults: Vec<(&'static str, f64)>,
}

pub fn list() -> Vec<SystemInfo> {
    vec![
        SystemInfo {
            id: "osc-const",
            description: "constant generator A = 𝕁, h = (p²+q²)/2, ω = omega0; all corrections vanish",
            quadratic: true,
            defaults: vec![("omega0", 1.0)],
        },
        SystemInfo {
            id: "u-twist",
            description: "A = [[0,−eᵘ],[e⁻ᵘ,0]], u = alpha·q, h = (p²+q²)/2, ω = 1",
            quadratic: true,
            defaults: vec![("alpha", 0.3)],
        },
        SystemInfo {
            id: "twist2",
            description: "A = [[0,−eᵘ],[e⁻ᵘ,0]], u = alpha·q + beta·p, h = (p²+q²)/2, ω = 1 + mu·(p²+q²)",
            quadratic: true,
            defaults: vec![("alpha", 0.3), ("beta", 0.3), ("mu", 0.1)],
        },
        SystemInfo {
            id: "shear",
            description: "A = P𝕁P⁻¹, P = [[eᵃ, eᵃb],[0, e⁻ᵃ]], a = alpha·q, b = beta·p, h = (p²+q²)/2, \
                          ω = 1 + mu·(p²+q²); nonzero averaged correction ⟨K⟩",
            quadratic: true,
            defaults: vec![("alpha", 0.3), ("beta", 0.4), ("mu", 0.1)],
        },
        SystemInfo {
            id: "anharmonic",
            description: "H = (p²+q²)/2 + a·J + kappa·J², J = Q_A of twist2, a = 1 + mu·(p²+q²); \
                          amplitude-dependent frequency, integrated numerically",
            quadratic: false,
            defaults: vec![("alpha", 0.3), ("beta", 0.3), ("mu", 0.1), ("kappa", 0.2)],
        },
    ]
}

/// Merges `params` over the defaults of `id`, rejecting unknown keys.
pub fn resolve_params(id: &str, params: &Params) -> Result<Params> {
    let info = list()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::InvalidSystem(format!("unknown system id {id:?}")))?;
    let mut out: Params = info.defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in params {
        if !out.contains_key(k) {
            return Err(Error::InvalidSystem(format!("system {id:?} has no parameter {k:?}")));
        }
        if !v.is_finite() {
            return Err(Error::InvalidSystem(format!("parameter {k:?} is not finite")));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

pub fn build(id: &str, params: &Params) -> Result<SlowFastSystem> {
    let p = resolve_params(id, params)?;
    let get = |k: &str| p[k];
    let half_norm = || SlowFunction::radial(0.0, 0.5);
    match id {
        "osc-const" => {
            let omega0 = get("omega0");
            let field = ConstantField { a: symplectic(), k: 1 };
            Ok(QuadraticSystem::new(Arc::new(field), half_norm(), SlowFunction::constant(omega0))?.into_system(id))
        }
        "u-twist" => {
            let field = TwistField {
                alpha: get("alpha"),
                beta: 0.0,
            };
            Ok(QuadraticSystem::new(Arc::new(field), half_norm(), SlowFunction::constant(1.0))?.into_system(id))
        }
        "twist2" => {
            let field = TwistField {
                alpha: get("alpha"),
                beta: get("beta"),
            };
            let omega = SlowFunction::radial(1.0, get("mu"));
            Ok(QuadraticSystem::new(Arc::new(field), half_norm(), omega)?.into_system(id))
        }
        "shear" => {
            let field = ShearField {
                alpha: get("alpha"),
                beta: get("beta"),
            };
            let omega = SlowFunction::radial(1.0, get("mu"));
            Ok(QuadraticSystem::new(Arc::new(field), half_norm(), omega)?.into_system(id))
        }
        "anharmonic" => anharmonic(get("alpha"), get("beta"), get("mu"), get("kappa")),
        _ => unreachable!("resolve_params rejects unknown ids"),
    }
}

/// `H = h + a(p,q)·Q_A + κ·Q_A²`, whose fast flow is the `A`-rotation at
/// frequency `ω = a + 2κ·Q_A`. Registered as a generic system so that it
/// exercises the numerical flow with a fast-variable dependent frequency.
fn anharmonic(alpha: f64, beta: f64, mu: f64, kappa: f64) -> Result<SlowFastSystem> {
    if kappa < 0.0 || mu < 0.0 {
        return Err(Error::InvalidSystem("anharmonic needs kappa ≥ 0 and mu ≥ 0".into()));
    }
    let field = TwistField { alpha, beta };
    let dims = Dims { r: 1, k: 1 };
    let z = |m: &crate::phase::PhasePoint| nalgebra::Vector2::new(m.y()[0], m.x()[0]);
    let slow2 = |m: &crate::phase::PhasePoint| m.p()[0].powi(2) + m.q()[0].powi(2);
    let (f1, f2, f3, f4) = (field.clone(), field.clone(), field.clone(), field);
    let energy = move |m: &crate::phase::PhasePoint| {
        let j = q_form(&f1.matrix(m.p(), m.q()), &z(m));
        0.5 * slow2(m) + (1.0 + mu * slow2(m)) * j + kappa * j * j
    };
    let gradient = move |m: &crate::phase::PhasePoint| {
        let (p, q) = (m.p(), m.q());
        let a = f2.matrix(p, q);
        let j = q_form(&a, &z(m));
        let w = 1.0 + mu * slow2(m) + 2.0 * kappa * j;
        let gz = q_form_gradient(&a, &z(m)) * w;
        let jp = q_form(&f2.d_dp(p, q, 0), &z(m));
        let jq = q_form(&f2.d_dq(p, q, 0), &z(m));
        DVector::from_vec(vec![
            gz[0],
            gz[1],
            p[0] + 2.0 * mu * p[0] * j + w * jp,
            q[0] + 2.0 * mu * q[0] * j + w * jq,
        ])
    };
    let frequency = move |m: &crate::phase::PhasePoint| {
        let j = q_form(&f3.matrix(m.p(), m.q()), &z(m));
        1.0 + mu * slow2(m) + 2.0 * kappa * j
    };
    let frequency_gradient = move |m: &crate::phase::PhasePoint| {
        let (p, q) = (m.p(), m.q());
        let a = f4.matrix(p, q);
        let gz = q_form_gradient(&a, &z(m)) * (2.0 * kappa);
        DVector::from_vec(vec![
            gz[0],
            gz[1],
            2.0 * mu * p[0] + 2.0 * kappa * q_form(&f4.d_dp(p, q, 0), &z(m)),
            2.0 * mu * q[0] + 2.0 * kappa * q_form(&f4.d_dq(p, q, 0), &z(m)),
        ])
    };
    Ok(SlowFastSystem::builder("anharmonic", dims, energy)
        .gradient(gradient)
        .frequency(frequency)
        .frequency_gradient(frequency_gradient)
        .build())
}
