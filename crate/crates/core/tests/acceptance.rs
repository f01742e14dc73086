//! Acceptance suite. Runs every criterion at its fixed tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.
//!
//! `cargo test -p slowfast-core --test acceptance`

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slowfast::catalog::{self, Params};
use slowfast::checks::{
    horizontal_residual, identity_residuals, splitting_refinement, momentum_average_residual, oracle_residuals,
    pushforward_residual, quadratic_residuals, test_functions, theta_average_residual,
};
use slowfast::normal_form::{first_integral_defect, first_integral_defect_with, drift_run, ladder_slopes, splitting_residual, DriftConfig, DriftRun};
use slowfast::sl2::symplectic;
use slowfast::tolerances::*;
use slowfast::{generate_points, IntegratorConfig, PhasePoint, Quadrature, Result, SamplingBounds, SlowFastSystem};

const SYSTEMS: [&str; 5] = ["osc-const", "u-twist", "twist2", "shear", "anharmonic"];
const SEED: u64 = 20_240_601;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn system(id: &str) -> SlowFastSystem {
    catalog::build(id, &Params::new()).expect("built-in system")
}

fn points(sys: &SlowFastSystem, count: usize, salt: u64) -> Vec<PhasePoint> {
    generate_points(sys, count, SEED ^ salt, &SamplingBounds::default()).expect("sampling")
}

/// Tracks the worst value of a check against its tolerance.
#[derive(Default)]
struct Worst {
    value: f64,
    errors: Vec<String>,
}

impl Worst {
    fn see(&mut self, v: Result<f64>) {
        match v {
            Ok(v) if v.is_finite() => self.value = self.value.max(v),
            Ok(v) => self.errors.push(format!("non-finite {v}")),
            Err(e) => self.errors.push(e.to_string()),
        }
    }

    fn within(&self, tol: f64) -> bool {
        self.errors.is_empty() && self.value <= tol
    }

    fn describe(&self, label: &str, tol: f64) -> String {
        let mut s = format!("{label} {:.2e} (≤ {tol:.0e})", self.value);
        if let Some(e) = self.errors.first() {
            s.push_str(&format!(" [{} errors, first: {e}]", self.errors.len()));
        }
        s
    }
}

fn criterion_1() -> Outcome {
    let qc = Quadrature::default().with_nodes(DEFAULT_NODES);
    let (mut pr1, mut pr2, mut pr3) = (Worst::default(), Worst::default(), Worst::default());
    for id in SYSTEMS {
        let sys = system(id);
        for m in points(&sys, 50, 1) {
            for (_, f) in test_functions(&sys) {
                match identity_residuals(&sys, f.as_ref(), &m, &qc) {
                    Ok(r) => {
                        pr1.see(Ok(r.homological));
                        pr2.see(Ok(r.mean_derivative));
                        pr3.see(Ok(r.mean_s));
                    }
                    Err(e) => pr1.see(Err(e)),
                }
            }
        }
    }
    let tol = IDENTITY_TOL;
    Outcome {
        id: 1,
        name: "operator identities",
        pass: pr1.within(tol) && pr2.within(tol) && pr3.within(tol),
        detail: [pr1.describe("|L_Υ𝒮f − (f − ⟨f⟩)|", tol), pr2.describe("|⟨L_Υf⟩|", tol), pr3.describe("|⟨𝒮f⟩|", tol)].join("; "),
    }
}

fn criterion_2() -> Outcome {
    let qc = Quadrature::default();
    let (mut ah3, mut az, mut hor3, mut hor4) = (Worst::default(), Worst::default(), Worst::default(), Worst::default());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    for id in SYSTEMS {
        let sys = system(id);
        for m in points(&sys, 20, 2) {
            ah3.see(momentum_average_residual(&sys, &m, &qc));
            az.see(theta_average_residual(&sys, &m, &qc));
            hor3.see(horizontal_residual(&sys, &m, &qc));
            hor4.see(pushforward_residual(&sys, &m, rng.gen_range(0.0..2.0 * PI), &qc));
        }
    }
    Outcome {
        id: 2,
        name: "momentum map and connection",
        pass: ah3.within(IDENTITY_TOL) && az.within(IDENTITY_TOL) && hor3.within(HORIZONTAL_TOL) && hor4.within(HORIZONTAL_TOL),
        detail: [
            ah3.describe("|⟨∂J⟩|", IDENTITY_TOL),
            az.describe("|⟨Θ⟩|", IDENTITY_TOL),
            hor3.describe("|L_hor J|", HORIZONTAL_TOL),
            hor4.describe("|DFl·hor − hor∘Fl|", HORIZONTAL_TOL),
        ]
        .join("; "),
    }
}

fn random_sl2(rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    // A = P𝕁P⁻¹ with det P > 0 keeps det A = 1, A² = −I and Q_A > 0
    loop {
        let p = Matrix2::from_fn(|_, _| rng.gen_range(-1.5..1.5));
        if p.determinant() > 0.3 {
            return p * symplectic() * p.try_inverse().expect("det > 0");
        }
    }
}

fn random_trace_free(rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    let a = rng.gen_range(-1.0..1.0);
    Matrix2::new(a, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), -a)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let (mut q1, mut q2, mut q3) = (Worst::default(), Worst::default(), Worst::default());
    for _ in 0..100 {
        let a = random_sl2(&mut rng);
        let b = random_trace_free(&mut rng);
        let c = random_trace_free(&mut rng);
        let z = Vector2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let r = quadratic_residuals(&a, &b, &c, &z, DEFAULT_NODES);
        q1.see(Ok(r.average));
        q2.see(Ok(r.integral));
        q3.see(Ok(r.product));
    }
    Outcome {
        id: 3,
        name: "sl(2) closed forms vs quadrature",
        pass: q1.within(Q_LINEAR_TOL) && q2.within(Q_LINEAR_TOL) && q3.within(Q_PRODUCT_TOL),
        detail: [
            q1.describe("⟨Q_B⟩", Q_LINEAR_TOL),
            q2.describe("𝒮(Q_B)", Q_LINEAR_TOL),
            q3.describe("⟨Q_B Q_C⟩", Q_PRODUCT_TOL),
        ]
        .join("; "),
    }
}

fn criterion_4() -> Outcome {
    let (mut theta, mut k_avg, mut f) = (Worst::default(), Worst::default(), Worst::default());
    // the exact rotation and, independently, numerically integrated orbits
    let routes = [Quadrature::default(), Quadrature::default().with_integrator(IntegratorConfig::default().numeric())];
    for id in ["u-twist", "twist2", "shear"] {
        let sys = system(id);
        for m in points(&sys, 20, 4) {
            for qc in &routes {
                match oracle_residuals(&sys, &m, &[0.1, 0.025], qc) {
                    Ok(r) => {
                        theta.see(Ok(r.theta));
                        k_avg.see(Ok(r.k_avg));
                        r.f.into_iter().for_each(|v| f.see(Ok(v)));
                    }
                    Err(e) => theta.see(Err(e)),
                }
            }
        }
    }
    Outcome {
        id: 4,
        name: "pipeline vs closed forms",
        pass: theta.within(ORACLE_TOL) && k_avg.within(ORACLE_TOL) && f.within(ORACLE_TOL),
        detail: [
            theta.describe("Θ", ORACLE_TOL),
            k_avg.describe("⟨K⟩", ORACLE_TOL),
            f.describe("F", ORACLE_TOL),
        ]
        .join("; "),
    }
}

fn criterion_5() -> Outcome {
    let mut residual = Worst::default();
    let qc = Quadrature::default();
    for id in SYSTEMS {
        let sys = system(id);
        for m in points(&sys, 20, 5) {
            residual.see(splitting_residual(&sys, &m, &qc));
        }
    }
    // Refinement: with the exact rotation the defect already sits at the
    // roundoff floor, so the node doubling is measured on integrated orbits
    // with one RK4 step per node. The constant generator has no defect to
    // refine and is left out.
    let mut worst_ratio = f64::INFINITY;
    let mut refine_errors = Vec::new();
    for id in ["u-twist", "twist2", "shear", "anharmonic"] {
        let sys = system(id);
        for m in points(&sys, 20, 5) {
            match splitting_refinement(&sys, &m) {
                Ok((coarse, fine)) => worst_ratio = worst_ratio.min(coarse / fine),
                Err(e) => refine_errors.push(e.to_string()),
            }
        }
    }
    let refine_ok = refine_errors.is_empty() && worst_ratio >= SPLIT_REFINEMENT_FACTOR;
    let mut detail = format!(
        "{}; min reduction 128→256 {:.1}× (≥ {SPLIT_REFINEMENT_FACTOR}×)",
        residual.describe("residual", SPLIT_TOL),
        worst_ratio
    );
    if let Some(e) = refine_errors.first() {
        detail.push_str(&format!(" [refinement errors: {}, first: {e}]", refine_errors.len()));
    }
    Outcome {
        id: 5,
        name: "averaged perturbation splitting",
        pass: residual.within(SPLIT_TOL) && refine_ok,
        detail,
    }
}

fn criterion_6() -> Outcome {
    let qc = Quadrature::default();
    let mut defect = Worst::default();
    let mut renormalized = Worst::default();
    for id in SYSTEMS {
        let sys = system(id);
        for m in points(&sys, 20, 6) {
            defect.see(first_integral_defect(&sys, &m, &qc));
            renormalized.see(first_integral_defect_with(&sys, &m, &qc, &|pt| pt.q()[0].powi(2)));
        }
    }
    let broken = renormalized.errors.is_empty() && renormalized.value > RENORMALIZED_DEFECT_MIN;
    Outcome {
        id: 6,
        name: "first integral of the averaged system",
        pass: defect.within(FIRST_INTEGRAL_TOL) && broken,
        detail: format!(
            "{}; renormalized J + q² max {:.2e} (> {RENORMALIZED_DEFECT_MIN:.0e} required)",
            defect.describe("|L_⟨X1⟩ J|", FIRST_INTEGRAL_TOL),
            renormalized.value
        ),
    }
}

const LADDER: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

fn drift_runs() -> Result<Vec<DriftRun>> {
    let sys = system("twist2");
    let m0 = PhasePoint::new(&[1.0], &[0.2], &[0.5], &[0.1])?;
    let cfg = DriftConfig::default();
    std::thread::scope(|scope| {
        let handles: Vec<_> = LADDER
            .iter()
            .map(|&eps| {
                let (sys, m0) = (&sys, &m0);
                scope.spawn(move || drift_run(sys, eps, m0, 1.0, &cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("drift thread")).collect()
    })
}

fn criteria_7_8() -> [Outcome; 2] {
    match drift_runs() {
        Err(e) => [
            Outcome { id: 7, name: "adiabatic drift orders", pass: false, detail: e.to_string() },
            Outcome { id: 8, name: "energy conservation", pass: false, detail: e.to_string() },
        ],
        Ok(runs) => {
            let complete = runs.iter().all(|r| r.truncated_at().is_none() && r.j.samples.len() > MIN_DRIFT_SAMPLES);
            let ordered = runs.iter().all(|r| r.f.max_drift < r.j.max_drift);
            let per_eps: Vec<String> = runs
                .iter()
                .map(|r| format!("ε={}: J {:.2e}, F {:.2e}", r.eps, r.j.max_drift, r.f.max_drift))
                .collect();
            let (j_ok, f_ok, slopes) = match ladder_slopes(&runs) {
                Ok((sj, sf)) => (
                    (SLOPE_BAND_J.0..=SLOPE_BAND_J.1).contains(&sj),
                    (SLOPE_BAND_F.0..=SLOPE_BAND_F.1).contains(&sf),
                    format!("slope J {sj:.3} in {SLOPE_BAND_J:?}, slope F {sf:.3} in {SLOPE_BAND_F:?}"),
                ),
                Err(e) => (false, false, e.to_string()),
            };
            let energy = runs.iter().map(|r| r.h.max_drift).fold(0.0, f64::max);
            [
                Outcome {
                    id: 7,
                    name: "adiabatic drift orders",
                    pass: complete && ordered && j_ok && f_ok,
                    detail: format!("{slopes}; F < J at every ε: {ordered}; {}", per_eps.join(", ")),
                },
                Outcome {
                    id: 8,
                    name: "energy conservation",
                    pass: complete && energy <= ENERGY_DRIFT_TOL,
                    detail: format!("max |H(t) − H(0)| {energy:.2e} (≤ {ENERGY_DRIFT_TOL:.0e}) over {} runs", runs.len()),
                },
            ]
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut outcomes: Vec<(Outcome, f64)> = std::thread::scope(|scope| {
        let singles: Vec<_> = [criterion_1 as fn() -> Outcome, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6]
            .into_iter()
            .map(|c| scope.spawn(move || timed(c)))
            .collect();
        let drift = scope.spawn(|| timed(criteria_7_8));
        let mut out: Vec<_> = singles.into_iter().map(|h| h.join().expect("criterion thread")).collect();
        let (pair, secs) = drift.join().expect("drift thread");
        out.extend(pair.into_iter().map(|o| (o, secs)));
        out
    });
    outcomes.sort_by_key(|(o, _)| o.id);
    let mut all = true;
    for (o, secs) in &outcomes {
        all &= o.pass;
        println!(
            "criterion {} [{}] {}: {} ({:.1}s)",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail,
            secs
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
