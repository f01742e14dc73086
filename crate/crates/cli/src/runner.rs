//! Fans the requested suites out over (point, ε) work items and collects
//! result rows.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use slowfast::checks::{self, REFINEMENT_NODES};
use slowfast::normal_form::{first_integral_defect, first_integral_defect_with, drift_run, fit_slope, splitting_residual};
use slowfast::tolerances::*;
use slowfast::{DriftConfig, PhasePoint, Quadrature, Result};

use crate::config::{Experiment, Suite};
use crate::report::{sort_rows, Bound, ResultRow};

/// Below this coarse residual the splitting defect is at roundoff and the
/// refinement ratio carries no information; the row is not emitted.
pub const REFINEMENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Task {
    Identities,
    Connection,
    Oracle,
    Splitting,
    Refinement,
    FirstIntegral,
    Drift(f64),
}

impl Task {
    fn suite(self) -> Suite {
        match self {
            Task::Identities | Task::Connection => Suite::Identities,
            Task::Oracle => Suite::Oracle,
            Task::Splitting | Task::Refinement | Task::FirstIntegral => Suite::NormalForm,
            Task::Drift(_) => Suite::Drift,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct WorkItem {
    task: Task,
    point: usize,
}

/// Side results that feed the aggregate rows.
#[derive(Debug, Default)]
struct ItemOutput {
    rows: Vec<ResultRow>,
    renormalized: Option<f64>,
    /// `(point, ε, max drift of J, max drift of F)` of a complete run.
    drift: Option<(usize, f64, f64, f64)>,
}

struct Ctx<'a> {
    exp: &'a Experiment,
    qc: Quadrature,
}

impl Ctx<'_> {
    fn row(&self, task: Task, point: usize, check: impl Into<String>, value: f64, bound: Bound) -> ResultRow {
        let row = ResultRow::new(task.suite(), &self.exp.config.system_id, check, value, bound).at(point);
        match task {
            Task::Drift(eps) => row.with_eps(eps),
            _ => row,
        }
    }

    /// Rows for `checks` from one computation; a failure turns every check
    /// into a failed row.
    fn rows(&self, task: Task, point: usize, checks: &[(&str, Bound)], values: Result<Vec<f64>>) -> Vec<ResultRow> {
        let values = values.unwrap_or_else(|e| {
            log::warn!("{} at point {point}: {e}", task.suite());
            vec![f64::NAN; checks.len()]
        });
        checks
            .iter()
            .zip(values)
            .map(|((id, bound), v)| self.row(task, point, *id, v, *bound))
            .collect()
    }

    fn point(&self, i: usize) -> &PhasePoint {
        &self.exp.points[i]
    }

    fn run(&self, item: WorkItem) -> ItemOutput {
        let start = Instant::now();
        let mut out = self.compute(item);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        for r in &mut out.rows {
            r.wall_time_ms = ms;
        }
        out
    }

    fn compute(&self, WorkItem { task, point }: WorkItem) -> ItemOutput {
        let sys = &self.exp.system;
        let m = self.point(point);
        let qc = &self.qc;
        let mut out = ItemOutput::default();
        match task {
            Task::Identities => {
                for (name, f) in checks::test_functions(sys) {
                    let ids = [
                        (format!("homological_{name}"), Bound::AtMost(IDENTITY_TOL)),
                        (format!("mean_lie_{name}"), Bound::AtMost(IDENTITY_TOL)),
                        (format!("mean_s_{name}"), Bound::AtMost(IDENTITY_TOL)),
                    ];
                    let ids: Vec<(&str, Bound)> = ids.iter().map(|(s, b)| (s.as_str(), *b)).collect();
                    let r = checks::identity_residuals(sys, f.as_ref(), m, qc)
                        .map(|r| vec![r.homological, r.mean_derivative, r.mean_s]);
                    out.rows.extend(self.rows(task, point, &ids, r));
                }
            }
            Task::Connection => {
                let t = ChaCha8Rng::seed_from_u64(self.exp.config.seed ^ point as u64).gen_range(0.0..2.0 * PI);
                let single = |id, bound, v: Result<f64>| self.rows(task, point, &[(id, bound)], v.map(|v| vec![v]));
                out.rows.extend(single("mean_dj", Bound::AtMost(IDENTITY_TOL), checks::momentum_average_residual(sys, m, qc)));
                out.rows.extend(single("mean_theta", Bound::AtMost(IDENTITY_TOL), checks::theta_average_residual(sys, m, qc)));
                out.rows.extend(single("hor_dj", Bound::AtMost(HORIZONTAL_TOL), checks::horizontal_residual(sys, m, qc)));
                out.rows.extend(single("hor_pushforward", Bound::AtMost(HORIZONTAL_TOL), checks::pushforward_residual(sys, m, t, qc)));
            }
            Task::Oracle => {
                let q = checks::system_quadratic_residuals(sys, m, qc.nodes).map(|r| vec![r.average, r.integral, r.product]);
                out.rows.extend(self.rows(
                    task,
                    point,
                    &[("q_average", Bound::AtMost(Q_LINEAR_TOL)), ("q_integral", Bound::AtMost(Q_LINEAR_TOL)), ("q_product", Bound::AtMost(Q_PRODUCT_TOL))],
                    q,
                ));
                let ladder = &self.exp.config.eps_ladder;
                match checks::oracle_residuals(sys, m, ladder, qc) {
                    Ok(r) => {
                        out.rows.push(self.row(task, point, "theta", r.theta, Bound::AtMost(ORACLE_TOL)));
                        out.rows.push(self.row(task, point, "k_avg", r.k_avg, Bound::AtMost(ORACLE_TOL)));
                        for (&eps, v) in ladder.iter().zip(r.f) {
                            out.rows.push(self.row(task, point, "f", v, Bound::AtMost(ORACLE_TOL)).with_eps(eps));
                        }
                    }
                    Err(e) => {
                        log::warn!("oracle at point {point}: {e}");
                        out.rows.push(self.row(task, point, "theta", f64::NAN, Bound::AtMost(ORACLE_TOL)));
                        out.rows.push(self.row(task, point, "k_avg", f64::NAN, Bound::AtMost(ORACLE_TOL)));
                        for &eps in ladder {
                            out.rows.push(self.row(task, point, "f", f64::NAN, Bound::AtMost(ORACLE_TOL)).with_eps(eps));
                        }
                    }
                }
            }
            Task::Splitting => {
                let r = splitting_residual(sys, m, qc).map(|v| vec![v]);
                out.rows.extend(self.rows(task, point, &[("split_residual", Bound::AtMost(SPLIT_TOL))], r));
            }
            Task::Refinement => match checks::splitting_refinement(sys, m) {
                Ok((coarse, _)) if coarse < REFINEMENT_FLOOR => {
                    log::info!("point {point}: splitting defect {coarse:.1e} at roundoff, refinement not measured");
                }
                r => {
                    let id = format!("split_refinement_{}_{}", REFINEMENT_NODES.0, REFINEMENT_NODES.1);
                    let ratio = r.map(|(c, f)| vec![c / f]);
                    out.rows.extend(self.rows(task, point, &[(&id, Bound::Above(SPLIT_REFINEMENT_FACTOR))], ratio));
                }
            },
            Task::FirstIntegral => {
                let r = first_integral_defect(sys, m, qc).map(|v| vec![v]);
                out.rows.extend(self.rows(task, point, &[("first_integral", Bound::AtMost(FIRST_INTEGRAL_TOL))], r));
                // J + q² is not a first integral; its defect is data for the aggregate row
                let iq = sys.dims().q_index(0);
                let r = first_integral_defect_with(sys, m, qc, &|pt| pt[iq].powi(2));
                out.renormalized = r.as_ref().ok().copied();
                out.rows.extend(self.rows(task, point, &[("renormalized_defect", Bound::Info)], r.map(|v| vec![v])));
            }
            Task::Drift(eps) => {
                let cfg = DriftConfig {
                    quadrature: *qc,
                    ..DriftConfig::default()
                };
                match drift_run(sys, eps, m, self.exp.config.horizon_c, &cfg) {
                    Ok(run) => {
                        out.rows.push(self.row(task, point, "drift_h", run.h.max_drift, Bound::AtMost(ENERGY_DRIFT_TOL)));
                        out.rows.push(self.row(task, point, "drift_j", run.j.max_drift, Bound::Info));
                        out.rows.push(self.row(task, point, "drift_f", run.f.max_drift, Bound::Info));
                        out.rows.push(self.row(task, point, "f_over_j", run.f.max_drift / run.j.max_drift, Bound::Below(1.0)));
                        match run.truncated_at() {
                            Some(t) => out.rows.push(self.row(task, point, "truncated_at", t, Bound::Below(0.0))),
                            None => out.drift = Some((point, eps, run.j.max_drift, run.f.max_drift)),
                        }
                    }
                    Err(e) => {
                        log::warn!("drift at point {point}, eps {eps}: {e}");
                        out.rows.push(self.row(task, point, "drift_h", f64::NAN, Bound::AtMost(ENERGY_DRIFT_TOL)));
                    }
                }
            }
        }
        out
    }
}

fn work_items(exp: &Experiment, suites: &[Suite]) -> Vec<WorkItem> {
    let all = 0..exp.points.len();
    let mut items = Vec::new();
    let mut add = |task: Task, points: std::ops::Range<usize>| items.extend(points.map(|point| WorkItem { task, point }));
    for &suite in suites {
        match suite {
            Suite::Identities => {
                add(Task::Identities, all.clone());
                add(Task::Connection, all.clone());
            }
            Suite::Oracle => add(Task::Oracle, all.clone()),
            Suite::NormalForm => {
                add(Task::Splitting, all.clone());
                add(Task::Refinement, all.clone());
                add(Task::FirstIntegral, all.clone());
            }
            Suite::Drift => {
                for &eps in &exp.config.eps_ladder {
                    add(Task::Drift(eps), exp.drift_points());
                }
            }
        }
    }
    items
}

/// Runs `suites` (the configured ones if `None`) on a pool of `jobs` threads
/// and returns the sorted rows. Numerical failures become failed rows.
pub fn run_experiment(exp: &Experiment, suites: Option<&[Suite]>, jobs: Option<usize>) -> Vec<ResultRow> {
    let suites = suites.unwrap_or(&exp.config.suites);
    let ctx = Ctx {
        exp,
        qc: Quadrature::default()
            .with_nodes(exp.config.quadrature_n)
            .with_integrator(exp.config.integrator),
    };
    let items = work_items(exp, suites);
    log::info!("{} work items for {} on {}", items.len(), exp.config.system_id, suites.len());

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let outputs: Vec<ItemOutput> = match builder.build() {
        Ok(pool) => pool.install(|| items.par_iter().map(|&it| ctx.run(it)).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running serially");
            items.iter().map(|&it| ctx.run(it)).collect()
        }
    };

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut renormalized = Vec::new();
    let mut drift = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        renormalized.extend(o.renormalized);
        drift.extend(o.drift);
    }
    let system_id = &exp.config.system_id;

    if suites.contains(&Suite::NormalForm) {
        // the renormalized integral must fail somewhere
        let worst = renormalized.iter().copied().fold(f64::NAN, f64::max);
        rows.push(ResultRow::new(Suite::NormalForm, system_id, "renormalized_defect_max", worst, Bound::Above(RENORMALIZED_DEFECT_MIN)));
    }
    if suites.contains(&Suite::Drift) {
        for point in exp.drift_points() {
            let mut runs: Vec<_> = drift.iter().filter(|d| d.0 == point).collect();
            runs.sort_by(|a, b| b.1.total_cmp(&a.1));
            let eps: Vec<f64> = runs.iter().map(|d| d.1).collect();
            let complete = runs.len() == exp.config.eps_ladder.len();
            for (id, band, ys) in [
                ("slope_j", SLOPE_BAND_J, runs.iter().map(|d| d.2).collect::<Vec<_>>()),
                ("slope_f", SLOPE_BAND_F, runs.iter().map(|d| d.3).collect()),
            ] {
                let slope = match (complete, fit_slope(&eps, &ys)) {
                    (true, Ok(s)) => s,
                    (_, Err(e)) => {
                        log::warn!("{id} at point {point}: {e}");
                        f64::NAN
                    }
                    (false, _) => f64::NAN,
                };
                rows.push(ResultRow::new(Suite::Drift, system_id, id, slope, Bound::Within(band.0, band.1)).at(point));
            }
        }
    }
    sort_rows(&mut rows);
    rows
}
