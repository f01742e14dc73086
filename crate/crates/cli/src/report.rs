//! Result rows, the CSV table and the JSON summary.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Suite;

pub const CSV_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// How a row's value is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// Residual check: `|value| ≤ tol`.
    AtMost(f64),
    /// Strict upper bound.
    Below(f64),
    /// Strict lower bound.
    Above(f64),
    /// Closed band, for fitted slopes; written `lo..hi`.
    Within(f64, f64),
    /// Data only; always passes.
    Info,
}

impl Bound {
    pub fn accepts(self, value: f64) -> bool {
        match self {
            Bound::AtMost(t) => value.abs() <= t,
            Bound::Below(t) => value < t,
            Bound::Above(t) => value > t,
            Bound::Within(lo, hi) => (lo..=hi).contains(&value),
            Bound::Info => true,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "{t:e}"),
            Bound::Below(t) => write!(f, "<{t:e}"),
            Bound::Above(t) => write!(f, ">{t:e}"),
            Bound::Within(lo, hi) => write!(f, "{lo}..{hi}"),
            Bound::Info => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub suite: Suite,
    pub system_id: String,
    pub check_id: String,
    pub point_index: Option<usize>,
    pub eps: Option<f64>,
    /// NaN when the computation failed.
    pub value: f64,
    pub tolerance: Bound,
    pub pass: bool,
    pub wall_time_ms: f64,
}

impl ResultRow {
    pub fn new(suite: Suite, system_id: &str, check_id: impl Into<String>, value: f64, tolerance: Bound) -> Self {
        Self {
            suite,
            system_id: system_id.to_owned(),
            check_id: check_id.into(),
            point_index: None,
            eps: None,
            value,
            tolerance,
            pass: value.is_finite() && tolerance.accepts(value),
            wall_time_ms: 0.0,
        }
    }

    pub fn at(mut self, point_index: usize) -> Self {
        self.point_index = Some(point_index);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn is_error(&self) -> bool {
        self.value.is_nan()
    }

    /// Deterministic order: suite, check, point, then decreasing `ε`.
    pub fn sort_key_cmp(&self, other: &Self) -> Ordering {
        let eps = |r: &Self| r.eps.map(|e| -e);
        self.suite
            .cmp(&other.suite)
            .then_with(|| self.system_id.cmp(&other.system_id))
            .then_with(|| self.check_id.cmp(&other.check_id))
            .then_with(|| self.point_index.cmp(&other.point_index))
            .then_with(|| match (eps(self), eps(other)) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(ResultRow::sort_key_cmp);
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    suite: &'static str,
    system_id: &'a str,
    check_id: &'a str,
    point_index: Option<usize>,
    eps: Option<f64>,
    value: f64,
    tolerance: String,
    pass: bool,
    wall_time_ms: String,
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(CsvRecord {
            suite: r.suite.as_str(),
            system_id: &r.system_id,
            check_id: &r.check_id,
            point_index: r.point_index,
            eps: r.eps,
            value: r.value,
            tolerance: r.tolerance.to_string(),
            pass: r.pass,
            wall_time_ms: format!("{:.3}", r.wall_time_ms),
        })?;
    }
    if rows.is_empty() {
        w.write_record(["suite", "system_id", "check_id", "point_index", "eps", "value", "tolerance", "pass", "wall_time_ms"])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WorstResidual {
    pub check_id: String,
    pub point_index: Option<usize>,
    pub eps: Option<f64>,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq, Default)]
pub struct SuiteSummary {
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    /// Residual row with the largest `|value| / tolerance`.
    pub worst_residual: Option<WorstResidual>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SlopeSummary {
    pub point_index: usize,
    pub slope_j: Option<f64>,
    pub slope_f: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub system_id: String,
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    pub all_pass: bool,
    pub suites: BTreeMap<String, SuiteSummary>,
    pub slopes: Vec<SlopeSummary>,
    pub csv: PathBuf,
    pub wall_time_ms: f64,
}

impl Summary {
    pub fn from_rows(system_id: &str, rows: &[ResultRow], csv: PathBuf, wall_time_ms: f64) -> Self {
        let mut suites: BTreeMap<String, SuiteSummary> = BTreeMap::new();
        for r in rows {
            let s = suites.entry(r.suite.to_string()).or_default();
            s.rows += 1;
            if r.pass {
                s.passed += 1;
            } else {
                s.failed += 1;
            }
            if r.is_error() {
                s.errors += 1;
            }
            if let (Bound::AtMost(tol), false) = (r.tolerance, r.is_error()) {
                let ratio = |w: &WorstResidual| w.value.abs() / w.tolerance;
                let candidate = WorstResidual {
                    check_id: r.check_id.clone(),
                    point_index: r.point_index,
                    eps: r.eps,
                    value: r.value,
                    tolerance: tol,
                };
                if s.worst_residual.as_ref().is_none_or(|w| ratio(&candidate) > ratio(w)) {
                    s.worst_residual = Some(candidate);
                }
            }
        }

        let mut slopes: BTreeMap<usize, SlopeSummary> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.suite == Suite::Drift && !r.is_error()) {
            let (Some(i), true) = (r.point_index, r.check_id.starts_with("slope_")) else { continue };
            let e = slopes.entry(i).or_insert(SlopeSummary { point_index: i, slope_j: None, slope_f: None });
            match r.check_id.as_str() {
                "slope_j" => e.slope_j = Some(r.value),
                "slope_f" => e.slope_f = Some(r.value),
                _ => {}
            }
        }

        let passed = rows.iter().filter(|r| r.pass).count();
        Self {
            system_id: system_id.to_owned(),
            rows: rows.len(),
            passed,
            failed: rows.len() - passed,
            all_pass: passed == rows.len(),
            suites,
            slopes: slopes.into_values().collect(),
            csv,
            wall_time_ms,
        }
    }
}

/// Writes `results.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, rows: &[ResultRow], summary: &Summary) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv = std::fs::File::create(dir.join(CSV_FILE))?;
    write_csv(std::io::BufWriter::new(csv), rows).map_err(std::io::Error::other)?;
    let json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(SUMMARY_FILE), json + "\n")
}
