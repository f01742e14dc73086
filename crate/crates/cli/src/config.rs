//! Experiment configuration: a single JSON document checked against
//! `schema/experiment.schema.json` on load.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use slowfast::catalog;
use slowfast::{generate_points, IntegratorConfig, PhasePoint, SamplingBounds, SlowFastSystem};

/// The schema shipped with the runner.
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

pub const MIN_QUADRATURE_NODES: usize = 32;
pub const MIN_LADDER_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unknown system_id {0:?} (see `slowfast list-systems`)")]
    UnknownSystem(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Oracle,
    NormalForm,
    Drift,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Oracle => "oracle",
            Suite::NormalForm => "normal-form",
            Suite::Drift => "drift",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system_id: String,
    #[serde(default)]
    pub system_params: BTreeMap<String, f64>,
    #[serde(default)]
    pub initial_points: Vec<PhasePoint>,
    /// Seeded random admissible points added after `initial_points`.
    #[serde(default)]
    pub random_points: usize,
    pub eps_ladder: Vec<f64>,
    #[serde(rename = "quadrature_N")]
    pub quadrature_n: usize,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub horizon_c: f64,
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub output_path: PathBuf,
}

/// A validated configuration with its system and test points.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: SlowFastSystem,
    /// `initial_points` followed by the generated points.
    pub points: Vec<PhasePoint>,
}

impl Experiment {
    /// Starting points of drift runs: the explicit points if any, otherwise
    /// the generated ones.
    pub fn drift_points(&self) -> std::ops::Range<usize> {
        match self.config.initial_points.len() {
            0 => 0..self.points.len(),
            n => 0..n,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Checks the constraints the schema states beyond field types, builds
    /// the system and generates the test points.
    pub fn validate(self) -> Result<Experiment, ConfigError> {
        if !catalog::list().iter().any(|s| s.id == self.system_id) {
            return Err(ConfigError::UnknownSystem(self.system_id));
        }
        let mut problems = Vec::new();

        let ladder = &self.eps_ladder;
        if ladder.len() < MIN_LADDER_LEN {
            problems.push(format!("eps_ladder needs at least {MIN_LADDER_LEN} entries, got {}", ladder.len()));
        }
        if ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            problems.push("eps_ladder entries must be positive and finite".into());
        }
        if ladder.windows(2).any(|w| !(w[1] < w[0])) {
            problems.push("eps_ladder must be strictly decreasing".into());
        }
        if self.quadrature_n < MIN_QUADRATURE_NODES {
            problems.push(format!("quadrature_N must be at least {MIN_QUADRATURE_NODES}, got {}", self.quadrature_n));
        }
        if let Err(e) = self.integrator.validate() {
            problems.push(e.to_string());
        }
        if !(self.horizon_c.is_finite() && self.horizon_c > 0.0) {
            problems.push(format!("horizon_c must be positive, got {}", self.horizon_c));
        }
        if self.suites.is_empty() {
            problems.push("suites must name at least one suite".into());
        }
        let mut seen = self.suites.clone();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            problems.push("suites must not repeat".into());
        }
        if self.initial_points.is_empty() && self.random_points == 0 {
            problems.push("no test points: give initial_points or random_points".into());
        }

        let system = match catalog::build(&self.system_id, &self.system_params) {
            Ok(s) => Some(s),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        let mut points = Vec::new();
        if let Some(sys) = &system {
            if self.suites.contains(&Suite::Oracle) && sys.quadratic().is_none() {
                problems.push(format!("the oracle suite needs a quadratic system; {} is not", self.system_id));
            }
            for (i, m) in self.initial_points.iter().enumerate() {
                if m.dims() != sys.dims() {
                    problems.push(format!("initial_points[{i}] has dimensions {:?}, the system {:?}", m.dims(), sys.dims()));
                } else if let Err(e) = sys.check_admissible(m) {
                    problems.push(format!("initial_points[{i}]: {e}"));
                }
            }
            points.extend(self.initial_points.iter().cloned());
            if self.random_points > 0 {
                match generate_points(sys, self.random_points, self.seed, &SamplingBounds::default()) {
                    Ok(p) => points.extend(p),
                    Err(e) => problems.push(e.to_string()),
                }
            }
        }

        match system {
            Some(system) if problems.is_empty() => Ok(Experiment { config: self, system, points }),
            _ => Err(ConfigError::Invalid(problems)),
        }
    }
}
