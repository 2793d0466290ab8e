//! Data-generating processes, signal-to-noise calibration, and the seeded
//! Monte Carlo harness.

mod dgp;
mod runner;

pub use dgp::{
    gen_cluster_population, gen_cre_population, gen_population, gen_stratified_population,
    gen_survey_population, FinitePopulation,
};
pub use runner::{
    percentage_rmse_reduction, run_replications, run_scenario, EstimatorKind, RunSpec,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{DesignKind, EstimatorError, VarianceFlavor};
use crate::randomize::RandomizeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("bad scenario configuration: {0}")]
    BadConfig(String),
    #[error("cannot parse preset '{preset}': {reason}")]
    BadPreset { preset: String, reason: String },
    #[error("estimator {estimator} does not apply to the {design} design")]
    NotApplicable {
        estimator: String,
        design: DesignKind,
    },
    #[error("denominator RMSE is zero")]
    ZeroRmse,
    #[error("estimator '{0}' not present in summary")]
    UnknownEstimator(String),
    #[error(transparent)]
    Randomize(#[from] RandomizeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Strata-size regimes: many small strata, a few large ones, or both mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrataShape {
    ManySmall,
    FewLarge,
    Mixed,
}

impl fmt::Display for StrataShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StrataShape::ManySmall => "MS",
            StrataShape::FewLarge => "FL",
            StrataShape::Mixed => "MS+FL",
        };
        f.write_str(s)
    }
}

impl FromStr for StrataShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MS" => Ok(StrataShape::ManySmall),
            "FL" => Ok(StrataShape::FewLarge),
            "MS+FL" => Ok(StrataShape::Mixed),
            other => Err(format!("unknown strata shape '{other}'")),
        }
    }
}

/// Design-specific scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DesignConfig {
    Cre { n: usize, p1: f64 },
    Stratified { shape: StrataShape },
    Survey { population: usize, fraction: f64, p1: f64 },
    Cluster { clusters: usize, p1: f64 },
}

impl DesignConfig {
    pub fn kind(&self) -> DesignKind {
        match self {
            DesignConfig::Cre { .. } => DesignKind::Cre,
            DesignConfig::Stratified { .. } => DesignKind::Stratified,
            DesignConfig::Survey { .. } => DesignKind::Survey,
            DesignConfig::Cluster { .. } => DesignKind::Cluster,
        }
    }
}

/// One Monte Carlo cell: a design, covariate dimension, per-arm
/// signal-to-noise ratios, replication count, and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub design: DesignConfig,
    pub k: usize,
    pub snr1: f64,
    pub snr0: f64,
    pub reps: usize,
    pub seed: u64,
}

pub const DEFAULT_REPS: usize = 1000;

impl ScenarioConfig {
    /// Parses preset names like `cre:p0.3:k29:snr1=0.25:snr0=2`,
    /// `strat:MS:k9:snr1=1:snr0=0.5`, `survey:k5:snr1=1:snr0=1`, or
    /// `cluster:k3:snr1=2:snr0=0.25`. Replications default to 1000 and the
    /// seed to 1; both can be overridden afterwards.
    pub fn from_preset(preset: &str) -> Result<Self, SimError> {
        let fail = |reason: &str| SimError::BadPreset {
            preset: preset.to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = preset.split(':').collect();
        if parts.len() < 2 {
            return Err(fail("expected design:params"));
        }
        let parse_k = |tok: &str| -> Result<usize, SimError> {
            tok.strip_prefix('k')
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail("expected k<count>"))
        };
        let parse_eq = |tok: &str, key: &str| -> Result<f64, SimError> {
            tok.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail(&format!("expected {key}=<value>")))
        };

        let (design, rest) = match parts[0] {
            "cre" => {
                let p1 = parts
                    .get(1)
                    .and_then(|tok| tok.strip_prefix('p'))
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| fail("expected p<proportion>"))?;
                (DesignConfig::Cre { n: 100, p1 }, &parts[2..])
            }
            "strat" => {
                let shape = parts
                    .get(1)
                    .ok_or_else(|| fail("expected strata shape"))?
                    .parse()
                    .map_err(|e: String| fail(&e))?;
                (DesignConfig::Stratified { shape }, &parts[2..])
            }
            "survey" => (
                DesignConfig::Survey {
                    population: 10_000,
                    fraction: 0.01,
                    p1: 0.3,
                },
                &parts[1..],
            ),
            "cluster" => (DesignConfig::Cluster { clusters: 50, p1: 0.3 }, &parts[1..]),
            other => return Err(fail(&format!("unknown design '{other}'"))),
        };
        if rest.len() != 3 {
            return Err(fail("expected k<count>:snr1=<v>:snr0=<v>"));
        }
        let k = parse_k(rest[0])?;
        let snr1 = parse_eq(rest[1], "snr1")?;
        let snr0 = parse_eq(rest[2], "snr0")?;
        let cfg = ScenarioConfig {
            design,
            k,
            snr1,
            snr0,
            reps: DEFAULT_REPS,
            seed: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.k == 0 {
            return Err(SimError::BadConfig("k must be at least 1".into()));
        }
        if !(self.snr1 > 0.0 && self.snr0 > 0.0) {
            return Err(SimError::BadConfig("SNR values must be positive".into()));
        }
        if self.reps == 0 {
            return Err(SimError::BadConfig("reps must be positive".into()));
        }
        match self.design {
            DesignConfig::Cre { n, p1 } => {
                if n < 4 {
                    return Err(SimError::BadConfig("CRE needs n >= 4".into()));
                }
                if !(0.0 < p1 && p1 < 1.0) {
                    return Err(SimError::BadConfig("p1 must lie in (0, 1)".into()));
                }
            }
            DesignConfig::Stratified { .. } => {}
            DesignConfig::Survey { population, fraction, p1 } => {
                if population < 4 {
                    return Err(SimError::BadConfig("survey population too small".into()));
                }
                if !(0.0 < fraction && fraction <= 1.0) {
                    return Err(SimError::BadConfig("fraction must lie in (0, 1]".into()));
                }
                if !(0.0 < p1 && p1 < 1.0) {
                    return Err(SimError::BadConfig("p1 must lie in (0, 1)".into()));
                }
            }
            DesignConfig::Cluster { clusters, p1 } => {
                if clusters < 4 {
                    return Err(SimError::BadConfig("cluster design needs m >= 4".into()));
                }
                if !(0.0 < p1 && p1 < 1.0) {
                    return Err(SimError::BadConfig("p1 must lie in (0, 1)".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical preset-style name, also used to derive the scenario hash.
    pub fn preset_string(&self) -> String {
        let head = match self.design {
            DesignConfig::Cre { p1, .. } => format!("cre:p{p1}"),
            DesignConfig::Stratified { shape } => format!("strat:{shape}"),
            DesignConfig::Survey { .. } => "survey".to_string(),
            DesignConfig::Cluster { .. } => "cluster".to_string(),
        };
        format!(
            "{head}:k{}:snr1={}:snr0={}",
            self.k, self.snr1, self.snr0
        )
    }

    pub fn design_kind(&self) -> DesignKind {
        self.design.kind()
    }

    pub fn scenario_hash(&self) -> u64 {
        fnv1a(&self.preset_string())
    }
}

/// FNV-1a over the preset name; stable across platforms and releases, unlike
/// the standard library hasher.
pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in s.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Aggregated Monte Carlo results for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub successes: usize,
    pub failures: usize,
    pub rmse: f64,
    pub bias: f64,
    pub mean_variance: BTreeMap<VarianceFlavor, f64>,
    pub coverage: BTreeMap<VarianceFlavor, f64>,
    pub mean_ci_length: BTreeMap<VarianceFlavor, f64>,
}

/// Full scenario summary: per-estimator metrics plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub scenario: String,
    pub seed: u64,
    pub reps_completed: usize,
    pub true_tau: f64,
    pub estimators: Vec<EstimatorSummary>,
}

impl SimSummary {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }
}
