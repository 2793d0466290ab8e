//! Point and variance estimators of the average treatment effect for the four
//! experiment designs, each reducible to a weighted least-squares fit, plus
//! Wald intervals.

mod cluster;
mod cre;
mod moments;
mod stratified;
mod survey;

pub use cluster::tom_cluster;
pub use cre::{fisher_cre, lin_cre, tom_cre};
pub use stratified::{plugin_stratified, tom_stratified};
pub use survey::{plugin_survey, tom_survey};

pub(crate) use moments::*;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::numkit::{HcKind, Matrix, NumError};

/// The four supported experimental designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Cre,
    Stratified,
    Survey,
    Cluster,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DesignKind::Cre => "cre",
            DesignKind::Stratified => "stratified",
            DesignKind::Survey => "survey",
            DesignKind::Cluster => "cluster",
        };
        f.write_str(s)
    }
}

impl FromStr for DesignKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cre" => Ok(DesignKind::Cre),
            "stratified" => Ok(DesignKind::Stratified),
            "survey" => Ok(DesignKind::Survey),
            "cluster" => Ok(DesignKind::Cluster),
            other => Err(format!("unknown design '{other}'")),
        }
    }
}

/// Variance estimators a report can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceFlavor {
    Hc0,
    Hc1,
    Hc2,
    Hc3,
    Neyman,
    Plugin,
    PooledResidual,
}

impl VarianceFlavor {
    pub const ALL: [VarianceFlavor; 7] = [
        VarianceFlavor::Hc0,
        VarianceFlavor::Hc1,
        VarianceFlavor::Hc2,
        VarianceFlavor::Hc3,
        VarianceFlavor::Neyman,
        VarianceFlavor::Plugin,
        VarianceFlavor::PooledResidual,
    ];

    pub fn from_hc(kind: HcKind) -> Self {
        match kind {
            HcKind::Hc0 => VarianceFlavor::Hc0,
            HcKind::Hc1 => VarianceFlavor::Hc1,
            HcKind::Hc2 => VarianceFlavor::Hc2,
            HcKind::Hc3 => VarianceFlavor::Hc3,
        }
    }
}

impl fmt::Display for VarianceFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VarianceFlavor::Hc0 => "hc0",
            VarianceFlavor::Hc1 => "hc1",
            VarianceFlavor::Hc2 => "hc2",
            VarianceFlavor::Hc3 => "hc3",
            VarianceFlavor::Neyman => "neyman",
            VarianceFlavor::Plugin => "plugin",
            VarianceFlavor::PooledResidual => "pooled-residual",
        };
        f.write_str(s)
    }
}

impl FromStr for VarianceFlavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hc0" => Ok(VarianceFlavor::Hc0),
            "hc1" => Ok(VarianceFlavor::Hc1),
            "hc2" => Ok(VarianceFlavor::Hc2),
            "hc3" => Ok(VarianceFlavor::Hc3),
            "neyman" => Ok(VarianceFlavor::Neyman),
            "plugin" => Ok(VarianceFlavor::Plugin),
            "pooled-residual" => Ok(VarianceFlavor::PooledResidual),
            other => Err(format!("unknown variance flavor '{other}'")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("{arm} arm has {count} unit(s); this estimator needs at least {needed}")]
    EmptyArm {
        arm: &'static str,
        count: usize,
        needed: usize,
    },
    #[error("design matrix is rank deficient; check for constant or collinear covariates")]
    RankDeficient,
    #[error("stratum '{label}' has treated/control counts {treated}/{control}; each arm needs at least 2")]
    StrataTooSmall {
        label: String,
        treated: usize,
        control: usize,
    },
    #[error("sampling-stage covariates are present but their population mean is missing")]
    MissingPopulationMean,
    #[error("survey analysis needs a sampling fraction f in (0, 1]")]
    MissingSamplingFraction,
    #[error("sampling fraction must lie in (0, 1], got {0}")]
    BadSamplingFraction(f64),
    #[error("this estimator needs {0} labels on every unit")]
    MissingLabels(&'static str),
    #[error("cluster-level covariate column {column} varies within cluster '{label}'")]
    ClusterCovariateVaries { column: usize, label: String },
    #[error("treatment is not constant within cluster '{label}'")]
    MixedClusterTreatment { label: String },
    #[error("dataset is inconsistent: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Numeric(NumError),
}

impl From<NumError> for EstimatorError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::RankDeficient => EstimatorError::RankDeficient,
            other => EstimatorError::Numeric(other),
        }
    }
}

/// Observed data from one experiment: outcomes, treatment, covariates, and
/// whatever design structure applies.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    z: Vec<bool>,
    x: Option<Matrix>,
    strata: Option<Vec<String>>,
    cluster: Option<Vec<String>>,
    cluster_covariates: Option<Matrix>,
    v: Option<Matrix>,
    v_bar: Option<Vec<f64>>,
    f: Option<f64>,
}

impl Dataset {
    pub fn builder(y: Vec<f64>, z: Vec<bool>) -> DatasetBuilder {
        DatasetBuilder {
            y,
            z,
            x: None,
            strata: None,
            cluster: None,
            cluster_covariates: None,
            v: None,
            v_bar: None,
            f: None,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of analysis covariates (columns of x).
    pub fn k(&self) -> usize {
        self.x.as_ref().map_or(0, Matrix::n_cols)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[bool] {
        &self.z
    }

    pub fn x(&self) -> Option<&Matrix> {
        self.x.as_ref()
    }

    pub fn strata(&self) -> Option<&[String]> {
        self.strata.as_deref()
    }

    pub fn cluster(&self) -> Option<&[String]> {
        self.cluster.as_deref()
    }

    pub fn cluster_covariates(&self) -> Option<&Matrix> {
        self.cluster_covariates.as_ref()
    }

    pub fn v(&self) -> Option<&Matrix> {
        self.v.as_ref()
    }

    pub fn v_bar(&self) -> Option<&[f64]> {
        self.v_bar.as_deref()
    }

    pub fn sampling_fraction(&self) -> Option<f64> {
        self.f
    }

    pub(crate) fn treated_control(&self) -> (Vec<usize>, Vec<usize>) {
        arm_split(&self.z)
    }
}

pub struct DatasetBuilder {
    y: Vec<f64>,
    z: Vec<bool>,
    x: Option<Matrix>,
    strata: Option<Vec<String>>,
    cluster: Option<Vec<String>>,
    cluster_covariates: Option<Matrix>,
    v: Option<Matrix>,
    v_bar: Option<Vec<f64>>,
    f: Option<f64>,
}

impl DatasetBuilder {
    pub fn covariates(mut self, x: Matrix) -> Self {
        self.x = Some(x);
        self
    }

    pub fn maybe_covariates(mut self, x: Option<Matrix>) -> Self {
        self.x = x;
        self
    }

    pub fn strata(mut self, labels: Vec<String>) -> Self {
        self.strata = Some(labels);
        self
    }

    pub fn cluster(mut self, labels: Vec<String>) -> Self {
        self.cluster = Some(labels);
        self
    }

    /// Cluster-level covariates, supplied per unit and constant within each
    /// cluster.
    pub fn cluster_covariates(mut self, c: Matrix) -> Self {
        self.cluster_covariates = Some(c);
        self
    }

    /// Sampling-stage covariates with their finite-population mean.
    pub fn sampling_covariates(mut self, v: Matrix, v_bar: Vec<f64>) -> Self {
        self.v = Some(v);
        self.v_bar = Some(v_bar);
        self
    }

    pub fn sampling_fraction(mut self, f: f64) -> Self {
        self.f = Some(f);
        self
    }

    pub fn build(self) -> Result<Dataset, EstimatorError> {
        let n = self.y.len();
        if n == 0 {
            return Err(EstimatorError::InvalidDataset("no observations".into()));
        }
        if self.z.len() != n {
            return Err(EstimatorError::InvalidDataset(format!(
                "treatment vector has {} entries for {} outcomes",
                self.z.len(),
                n
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::InvalidDataset("non-finite outcome".into()));
        }
        for (name, len) in [
            ("covariate matrix rows", self.x.as_ref().map(Matrix::n_rows)),
            ("strata labels", self.strata.as_ref().map(Vec::len)),
            ("cluster labels", self.cluster.as_ref().map(Vec::len)),
            (
                "cluster covariate rows",
                self.cluster_covariates.as_ref().map(Matrix::n_rows),
            ),
            ("sampling covariate rows", self.v.as_ref().map(Matrix::n_rows)),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(EstimatorError::InvalidDataset(format!(
                        "{name} cover {len} units, dataset has {n}"
                    )));
                }
            }
        }
        if self.v.is_some() {
            match (&self.v, &self.v_bar) {
                (Some(v), Some(v_bar)) if v_bar.len() == v.n_cols() => {}
                (Some(_), Some(_)) => {
                    return Err(EstimatorError::InvalidDataset(
                        "population mean length does not match sampling covariates".into(),
                    ))
                }
                _ => return Err(EstimatorError::MissingPopulationMean),
            }
        }
        if let Some(f) = self.f {
            if !(f > 0.0 && f <= 1.0) {
                return Err(EstimatorError::BadSamplingFraction(f));
            }
        }
        if let Some(c) = &self.cluster_covariates {
            let labels = self
                .cluster
                .as_ref()
                .ok_or(EstimatorError::MissingLabels("cluster"))?;
            let mut first_seen: std::collections::HashMap<&str, usize> = Default::default();
            for i in 0..n {
                let first = *first_seen.entry(labels[i].as_str()).or_insert(i);
                for j in 0..c.n_cols() {
                    if c.get(i, j) != c.get(first, j) {
                        return Err(EstimatorError::ClusterCovariateVaries {
                            column: j,
                            label: labels[i].clone(),
                        });
                    }
                }
            }
        }
        Ok(Dataset {
            y: self.y,
            z: self.z,
            x: self.x,
            strata: self.strata,
            cluster: self.cluster,
            cluster_covariates: self.cluster_covariates,
            v: self.v,
            v_bar: self.v_bar,
            f: self.f,
        })
    }
}

/// One estimator's output: the point estimate, every computed variance with
/// its Wald interval, and provenance notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub point: f64,
    pub variances: BTreeMap<VarianceFlavor, f64>,
    pub cis: BTreeMap<VarianceFlavor, (f64, f64)>,
    pub alpha: f64,
    pub df_columns: usize,
    pub notes: String,
}

impl EstimateReport {
    pub(crate) fn new(estimator: &str, point: f64, alpha: f64, df_columns: usize) -> Self {
        Self {
            estimator: estimator.to_string(),
            point,
            variances: BTreeMap::new(),
            cis: BTreeMap::new(),
            alpha,
            df_columns,
            notes: String::new(),
        }
    }

    pub(crate) fn insert(&mut self, flavor: VarianceFlavor, variance: f64) {
        self.variances.insert(flavor, variance);
        self.cis
            .insert(flavor, wald_ci(self.point, variance, self.alpha));
    }

    pub fn variance(&self, flavor: VarianceFlavor) -> Option<f64> {
        self.variances.get(&flavor).copied()
    }

    pub fn ci(&self, flavor: VarianceFlavor) -> Option<(f64, f64)> {
        self.cis.get(&flavor).copied()
    }
}

/// Wald interval `point + sqrt(variance) * (q_{alpha/2}, q_{1-alpha/2})` with
/// standard-normal quantiles. A zero variance degenerates to the point.
pub fn wald_ci(point: f64, variance: f64, alpha: f64) -> (f64, f64) {
    debug_assert!(variance >= 0.0 && alpha > 0.0 && alpha < 1.0);
    let se = variance.max(0.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let lo = point + se * normal.inverse_cdf(alpha / 2.0);
    let hi = point + se * normal.inverse_cdf(1.0 - alpha / 2.0);
    (lo, hi)
}

/// Difference in observed arm means with the classic Neyman variance
/// `s1^2/n1 + s0^2/n0`.
pub fn diff_in_means(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let (treated, control) = ds.treated_control();
    require_arms(&treated, &control, 1)?;
    let point = mean_idx(ds.y(), &treated) - mean_idx(ds.y(), &control);
    let mut report = EstimateReport::new("diff_in_means", point, alpha, 2);
    if treated.len() >= 2 && control.len() >= 2 {
        let variance = sample_var_idx(ds.y(), &treated) / treated.len() as f64
            + sample_var_idx(ds.y(), &control) / control.len() as f64;
        report.insert(VarianceFlavor::Neyman, variance);
    } else {
        report.notes =
            "neyman variance omitted: an arm has a single unit, so its sample variance is undefined"
                .into();
    }
    Ok(report)
}

pub(crate) fn require_arms(
    treated: &[usize],
    control: &[usize],
    needed: usize,
) -> Result<(), EstimatorError> {
    if treated.len() < needed {
        return Err(EstimatorError::EmptyArm {
            arm: "treated",
            count: treated.len(),
            needed,
        });
    }
    if control.len() < needed {
        return Err(EstimatorError::EmptyArm {
            arm: "control",
            count: control.len(),
            needed,
        });
    }
    Ok(())
}
