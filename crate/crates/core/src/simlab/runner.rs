//! Replication loop: fixes a population, redraws assignments, runs the
//! requested estimators, and aggregates RMSE, bias, coverage, and interval
//! length. Replications run in parallel; aggregation folds them in
//! replication order so results are bit-identical regardless of thread count.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    gen_population, EstimatorSummary, FinitePopulation, ScenarioConfig, SimError, SimSummary,
};
use crate::estimators::{
    self, Dataset, DesignKind, EstimateReport, EstimatorError, VarianceFlavor,
};
use crate::randomize::{draw, enumerate_assignments, mix64, Assignment, RngStream};

/// Estimator families; each resolves to the design-appropriate concrete
/// estimator at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    DiffInMeans,
    Tom,
    Lin,
    Fisher,
    Plugin,
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diff" | "diff-in-means" | "diff_in_means" => Ok(EstimatorKind::DiffInMeans),
            "tom" => Ok(EstimatorKind::Tom),
            "lin" => Ok(EstimatorKind::Lin),
            "fisher" => Ok(EstimatorKind::Fisher),
            "plugin" => Ok(EstimatorKind::Plugin),
            other => Err(format!("unknown estimator '{other}'")),
        }
    }
}

impl EstimatorKind {
    /// Concrete estimator name under the given design.
    pub fn resolve(&self, design: DesignKind) -> Result<&'static str, SimError> {
        let name = match (self, design) {
            (EstimatorKind::DiffInMeans, _) => "diff_in_means",
            (EstimatorKind::Tom, DesignKind::Cre) => "tom_cre",
            (EstimatorKind::Tom, DesignKind::Stratified) => "tom_stratified",
            (EstimatorKind::Tom, DesignKind::Survey) => "tom_survey",
            (EstimatorKind::Tom, DesignKind::Cluster) => "tom_cluster",
            (EstimatorKind::Lin, DesignKind::Cre) => "lin_cre",
            (EstimatorKind::Fisher, DesignKind::Cre) => "fisher_cre",
            (EstimatorKind::Plugin, DesignKind::Stratified) => "plugin_stratified",
            (EstimatorKind::Plugin, DesignKind::Survey) => "plugin_survey",
            _ => {
                return Err(SimError::NotApplicable {
                    estimator: format!("{self:?}").to_lowercase(),
                    design,
                })
            }
        };
        Ok(name)
    }

    fn run(
        &self,
        design: DesignKind,
        ds: &Dataset,
        alpha: f64,
    ) -> Result<EstimateReport, EstimatorError> {
        match (self, design) {
            (EstimatorKind::DiffInMeans, DesignKind::Cluster) => {
                // Unadjusted cluster analysis: difference of scaled totals.
                let stripped = Dataset::builder(ds.y().to_vec(), ds.z().to_vec())
                    .cluster(ds.cluster().expect("cluster labels").to_vec())
                    .build()?;
                let mut report = estimators::tom_cluster(&stripped, alpha)?;
                report.estimator = "diff_in_means".into();
                Ok(report)
            }
            (EstimatorKind::DiffInMeans, _) => estimators::diff_in_means(ds, alpha),
            (EstimatorKind::Tom, DesignKind::Cre) => estimators::tom_cre(ds, alpha),
            (EstimatorKind::Tom, DesignKind::Stratified) => estimators::tom_stratified(ds, alpha),
            (EstimatorKind::Tom, DesignKind::Survey) => estimators::tom_survey(ds, alpha),
            (EstimatorKind::Tom, DesignKind::Cluster) => estimators::tom_cluster(ds, alpha),
            (EstimatorKind::Lin, DesignKind::Cre) => estimators::lin_cre(ds, alpha),
            (EstimatorKind::Fisher, DesignKind::Cre) => estimators::fisher_cre(ds, alpha),
            (EstimatorKind::Plugin, DesignKind::Stratified) => {
                estimators::plugin_stratified(ds, alpha)
            }
            (EstimatorKind::Plugin, DesignKind::Survey) => estimators::plugin_survey(ds, alpha),
            _ => unreachable!("resolve() rejects inapplicable pairs"),
        }
    }
}

/// What to run in each replication.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub estimators: Vec<EstimatorKind>,
    pub alpha: f64,
    /// Replace random draws by exhaustive enumeration of all assignments.
    pub exhaustive: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            estimators: vec![EstimatorKind::DiffInMeans, EstimatorKind::Tom],
            alpha: 0.05,
            exhaustive: false,
        }
    }
}

struct MiniReport {
    point: f64,
    variances: BTreeMap<VarianceFlavor, f64>,
    cis: BTreeMap<VarianceFlavor, (f64, f64)>,
}

type RepOutcome = Vec<Result<MiniReport, String>>;

fn run_one(
    pop: &FinitePopulation,
    design: DesignKind,
    assignment: &Assignment,
    spec: &RunSpec,
) -> RepOutcome {
    let ds = match pop.observe(assignment) {
        Ok(ds) => ds,
        Err(e) => return spec.estimators.iter().map(|_| Err(e.to_string())).collect(),
    };
    spec.estimators
        .iter()
        .map(|kind| {
            kind.run(design, &ds, spec.alpha)
                .map(|report| MiniReport {
                    point: report.point,
                    variances: report.variances,
                    cis: report.cis,
                })
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Runs the replication loop on an already-generated population.
///
/// Random mode draws `reps` assignments, replication `r` using the stream id
/// `mix64(scenario_hash ^ (r + 1))`; exhaustive mode walks every assignment
/// the plan admits. Per-replication estimator failures are counted in the
/// summary, never dropped.
pub fn run_replications(
    pop: &FinitePopulation,
    design: DesignKind,
    reps: usize,
    seed: u64,
    scenario_hash: u64,
    scenario_name: &str,
    spec: &RunSpec,
) -> Result<SimSummary, SimError> {
    for kind in &spec.estimators {
        kind.resolve(design)?;
    }

    let outcomes: Vec<RepOutcome> = if spec.exhaustive {
        let assignments: Vec<Assignment> = enumerate_assignments(&pop.plan)?.collect();
        assignments
            .par_iter()
            .map(|assignment| run_one(pop, design, assignment, spec))
            .collect()
    } else {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let stream = mix64(scenario_hash ^ (r as u64 + 1));
                let mut rng = RngStream::new(seed, stream).rng();
                match draw(&pop.plan, &mut rng) {
                    Ok(assignment) => run_one(pop, design, &assignment, spec),
                    Err(e) => spec.estimators.iter().map(|_| Err(e.to_string())).collect(),
                }
            })
            .collect()
    };
    let reps_completed = outcomes.len();

    let mut summaries = Vec::with_capacity(spec.estimators.len());
    for (slot, kind) in spec.estimators.iter().enumerate() {
        let name = kind.resolve(design)?;
        let mut successes = 0usize;
        let mut failures = 0usize;
        let mut sum_point = 0.0;
        let mut sum_sq_err = 0.0;
        let mut var_sum: BTreeMap<VarianceFlavor, (f64, usize)> = BTreeMap::new();
        let mut cover: BTreeMap<VarianceFlavor, (usize, usize)> = BTreeMap::new();
        let mut len_sum: BTreeMap<VarianceFlavor, f64> = BTreeMap::new();
        for outcome in &outcomes {
            match &outcome[slot] {
                Ok(mini) => {
                    successes += 1;
                    sum_point += mini.point;
                    sum_sq_err += (mini.point - pop.tau).powi(2);
                    for (flavor, v) in &mini.variances {
                        let entry = var_sum.entry(*flavor).or_insert((0.0, 0));
                        entry.0 += v;
                        entry.1 += 1;
                    }
                    for (flavor, (lo, hi)) in &mini.cis {
                        let entry = cover.entry(*flavor).or_insert((0, 0));
                        if *lo <= pop.tau && pop.tau <= *hi {
                            entry.0 += 1;
                        }
                        entry.1 += 1;
                        *len_sum.entry(*flavor).or_insert(0.0) += hi - lo;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        let (rmse, bias) = if successes > 0 {
            (
                (sum_sq_err / successes as f64).sqrt(),
                sum_point / successes as f64 - pop.tau,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        summaries.push(EstimatorSummary {
            name: name.to_string(),
            successes,
            failures,
            rmse,
            bias,
            mean_variance: var_sum
                .into_iter()
                .map(|(f, (sum, count))| (f, sum / count as f64))
                .collect(),
            coverage: cover
                .iter()
                .map(|(f, (hits, count))| (*f, *hits as f64 / *count as f64))
                .collect(),
            mean_ci_length: len_sum
                .into_iter()
                .map(|(f, sum)| {
                    let count = cover[&f].1;
                    (f, sum / count as f64)
                })
                .collect(),
        });
    }

    Ok(SimSummary {
        scenario: scenario_name.to_string(),
        seed,
        reps_completed,
        true_tau: pop.tau,
        estimators: summaries,
    })
}

/// Generates the population for the scenario's seed, then runs the
/// replication loop. Deterministic given `(cfg, spec)`.
pub fn run_scenario(cfg: &ScenarioConfig, spec: &RunSpec) -> Result<SimSummary, SimError> {
    cfg.validate()?;
    let scenario_hash = cfg.scenario_hash();
    let mut rng = RngStream::new(cfg.seed, scenario_hash).rng();
    let pop = gen_population(cfg, &mut rng)?;
    run_replications(
        &pop,
        cfg.design_kind(),
        cfg.reps,
        cfg.seed,
        scenario_hash,
        &cfg.preset_string(),
        spec,
    )
}

/// `RMSE(numerator) / RMSE(denominator) - 1`; positive when the denominator
/// estimator is more accurate.
pub fn percentage_rmse_reduction(
    numerator: &EstimatorSummary,
    denominator: &EstimatorSummary,
) -> Result<f64, SimError> {
    if denominator.rmse == 0.0 || !denominator.rmse.is_finite() {
        return Err(SimError::ZeroRmse);
    }
    Ok(numerator.rmse / denominator.rmse - 1.0)
}
