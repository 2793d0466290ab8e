//! Finite-population generators. Potential outcomes follow a linear model
//! `y_i(z) = alpha_z + x_i'beta_z + e_i(z)` with heavy-tailed coefficients
//! (t with three degrees of freedom), equicorrelated Gaussian covariates
//! (off-diagonal correlation 0.4), and Gaussian errors rescaled so that the
//! realized finite-population variance ratio var(signal)/var(error) hits the
//! requested signal-to-noise exactly.

use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};

use super::{DesignConfig, ScenarioConfig, SimError, StrataShape};
use crate::estimators::{Dataset, EstimatorError};
use crate::numkit::Matrix;
use crate::randomize::{Assignment, AssignmentPlan, StratumPlan};

/// A generated population: potential outcomes, covariates, design structure,
/// and the randomization plan. Fixed once generated; replications only redraw
/// the assignment.
#[derive(Debug, Clone)]
pub struct FinitePopulation {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// Linear signal parts of the potential outcomes; `y - signal` recovers
    /// the calibrated errors.
    pub signal1: Vec<f64>,
    pub signal0: Vec<f64>,
    pub x: Option<Matrix>,
    pub v: Option<Matrix>,
    pub v_bar: Option<Vec<f64>>,
    pub stratum_of: Option<Vec<usize>>,
    pub cluster_of: Option<Vec<usize>>,
    pub plan: AssignmentPlan,
    pub tau: f64,
}

impl FinitePopulation {
    pub fn size(&self) -> usize {
        self.y1.len()
    }

    /// Materializes the observed dataset for one realized assignment.
    pub fn observe(&self, assignment: &Assignment) -> Result<Dataset, EstimatorError> {
        match assignment {
            Assignment::Units(z) => {
                let y: Vec<f64> = z
                    .iter()
                    .enumerate()
                    .map(|(i, &zi)| if zi { self.y1[i] } else { self.y0[i] })
                    .collect();
                let mut builder = Dataset::builder(y, z.clone());
                if let Some(x) = &self.x {
                    builder = builder.covariates(x.clone());
                }
                if let Some(strata) = &self.stratum_of {
                    builder = builder.strata(strata.iter().map(|h| format!("s{h}")).collect());
                }
                builder.build()
            }
            Assignment::Survey { sampled, z } => {
                let idx: Vec<usize> = sampled
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &s)| s.then_some(i))
                    .collect();
                let y: Vec<f64> = idx
                    .iter()
                    .zip(z.iter())
                    .map(|(&i, &zi)| if zi { self.y1[i] } else { self.y0[i] })
                    .collect();
                let f = idx.len() as f64 / sampled.len() as f64;
                let mut builder =
                    Dataset::builder(y, z.clone()).sampling_fraction(f);
                if let Some(x) = &self.x {
                    builder = builder.covariates(x.select_rows(&idx)?);
                }
                if let (Some(v), Some(v_bar)) = (&self.v, &self.v_bar) {
                    builder = builder.sampling_covariates(v.select_rows(&idx)?, v_bar.clone());
                }
                builder.build()
            }
            Assignment::Clusters(zc) => {
                let cluster_of = self
                    .cluster_of
                    .as_ref()
                    .ok_or(EstimatorError::MissingLabels("cluster"))?;
                let z: Vec<bool> = cluster_of.iter().map(|&c| zc[c]).collect();
                let y: Vec<f64> = z
                    .iter()
                    .enumerate()
                    .map(|(i, &zi)| if zi { self.y1[i] } else { self.y0[i] })
                    .collect();
                let mut builder = Dataset::builder(y, z)
                    .cluster(cluster_of.iter().map(|c| format!("c{c}")).collect());
                if let Some(x) = &self.x {
                    builder = builder.covariates(x.clone());
                }
                builder.build()
            }
        }
    }
}

/// One draw from a t distribution with three degrees of freedom, composed
/// from a Gaussian over the square root of a scaled chi-square.
pub(crate) fn draw_t3<R: Rng>(rng: &mut R) -> f64 {
    let normal: f64 = StandardNormal.sample(rng);
    let chi2: f64 = ChiSquared::new(3.0).expect("valid dof").sample(rng);
    normal / (chi2 / 3.0).sqrt()
}

/// One covariate row with unit variances and off-diagonal correlation 0.4,
/// built from a shared factor plus independent noise.
fn draw_covariate_row<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let shared: f64 = StandardNormal.sample(rng);
    (0..k)
        .map(|_| {
            let own: f64 = StandardNormal.sample(rng);
            0.4_f64.sqrt() * shared + 0.6_f64.sqrt() * own
        })
        .collect()
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Scales raw errors so var(signal)/var(error) equals `snr` exactly in the
/// realized population.
fn calibrate_errors(signal: &[f64], raw: &[f64], snr: f64) -> Result<Vec<f64>, SimError> {
    let var_signal = population_variance(signal);
    let var_raw = population_variance(raw);
    if var_signal <= f64::EPSILON || var_raw <= f64::EPSILON {
        return Err(SimError::BadConfig(
            "degenerate signal or error variance; cannot calibrate SNR".into(),
        ));
    }
    let scale = (var_signal / (snr * var_raw)).sqrt();
    Ok(raw.iter().map(|e| e * scale).collect())
}

fn round_count(value: f64) -> usize {
    value.round() as usize
}

struct LinearModel {
    alpha1: f64,
    beta1: Vec<f64>,
    alpha0: f64,
    beta0: Vec<f64>,
}

fn draw_linear_model<R: Rng>(k: usize, rng: &mut R) -> LinearModel {
    let alpha1 = draw_t3(rng);
    let beta1 = (0..k).map(|_| draw_t3(rng)).collect();
    let alpha0 = draw_t3(rng);
    let beta0 = (0..k).map(|_| draw_t3(rng)).collect();
    LinearModel {
        alpha1,
        beta1,
        alpha0,
        beta0,
    }
}

fn outcomes_from_signals<R: Rng>(
    signal1: &[f64],
    signal0: &[f64],
    snr1: f64,
    snr0: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let n = signal1.len();
    let raw1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let raw0: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let e1 = calibrate_errors(signal1, &raw1, snr1)?;
    let e0 = calibrate_errors(signal0, &raw0, snr0)?;
    let y1 = signal1.iter().zip(&e1).map(|(s, e)| s + e).collect();
    let y0 = signal0.iter().zip(&e0).map(|(s, e)| s + e).collect();
    Ok((y1, y0))
}

fn tau_of(y1: &[f64], y0: &[f64]) -> f64 {
    y1.iter()
        .zip(y0)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / y1.len() as f64
}

/// Completely randomized experiment population of `n` units.
pub fn gen_cre_population<R: Rng>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<FinitePopulation, SimError> {
    cfg.validate()?;
    let DesignConfig::Cre { n, p1 } = cfg.design else {
        return Err(SimError::BadConfig("expected a CRE scenario".into()));
    };
    let model = draw_linear_model(cfg.k, rng);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| draw_covariate_row(cfg.k, rng)).collect();
    let x = Matrix::from_rows(&rows).map_err(EstimatorError::from)?;
    let dot = |row: &[f64], beta: &[f64]| row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let signal1: Vec<f64> = rows.iter().map(|r| model.alpha1 + dot(r, &model.beta1)).collect();
    let signal0: Vec<f64> = rows.iter().map(|r| model.alpha0 + dot(r, &model.beta0)).collect();
    let (y1, y0) = outcomes_from_signals(&signal1, &signal0, cfg.snr1, cfg.snr0, rng)?;
    let plan = AssignmentPlan::Cre {
        units: n,
        treated: round_count(p1 * n as f64),
    };
    plan.validate()?;
    let tau = tau_of(&y1, &y0);
    Ok(FinitePopulation {
        y1,
        y0,
        signal1,
        signal0,
        x: Some(x),
        v: None,
        v_bar: None,
        stratum_of: None,
        cluster_of: None,
        plan,
        tau,
    })
}

fn stratum_sizes<R: Rng>(shape: StrataShape, rng: &mut R) -> Vec<usize> {
    let small = |rng: &mut R| rng.random_range(10..=20);
    let large = |rng: &mut R| rng.random_range(140..=160);
    match shape {
        StrataShape::ManySmall => (0..20).map(|_| small(rng)).collect(),
        StrataShape::FewLarge => (0..2).map(|_| large(rng)).collect(),
        StrataShape::Mixed => {
            let mut sizes: Vec<usize> = (0..10).map(|_| small(rng)).collect();
            sizes.extend((0..2).map(|_| large(rng)));
            sizes
        }
    }
}

/// Stratified population with random-effect stratum intercepts and slopes and
/// Beta(4,5) treated fractions truncated to keep two units per arm.
pub fn gen_stratified_population<R: Rng>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<FinitePopulation, SimError> {
    cfg.validate()?;
    let DesignConfig::Stratified { shape } = cfg.design else {
        return Err(SimError::BadConfig("expected a stratified scenario".into()));
    };
    let sizes = stratum_sizes(shape, rng);
    let model = draw_linear_model(cfg.k, rng);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut signal1 = Vec::new();
    let mut signal0 = Vec::new();
    let mut stratum_of = Vec::new();
    for (h, &n_h) in sizes.iter().enumerate() {
        let eta1: f64 = StandardNormal.sample(rng);
        let zeta1: Vec<f64> = (0..cfg.k).map(|_| StandardNormal.sample(rng)).collect();
        let eta0: f64 = StandardNormal.sample(rng);
        let zeta0: Vec<f64> = (0..cfg.k).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..n_h {
            let row = draw_covariate_row(cfg.k, rng);
            let s1 = model.alpha1
                + eta1
                + row
                    .iter()
                    .zip(model.beta1.iter().zip(&zeta1))
                    .map(|(x, (b, z))| x * (b + z))
                    .sum::<f64>();
            let s0 = model.alpha0
                + eta0
                + row
                    .iter()
                    .zip(model.beta0.iter().zip(&zeta0))
                    .map(|(x, (b, z))| x * (b + z))
                    .sum::<f64>();
            rows.push(row);
            signal1.push(s1);
            signal0.push(s0);
            stratum_of.push(h);
        }
    }
    let x = Matrix::from_rows(&rows).map_err(EstimatorError::from)?;
    let (y1, y0) = outcomes_from_signals(&signal1, &signal0, cfg.snr1, cfg.snr0, rng)?;

    let beta = Beta::new(4.0, 5.0).expect("valid shape");
    let strata = sizes
        .iter()
        .map(|&n_h| {
            let c: f64 = beta.sample(rng);
            let treated = ((c * n_h as f64).floor() as usize).clamp(2, n_h - 2);
            StratumPlan { units: n_h, treated }
        })
        .collect();
    let plan = AssignmentPlan::Stratified { strata };
    plan.validate()?;
    let tau = tau_of(&y1, &y0);
    Ok(FinitePopulation {
        y1,
        y0,
        signal1,
        signal0,
        x: Some(x),
        v: None,
        v_bar: None,
        stratum_of: Some(stratum_of),
        cluster_of: None,
        plan,
        tau,
    })
}

/// Survey population: the outcome model runs over all `N` units and the first
/// two covariate columns double as the sampling-stage covariates, centered at
/// their exact population mean.
pub fn gen_survey_population<R: Rng>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<FinitePopulation, SimError> {
    cfg.validate()?;
    let DesignConfig::Survey { population, fraction, p1 } = cfg.design else {
        return Err(SimError::BadConfig("expected a survey scenario".into()));
    };
    let model = draw_linear_model(cfg.k, rng);
    let rows: Vec<Vec<f64>> = (0..population)
        .map(|_| draw_covariate_row(cfg.k, rng))
        .collect();
    let x = Matrix::from_rows(&rows).map_err(EstimatorError::from)?;
    let dot = |row: &[f64], beta: &[f64]| row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let signal1: Vec<f64> = rows.iter().map(|r| model.alpha1 + dot(r, &model.beta1)).collect();
    let signal0: Vec<f64> = rows.iter().map(|r| model.alpha0 + dot(r, &model.beta0)).collect();
    let (y1, y0) = outcomes_from_signals(&signal1, &signal0, cfg.snr1, cfg.snr0, rng)?;

    let k1 = cfg.k.min(2);
    let v_cols: Vec<Vec<f64>> = (0..k1).map(|j| x.column(j)).collect();
    let v = Matrix::from_columns(&v_cols).map_err(EstimatorError::from)?;
    let v_bar: Vec<f64> = (0..k1)
        .map(|j| v.column(j).iter().sum::<f64>() / population as f64)
        .collect();

    let sample = round_count(fraction * population as f64);
    let plan = AssignmentPlan::Survey {
        population,
        sample,
        treated: round_count(p1 * sample as f64),
    };
    plan.validate()?;
    let tau = tau_of(&y1, &y0);
    Ok(FinitePopulation {
        y1,
        y0,
        signal1,
        signal0,
        x: Some(x),
        v: Some(v),
        v_bar: Some(v_bar),
        stratum_of: None,
        cluster_of: None,
        plan,
        tau,
    })
}

/// Cluster population: cluster sizes uniform on {4..10}, random-effect
/// intercepts and slopes per cluster.
pub fn gen_cluster_population<R: Rng>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<FinitePopulation, SimError> {
    cfg.validate()?;
    let DesignConfig::Cluster { clusters, p1 } = cfg.design else {
        return Err(SimError::BadConfig("expected a cluster scenario".into()));
    };
    let sizes: Vec<usize> = (0..clusters).map(|_| rng.random_range(4..=10)).collect();
    let model = draw_linear_model(cfg.k, rng);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut signal1 = Vec::new();
    let mut signal0 = Vec::new();
    let mut cluster_of = Vec::new();
    for (c, &n_c) in sizes.iter().enumerate() {
        let eta1: f64 = StandardNormal.sample(rng);
        let zeta1: Vec<f64> = (0..cfg.k).map(|_| StandardNormal.sample(rng)).collect();
        let eta0: f64 = StandardNormal.sample(rng);
        let zeta0: Vec<f64> = (0..cfg.k).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..n_c {
            let row = draw_covariate_row(cfg.k, rng);
            let s1 = model.alpha1
                + eta1
                + row
                    .iter()
                    .zip(model.beta1.iter().zip(&zeta1))
                    .map(|(x, (b, z))| x * (b + z))
                    .sum::<f64>();
            let s0 = model.alpha0
                + eta0
                + row
                    .iter()
                    .zip(model.beta0.iter().zip(&zeta0))
                    .map(|(x, (b, z))| x * (b + z))
                    .sum::<f64>();
            rows.push(row);
            signal1.push(s1);
            signal0.push(s0);
            cluster_of.push(c);
        }
    }
    let x = Matrix::from_rows(&rows).map_err(EstimatorError::from)?;
    let (y1, y0) = outcomes_from_signals(&signal1, &signal0, cfg.snr1, cfg.snr0, rng)?;
    let plan = AssignmentPlan::Cluster {
        clusters,
        treated: round_count(p1 * clusters as f64),
    };
    plan.validate()?;
    let tau = tau_of(&y1, &y0);
    Ok(FinitePopulation {
        y1,
        y0,
        signal1,
        signal0,
        x: Some(x),
        v: None,
        v_bar: None,
        stratum_of: None,
        cluster_of: Some(cluster_of),
        plan,
        tau,
    })
}

/// Dispatches to the design-specific generator.
pub fn gen_population<R: Rng>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<FinitePopulation, SimError> {
    match cfg.design {
        DesignConfig::Cre { .. } => gen_cre_population(cfg, rng),
        DesignConfig::Stratified { .. } => gen_stratified_population(cfg, rng),
        DesignConfig::Survey { .. } => gen_survey_population(cfg, rng),
        DesignConfig::Cluster { .. } => gen_cluster_population(cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomize::RngStream;
    use approx::assert_abs_diff_eq;

    fn cre_cfg() -> ScenarioConfig {
        ScenarioConfig {
            design: DesignConfig::Cre { n: 60, p1: 0.4 },
            k: 3,
            snr1: 1.0,
            snr0: 0.5,
            reps: 10,
            seed: 5,
        }
    }

    #[test]
    fn snr_calibration_is_exact() {
        let cfg = cre_cfg();
        let mut rng = RngStream::new(5, 0).rng();
        let pop = gen_cre_population(&cfg, &mut rng).unwrap();
        for (signal, y, snr) in [
            (&pop.signal1, &pop.y1, cfg.snr1),
            (&pop.signal0, &pop.y0, cfg.snr0),
        ] {
            let errors: Vec<f64> = y.iter().zip(signal.iter()).map(|(a, b)| a - b).collect();
            let ratio = population_variance(signal) / population_variance(&errors);
            assert_abs_diff_eq!(ratio, snr, epsilon = 1e-10);
        }
    }

    #[test]
    fn tau_matches_mean_outcome_difference() {
        let cfg = cre_cfg();
        let mut rng = RngStream::new(9, 0).rng();
        let pop = gen_cre_population(&cfg, &mut rng).unwrap();
        assert_abs_diff_eq!(
            pop.tau,
            pop.y1.iter().zip(&pop.y0).map(|(a, b)| a - b).sum::<f64>() / pop.size() as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stratified_plan_respects_truncation() {
        let cfg = ScenarioConfig {
            design: DesignConfig::Stratified { shape: StrataShape::ManySmall },
            k: 2,
            snr1: 1.0,
            snr0: 1.0,
            reps: 10,
            seed: 3,
        };
        let mut rng = RngStream::new(3, 0).rng();
        let pop = gen_stratified_population(&cfg, &mut rng).unwrap();
        let AssignmentPlan::Stratified { strata } = &pop.plan else {
            panic!("wrong plan kind")
        };
        assert_eq!(strata.len(), 20);
        for s in strata {
            assert!((10..=20).contains(&s.units));
            assert!(s.treated >= 2 && s.treated + 2 <= s.units);
        }
    }

    #[test]
    fn survey_population_mean_is_exact() {
        let cfg = ScenarioConfig {
            design: DesignConfig::Survey { population: 200, fraction: 0.2, p1: 0.3 },
            k: 4,
            snr1: 1.0,
            snr0: 1.0,
            reps: 10,
            seed: 7,
        };
        let mut rng = RngStream::new(7, 0).rng();
        let pop = gen_survey_population(&cfg, &mut rng).unwrap();
        let v = pop.v.as_ref().unwrap();
        let x = pop.x.as_ref().unwrap();
        assert_eq!(v.n_cols(), 2);
        for j in 0..2 {
            assert_eq!(v.column(j), x.column(j));
            let mean = v.column(j).iter().sum::<f64>() / 200.0;
            assert_eq!(pop.v_bar.as_ref().unwrap()[j], mean);
        }
        assert!(matches!(
            pop.plan,
            AssignmentPlan::Survey { population: 200, sample: 40, treated: 12 }
        ));
    }

    #[test]
    fn cluster_sizes_in_range() {
        let cfg = ScenarioConfig {
            design: DesignConfig::Cluster { clusters: 50, p1: 0.3 },
            k: 1,
            snr1: 1.0,
            snr0: 1.0,
            reps: 10,
            seed: 2,
        };
        let mut rng = RngStream::new(2, 0).rng();
        let pop = gen_cluster_population(&cfg, &mut rng).unwrap();
        let cluster_of = pop.cluster_of.as_ref().unwrap();
        let mut counts = vec![0usize; 50];
        for &c in cluster_of {
            counts[c] += 1;
        }
        for count in counts {
            assert!((4..=10).contains(&count));
        }
        assert!(matches!(pop.plan, AssignmentPlan::Cluster { clusters: 50, treated: 15 }));
    }
}
