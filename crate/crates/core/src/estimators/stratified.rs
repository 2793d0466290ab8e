//! Estimators for stratified randomized experiments: the minority-weighted
//! regression with stratum main effects and interactions, and the moment
//! plug-in competitor.

use nalgebra::{DMatrix, DVector};

use super::cre::{insert_hc_flavors, z_contrast};
use super::{
    group_by_label, mean_idx, sample_cov_matrix_idx, sample_cov_xy_idx, solve_spd, Dataset,
    EstimateReport, EstimatorError, VarianceFlavor,
};
use crate::numkit::{wls_fit, Matrix};

pub(crate) const SMALL_STRATA_HC_WARNING: &str = "hc0/hc1 can understate the sampling variance \
under stratified designs with small per-stratum arms and may yield intervals below nominal \
coverage; prefer hc2 or hc3";

/// Per-stratum bookkeeping shared by the stratified estimators.
pub(crate) struct StratumView {
    pub units: Vec<usize>,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

impl StratumView {
    pub fn pi(&self, n_total: usize) -> f64 {
        self.units.len() as f64 / n_total as f64
    }

    pub fn p1(&self) -> f64 {
        self.treated.len() as f64 / self.units.len() as f64
    }

    pub fn p0(&self) -> f64 {
        self.control.len() as f64 / self.units.len() as f64
    }
}

/// Splits the dataset by stratum label (first-appearance order) and enforces
/// `2 <= n_h1 <= n_h - 2` in every stratum.
pub(crate) fn stratum_views(ds: &Dataset) -> Result<Vec<StratumView>, EstimatorError> {
    let labels = ds
        .strata()
        .ok_or(EstimatorError::MissingLabels("stratum"))?;
    let groups = group_by_label(labels);
    let mut views = Vec::with_capacity(groups.len());
    for (label, units) in groups {
        let treated: Vec<usize> = units.iter().copied().filter(|&i| ds.z()[i]).collect();
        let control: Vec<usize> = units.iter().copied().filter(|&i| !ds.z()[i]).collect();
        if treated.len() < 2 || control.len() < 2 {
            return Err(EstimatorError::StrataTooSmall {
                label,
                treated: treated.len(),
                control: control.len(),
            });
        }
        views.push(StratumView {
            units,
            treated,
            control,
        });
    }
    Ok(views)
}

/// The unadjusted stratified estimator `sum_h pi_h (mean_y(h,1) - mean_y(h,0))`.
pub(crate) fn stratified_tau_hat(ds: &Dataset, views: &[StratumView]) -> f64 {
    views
        .iter()
        .map(|s| {
            s.pi(ds.n()) * (mean_idx(ds.y(), &s.treated) - mean_idx(ds.y(), &s.control))
        })
        .sum()
}

/// Per-arm regression weights `p_hz^-2 * n_hz / (n_hz - 1)`.
pub(crate) fn stratified_weights(ds: &Dataset, views: &[StratumView]) -> Vec<f64> {
    let mut w = vec![0.0; ds.n()];
    for s in views {
        let n1 = s.treated.len() as f64;
        let n0 = s.control.len() as f64;
        let w1 = s.p1().powi(-2) * n1 / (n1 - 1.0);
        let w0 = s.p0().powi(-2) * n0 / (n0 - 1.0);
        for &i in &s.treated {
            w[i] = w1;
        }
        for &i in &s.control {
            w[i] = w0;
        }
    }
    w
}

/// Minority-weighted regression for stratified experiments: `y` on an
/// intercept, `z`, centered stratum indicators with treatment interactions,
/// and the covariates, weighted by `p_hz^-2 n_hz/(n_hz - 1)` per arm.
///
/// HC2 and HC3 are conservative for this design; HC0 and HC1 are reported but
/// flagged in the notes. The `pooled-residual` flavor aggregates per-stratum
/// residual variances `n^-1 sum_h pi_h (s_he(1)^2/p_h1 + s_he(0)^2/p_h0)`.
pub fn tom_stratified(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let views = stratum_views(ds)?;
    let n = ds.n();
    let h_count = views.len();

    let pis: Vec<f64> = views.iter().map(|s| s.pi(n)).collect();
    let mut stratum_of = vec![0usize; n];
    for (h, s) in views.iter().enumerate() {
        for &i in &s.units {
            stratum_of[i] = h;
        }
    }

    let z_col: Vec<f64> = ds.z().iter().map(|&z| if z { 1.0 } else { 0.0 }).collect();
    let mut columns = vec![vec![1.0; n], z_col.clone()];
    for q in 1..h_count {
        let col: Vec<f64> = (0..n)
            .map(|i| (if stratum_of[i] == q { 1.0 } else { 0.0 }) - pis[q])
            .collect();
        columns.push(col);
    }
    for q in 1..h_count {
        let col: Vec<f64> = (0..n)
            .map(|i| z_col[i] * ((if stratum_of[i] == q { 1.0 } else { 0.0 }) - pis[q]))
            .collect();
        columns.push(col);
    }
    if let Some(x) = ds.x() {
        for j in 0..x.n_cols() {
            columns.push(x.column(j));
        }
    }
    let design = Matrix::from_columns(&columns)?;
    let weights = stratified_weights(ds, &views);
    let fit = wls_fit(ds.y(), &design, &weights)?;

    let point = if ds.k() == 0 {
        stratified_tau_hat(ds, &views)
    } else {
        fit.coefficients[1]
    };
    let mut report = EstimateReport::new("tom_stratified", point, alpha, design.n_cols());
    insert_hc_flavors(&mut report, &fit, &design, &z_contrast(design.n_cols()))?;

    let pooled: f64 = views
        .iter()
        .map(|s| {
            let se1: f64 = s.treated.iter().map(|&i| fit.residuals[i].powi(2)).sum::<f64>()
                / (s.treated.len() - 1) as f64;
            let se0: f64 = s.control.iter().map(|&i| fit.residuals[i].powi(2)).sum::<f64>()
                / (s.control.len() - 1) as f64;
            s.pi(n) * (se1 / s.p1() + se0 / s.p0())
        })
        .sum::<f64>()
        / n as f64;
    report.insert(VarianceFlavor::PooledResidual, pooled);
    report.notes = SMALL_STRATA_HC_WARNING.to_string();
    Ok(report)
}

/// Moment plug-in estimator: the optimal projection coefficient is estimated
/// from per-stratum sample covariances and subtracted from the unadjusted
/// stratified estimator, with a matching plug-in variance.
pub fn plugin_stratified(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let views = stratum_views(ds)?;
    let n = ds.n();
    let k = ds.k();

    let tau_hat = stratified_tau_hat(ds, &views);
    let v_tau_tau: f64 = views
        .iter()
        .map(|s| {
            s.pi(n)
                * (super::sample_var_idx(ds.y(), &s.treated) / s.p1()
                    + super::sample_var_idx(ds.y(), &s.control) / s.p0())
        })
        .sum();

    if k == 0 {
        let mut report = EstimateReport::new("plugin_stratified", tau_hat, alpha, 2 * views.len());
        report.insert(VarianceFlavor::Plugin, v_tau_tau / n as f64);
        return Ok(report);
    }
    let x = ds.x().expect("k > 0");

    // V_xx uses the full within-stratum covariate covariance: x is observed on
    // every unit, so no estimation is needed for this block.
    let mut v_xx = DMatrix::zeros(k, k);
    let mut v_xtau = DVector::zeros(k);
    let mut tau_hat_x = DVector::zeros(k);
    for s in &views {
        let pi = s.pi(n);
        v_xx += sample_cov_matrix_idx(x, &s.units) * (pi / (s.p1() * s.p0()));
        v_xtau += sample_cov_xy_idx(x, ds.y(), &s.treated) * (pi / s.p1());
        v_xtau += sample_cov_xy_idx(x, ds.y(), &s.control) * (pi / s.p0());
        let mean1 = super::col_means_idx(x, &s.treated);
        let mean0 = super::col_means_idx(x, &s.control);
        for j in 0..k {
            tau_hat_x[j] += pi * (mean1[j] - mean0[j]);
        }
    }
    let beta = solve_spd(&v_xx, &v_xtau)?;
    let point = tau_hat - beta.dot(&tau_hat_x);
    let variance = (v_tau_tau - v_xtau.dot(&beta)) / n as f64;

    let mut report = EstimateReport::new("plugin_stratified", point, alpha, 2 * views.len() + k);
    report.insert(VarianceFlavor::Plugin, variance.max(0.0));
    Ok(report)
}
