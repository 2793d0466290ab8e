//! Calibration-weight and leverage-score diagnostics comparing the
//! minority-weighted adjustment with the with-interaction adjustment.
//!
//! Both regression-adjusted estimators can be written as weighted differences
//! `sum_{treated} c_i y_i - sum_{control} c_i y_i` whose weights sum to one in
//! each arm. The diagnostics expose those weights, their distance from the
//! uniform weights, and the per-unit leverage scores, for which the
//! minority-weighted fit dominates the with-interaction fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    arm_split, col_means_idx, group_by_label, sample_cov_matrix_idx, sample_cross_cov_idx,
    Dataset, DesignKind, EstimatorError,
};
use crate::numkit::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("diagnostics require covariates (k >= 1)")]
    NeedCovariates,
    #[error("{arm} arm has {count} unit(s); diagnostics need at least 2")]
    ArmTooSmall { arm: &'static str, count: usize },
    #[error("covariate covariance is singular")]
    RankDeficient,
    #[error("closed-form leverages for the {design} design support only the minority-weighted fit")]
    UnsupportedMethod { design: DesignKind },
    #[error("the {0} design has no closed-form leverage here")]
    UnsupportedDesign(DesignKind),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Which adjustment's weights or leverages to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMethod {
    Tom,
    Lin,
}

/// Calibration and leverage diagnostics for a completely randomized dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub calib_tom: Vec<f64>,
    pub calib_lin: Vec<f64>,
    pub distance_tom: f64,
    pub distance_lin: f64,
    pub lev_tom: Vec<f64>,
    pub lev_lin: Vec<f64>,
    pub lev_closed_form: Vec<f64>,
    pub lev_hat_matrix: Vec<f64>,
}

fn solve_sym(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, DiagnosticsError> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.clone().lu().solve(b).ok_or(DiagnosticsError::RankDeficient)
}

/// `b' A^-1 b`, taken as zero when `b` vanishes so that degenerate
/// zero-centered covariates keep their limiting leverage.
fn quad_form(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<f64, DiagnosticsError> {
    if b.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(solve_sym(a, b)?.dot(b))
}

fn cre_preconditions(ds: &Dataset) -> Result<(Vec<usize>, Vec<usize>), DiagnosticsError> {
    if ds.k() == 0 {
        return Err(DiagnosticsError::NeedCovariates);
    }
    let (treated, control) = arm_split(ds.z());
    if treated.len() < 2 {
        return Err(DiagnosticsError::ArmTooSmall {
            arm: "treated",
            count: treated.len(),
        });
    }
    if control.len() < 2 {
        return Err(DiagnosticsError::ArmTooSmall {
            arm: "control",
            count: control.len(),
        });
    }
    Ok((treated, control))
}

/// Closed-form calibration weights of the chosen adjustment under complete
/// randomization. Weights sum to one within each arm; the `tom` weights
/// balance the covariate contrast across arms while the `lin` weights pin
/// both arm averages to the grand covariate mean.
pub fn calibration_weights(
    ds: &Dataset,
    method: AdjustMethod,
) -> Result<Vec<f64>, DiagnosticsError> {
    let (treated, control) = cre_preconditions(ds)?;
    let x = ds.x().expect("k >= 1");
    let n = ds.n();
    let n1 = treated.len() as f64;
    let n0 = control.len() as f64;
    let p1 = n1 / n as f64;
    let p0 = n0 / n as f64;

    let mean1 = col_means_idx(x, &treated);
    let mean0 = col_means_idx(x, &control);
    let tau_x = DVector::from_fn(x.n_cols(), |j, _| mean1[j] - mean0[j]);
    let ss1 = sample_cov_matrix_idx(x, &treated) * (n1 - 1.0);
    let ss0 = sample_cov_matrix_idx(x, &control) * (n0 - 1.0);

    let mut weights = vec![0.0; n];
    match method {
        AdjustMethod::Tom => {
            let m = &ss1 * p1.powi(-2) + &ss0 * p0.powi(-2);
            let m_inv_tau = solve_sym(&m, &tau_x)?;
            for &i in &treated {
                let dot: f64 = (0..x.n_cols())
                    .map(|j| m_inv_tau[j] * (x.get(i, j) - mean1[j]))
                    .sum();
                weights[i] = 1.0 / n1 - dot * p1.powi(-2);
            }
            for &i in &control {
                let dot: f64 = (0..x.n_cols())
                    .map(|j| m_inv_tau[j] * (x.get(i, j) - mean0[j]))
                    .sum();
                weights[i] = 1.0 / n0 + dot * p0.powi(-2);
            }
        }
        AdjustMethod::Lin => {
            let inv1_tau = solve_sym(&ss1, &tau_x)?;
            let inv0_tau = solve_sym(&ss0, &tau_x)?;
            for &i in &treated {
                let dot: f64 = (0..x.n_cols())
                    .map(|j| inv1_tau[j] * (x.get(i, j) - mean1[j]))
                    .sum();
                weights[i] = 1.0 / n1 - p0 * dot;
            }
            for &i in &control {
                let dot: f64 = (0..x.n_cols())
                    .map(|j| inv0_tau[j] * (x.get(i, j) - mean0[j]))
                    .sum();
                weights[i] = 1.0 / n0 + p1 * dot;
            }
        }
    }
    Ok(weights)
}

/// Distance between calibrated and uniform weights:
/// `F(c) = sum_{treated} G(c_i n1) + sum_{control} G(c_i n0)` with
/// `G(x) = (x - 1)^2 / 2`.
pub fn distance(c: &[f64], z: &[bool]) -> f64 {
    let (treated, control) = arm_split(z);
    let n1 = treated.len() as f64;
    let n0 = control.len() as f64;
    let g = |x: f64| (x - 1.0).powi(2) / 2.0;
    treated.iter().map(|&i| g(c[i] * n1)).sum::<f64>()
        + control.iter().map(|&i| g(c[i] * n0)).sum::<f64>()
}

/// Closed-form leverage scores per design. The with-interaction form exists
/// only under complete randomization; stratified and survey designs cover the
/// minority-weighted fit.
pub fn leverage_closed_form(
    ds: &Dataset,
    design: DesignKind,
    method: AdjustMethod,
) -> Result<Vec<f64>, DiagnosticsError> {
    match (design, method) {
        (DesignKind::Cre, _) => leverage_cre(ds, method),
        (DesignKind::Stratified, AdjustMethod::Tom) => leverage_stratified(ds),
        (DesignKind::Survey, AdjustMethod::Tom) => leverage_survey(ds),
        (DesignKind::Stratified | DesignKind::Survey, AdjustMethod::Lin) => {
            Err(DiagnosticsError::UnsupportedMethod { design })
        }
        (DesignKind::Cluster, _) => Err(DiagnosticsError::UnsupportedDesign(design)),
    }
}

fn leverage_cre(ds: &Dataset, method: AdjustMethod) -> Result<Vec<f64>, DiagnosticsError> {
    let (treated, control) = cre_preconditions(ds)?;
    let x = ds.x().expect("k >= 1");
    let n = ds.n();
    let n1 = treated.len() as f64;
    let n0 = control.len() as f64;
    let p1 = n1 / n as f64;
    let p0 = n0 / n as f64;

    let mean1 = col_means_idx(x, &treated);
    let mean0 = col_means_idx(x, &control);
    let ss1 = sample_cov_matrix_idx(x, &treated) * (n1 - 1.0);
    let ss0 = sample_cov_matrix_idx(x, &control) * (n0 - 1.0);

    let (denom1, denom0) = match method {
        AdjustMethod::Lin => (ss1.clone(), ss0.clone()),
        AdjustMethod::Tom => (
            &ss1 + &ss0 * (p1 / p0).powi(2),
            &ss0 + &ss1 * (p0 / p1).powi(2),
        ),
    };

    let mut lev = vec![0.0; n];
    for &i in &treated {
        let centered = DVector::from_fn(x.n_cols(), |j, _| x.get(i, j) - mean1[j]);
        lev[i] = 1.0 / n1 + quad_form(&denom1, &centered)?;
    }
    for &i in &control {
        let centered = DVector::from_fn(x.n_cols(), |j, _| x.get(i, j) - mean0[j]);
        lev[i] = 1.0 / n0 + quad_form(&denom0, &centered)?;
    }
    Ok(lev)
}

fn leverage_stratified(ds: &Dataset) -> Result<Vec<f64>, DiagnosticsError> {
    if ds.k() == 0 {
        return Err(DiagnosticsError::NeedCovariates);
    }
    let x = ds.x().expect("k >= 1");
    let labels = ds
        .strata()
        .ok_or(EstimatorError::MissingLabels("stratum"))?;
    let n = ds.n();
    let groups = group_by_label(labels);

    // V_xx = sum_h pi_h (s_hx(1)^2/p_h1 + s_hx(0)^2/p_h0).
    let mut v_xx = DMatrix::zeros(x.n_cols(), x.n_cols());
    struct Arm {
        idx: Vec<usize>,
        mean: Vec<f64>,
        weight: f64,
    }
    let mut arms: Vec<Arm> = Vec::new();
    for (label, units) in &groups {
        let treated: Vec<usize> = units.iter().copied().filter(|&i| ds.z()[i]).collect();
        let control: Vec<usize> = units.iter().copied().filter(|&i| !ds.z()[i]).collect();
        if treated.len() < 2 || control.len() < 2 {
            return Err(EstimatorError::StrataTooSmall {
                label: label.clone(),
                treated: treated.len(),
                control: control.len(),
            }
            .into());
        }
        let pi = units.len() as f64 / n as f64;
        let p1 = treated.len() as f64 / units.len() as f64;
        let p0 = 1.0 - p1;
        v_xx += sample_cov_matrix_idx(x, &treated) * (pi / p1);
        v_xx += sample_cov_matrix_idx(x, &control) * (pi / p0);
        let w1 = p1.powi(-2) * treated.len() as f64 / (treated.len() as f64 - 1.0);
        let w0 = p0.powi(-2) * control.len() as f64 / (control.len() as f64 - 1.0);
        let mean1 = col_means_idx(x, &treated);
        let mean0 = col_means_idx(x, &control);
        arms.push(Arm {
            idx: treated,
            mean: mean1,
            weight: w1,
        });
        arms.push(Arm {
            idx: control,
            mean: mean0,
            weight: w0,
        });
    }

    let mut lev = vec![0.0; n];
    for arm in &arms {
        for &i in &arm.idx {
            let centered = DVector::from_fn(x.n_cols(), |j, _| x.get(i, j) - arm.mean[j]);
            let quad = quad_form(&v_xx, &centered)?;
            lev[i] = 1.0 / arm.idx.len() as f64 + quad * arm.weight / n as f64;
        }
    }
    Ok(lev)
}

fn leverage_survey(ds: &Dataset) -> Result<Vec<f64>, DiagnosticsError> {
    let (treated, control) = arm_split(ds.z());
    if treated.len() < 2 || control.len() < 2 {
        return Err(DiagnosticsError::ArmTooSmall {
            arm: if treated.len() < 2 { "treated" } else { "control" },
            count: treated.len().min(control.len()),
        });
    }
    let k2 = ds.k();
    let k1 = ds.v().map_or(0, Matrix::n_cols);
    if k2 + k1 == 0 {
        return Err(DiagnosticsError::NeedCovariates);
    }
    let n = ds.n();
    let n1 = treated.len() as f64;
    let n0 = control.len() as f64;
    let p1 = n1 / n as f64;
    let p0 = n0 / n as f64;

    // Block matrix over (x, v): arm-pooled with the ToM weight pattern.
    let dim = k2 + k1;
    let mut gram = DMatrix::zeros(dim, dim);
    if k2 > 0 {
        let x = ds.x().expect("k2 > 0");
        let xx = sample_cov_matrix_idx(x, &treated) * (p1.powi(-2) * (n1 - 1.0) / n as f64)
            + sample_cov_matrix_idx(x, &control) * (p0.powi(-2) * (n0 - 1.0) / n as f64);
        gram.view_mut((0, 0), (k2, k2)).copy_from(&xx);
    }
    if k1 > 0 {
        let v = ds.v().expect("k1 > 0");
        let vv = sample_cov_matrix_idx(v, &treated) * ((n1 - 1.0) / n as f64)
            + sample_cov_matrix_idx(v, &control) * ((n0 - 1.0) / n as f64);
        gram.view_mut((k2, k2), (k1, k1)).copy_from(&vv);
    }
    if k2 > 0 && k1 > 0 {
        let x = ds.x().expect("k2 > 0");
        let v = ds.v().expect("k1 > 0");
        let xv = sample_cross_cov_idx(x, v, &treated) * (p1.powi(-1) * (n1 - 1.0) / n as f64)
            - sample_cross_cov_idx(x, v, &control) * (p0.powi(-1) * (n0 - 1.0) / n as f64);
        gram.view_mut((0, k2), (k2, k1)).copy_from(&xv);
        gram.view_mut((k2, 0), (k1, k2)).copy_from(&xv.transpose());
    }

    let x_mean1 = ds.x().map(|x| col_means_idx(x, &treated));
    let x_mean0 = ds.x().map(|x| col_means_idx(x, &control));
    let v_mean1 = ds.v().map(|v| col_means_idx(v, &treated));
    let v_mean0 = ds.v().map(|v| col_means_idx(v, &control));

    let mut lev = vec![0.0; n];
    for (arm_idx, is_treated, base_n, w, sign_p) in [
        (&treated, true, n1, p1.powi(-2), p1),
        (&control, false, n0, p0.powi(-2), -p0),
    ] {
        for &i in arm_idx {
            let mut vec = DVector::zeros(dim);
            if let Some(x) = ds.x() {
                let means = if is_treated { &x_mean1 } else { &x_mean0 };
                let means = means.as_ref().expect("set");
                for j in 0..k2 {
                    vec[j] = x.get(i, j) - means[j];
                }
            }
            if let Some(v) = ds.v() {
                let means = if is_treated { &v_mean1 } else { &v_mean0 };
                let means = means.as_ref().expect("set");
                for j in 0..k1 {
                    vec[k2 + j] = sign_p * (v.get(i, j) - means[j]);
                }
            }
            let quad = quad_form(&gram, &vec)?;
            lev[i] = 1.0 / base_n + quad * w / n as f64;
        }
    }
    Ok(lev)
}

/// Full diagnostics for a completely randomized dataset: both weight sets,
/// both distances, both closed-form leverage vectors, and the hat-matrix
/// diagonal of the minority-weighted regression for cross-checking.
pub fn diagnose(ds: &Dataset) -> Result<DiagnosticsReport, DiagnosticsError> {
    let calib_tom = calibration_weights(ds, AdjustMethod::Tom)?;
    let calib_lin = calibration_weights(ds, AdjustMethod::Lin)?;
    let distance_tom = distance(&calib_tom, ds.z());
    let distance_lin = distance(&calib_lin, ds.z());
    let lev_tom = leverage_closed_form(ds, DesignKind::Cre, AdjustMethod::Tom)?;
    let lev_lin = leverage_closed_form(ds, DesignKind::Cre, AdjustMethod::Lin)?;

    // Hat-matrix route through the actual weighted regression.
    let z_col: Vec<f64> = ds.z().iter().map(|&z| if z { 1.0 } else { 0.0 }).collect();
    let mut columns = vec![vec![1.0; ds.n()], z_col];
    let x = ds.x().expect("k >= 1 checked above");
    for j in 0..x.n_cols() {
        columns.push(x.column(j));
    }
    let design = Matrix::from_columns(&columns).map_err(EstimatorError::from)?;
    let n1 = ds.z().iter().filter(|b| **b).count() as f64;
    let p1 = n1 / ds.n() as f64;
    let p0 = 1.0 - p1;
    let weights: Vec<f64> = ds
        .z()
        .iter()
        .map(|&z| if z { p1.powi(-2) } else { p0.powi(-2) })
        .collect();
    let fit = crate::numkit::wls_fit(ds.y(), &design, &weights).map_err(EstimatorError::from)?;

    Ok(DiagnosticsReport {
        calib_tom,
        calib_lin,
        distance_tom,
        distance_lin,
        lev_tom: lev_tom.clone(),
        lev_lin,
        lev_closed_form: lev_tom,
        lev_hat_matrix: fit.leverages,
    })
}
