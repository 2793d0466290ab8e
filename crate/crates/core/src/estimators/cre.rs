//! Regression-adjusted estimators for completely randomized experiments:
//! minority-weighted (ToM), with-interaction (Lin), and plain covariate
//! (Fisher) adjustment.

use super::{mean_idx, require_arms, Dataset, EstimateReport, EstimatorError, VarianceFlavor};
use crate::numkit::{sandwich_variance, wls_fit, HcKind, Matrix, SandwichSpec, WlsFit};

/// Inserts all four HC variances for the contrast `d` into the report.
pub(crate) fn insert_hc_flavors(
    report: &mut EstimateReport,
    fit: &WlsFit,
    design: &Matrix,
    d: &[f64],
) -> Result<(), EstimatorError> {
    for kind in HcKind::ALL {
        let spec = SandwichSpec {
            flavor: kind,
            df_columns: report.df_columns,
        };
        let v = sandwich_variance(fit, design, spec, d)?;
        report.insert(VarianceFlavor::from_hc(kind), v);
    }
    Ok(())
}

pub(crate) fn z_contrast(n_cols: usize) -> Vec<f64> {
    let mut d = vec![0.0; n_cols];
    d[1] = 1.0;
    d
}

fn z_column(z: &[bool]) -> Vec<f64> {
    z.iter().map(|&zi| if zi { 1.0 } else { 0.0 }).collect()
}

/// ToM weights `z/p1^2 + (1-z)/p0^2` from realized arm counts.
pub(crate) fn tom_weights(z: &[bool]) -> Vec<f64> {
    let n = z.len() as f64;
    let n1 = z.iter().filter(|b| **b).count() as f64;
    let p1 = n1 / n;
    let p0 = 1.0 - p1;
    z.iter()
        .map(|&zi| if zi { p1.powi(-2) } else { p0.powi(-2) })
        .collect()
}

fn unadjusted_point(ds: &Dataset) -> f64 {
    let (treated, control) = ds.treated_control();
    mean_idx(ds.y(), &treated) - mean_idx(ds.y(), &control)
}

/// Minority-weighted regression of `y` on `(1, z, x)` with weights
/// `z/p1^2 + (1-z)/p0^2`; the coefficient of `z` estimates the average
/// treatment effect. Without covariates the point is the exact difference in
/// means.
pub fn tom_cre(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let (treated, control) = ds.treated_control();
    require_arms(&treated, &control, 2)?;

    let mut columns = vec![vec![1.0; ds.n()], z_column(ds.z())];
    if let Some(x) = ds.x() {
        for j in 0..x.n_cols() {
            columns.push(x.column(j));
        }
    }
    let design = Matrix::from_columns(&columns)?;
    let weights = tom_weights(ds.z());
    let fit = wls_fit(ds.y(), &design, &weights)?;

    let point = if ds.k() == 0 {
        unadjusted_point(ds)
    } else {
        fit.coefficients[1]
    };
    let mut report = EstimateReport::new("tom_cre", point, alpha, design.n_cols());
    insert_hc_flavors(&mut report, &fit, &design, &z_contrast(design.n_cols()))?;
    Ok(report)
}

/// With-interaction regression of `y` on `(1, z, x - xbar, z(x - xbar))` by
/// ordinary least squares, covariates centered at the grand mean.
pub fn lin_cre(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let (treated, control) = ds.treated_control();
    require_arms(&treated, &control, 2)?;

    let n = ds.n();
    let mut columns = vec![vec![1.0; n], z_column(ds.z())];
    if let Some(x) = ds.x() {
        let all: Vec<usize> = (0..n).collect();
        let x_bar = super::col_means_idx(x, &all);
        for j in 0..x.n_cols() {
            let centered: Vec<f64> = (0..n).map(|i| x.get(i, j) - x_bar[j]).collect();
            columns.push(centered);
        }
        for j in 0..x.n_cols() {
            let interacted: Vec<f64> = (0..n)
                .map(|i| {
                    let zi = if ds.z()[i] { 1.0 } else { 0.0 };
                    zi * (x.get(i, j) - x_bar[j])
                })
                .collect();
            columns.push(interacted);
        }
    }
    let design = Matrix::from_columns(&columns)?;
    let fit = wls_fit(ds.y(), &design, &vec![1.0; n])?;

    let point = if ds.k() == 0 {
        unadjusted_point(ds)
    } else {
        fit.coefficients[1]
    };
    let mut report = EstimateReport::new("lin_cre", point, alpha, design.n_cols());
    insert_hc_flavors(&mut report, &fit, &design, &z_contrast(design.n_cols()))?;
    Ok(report)
}

/// Plain covariate regression of `y` on `(1, z, x)` by ordinary least squares.
pub fn fisher_cre(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    let (treated, control) = ds.treated_control();
    require_arms(&treated, &control, 2)?;

    let mut columns = vec![vec![1.0; ds.n()], z_column(ds.z())];
    if let Some(x) = ds.x() {
        for j in 0..x.n_cols() {
            columns.push(x.column(j));
        }
    }
    let design = Matrix::from_columns(&columns)?;
    let fit = wls_fit(ds.y(), &design, &vec![1.0; ds.n()])?;

    let point = if ds.k() == 0 {
        unadjusted_point(ds)
    } else {
        fit.coefficients[1]
    };
    let mut report = EstimateReport::new("fisher_cre", point, alpha, design.n_cols());
    insert_hc_flavors(&mut report, &fit, &design, &z_contrast(design.n_cols()))?;
    Ok(report)
}
