//! Estimators for completely randomized survey experiments: the
//! minority-weighted regression with sampling-stage interaction terms, and
//! the moment plug-in competitor.

use nalgebra::DVector;

use super::cre::{insert_hc_flavors, tom_weights, z_contrast};
use super::{
    col_means_idx, mean_idx, require_arms, sample_cov_matrix_idx, sample_cov_xy_idx,
    sample_var_idx, solve_spd, Dataset, EstimateReport, EstimatorError, VarianceFlavor,
};
use crate::numkit::{wls_fit, Matrix};

fn survey_preconditions(ds: &Dataset) -> Result<(), EstimatorError> {
    if ds.v().is_some() && ds.v_bar().is_none() {
        return Err(EstimatorError::MissingPopulationMean);
    }
    ds.sampling_fraction()
        .ok_or(EstimatorError::MissingSamplingFraction)?;
    Ok(())
}

/// Minority-weighted regression of `y` on `(1, z, x, (z - p0)(v - vbar))`
/// over the sampled units, with `v` centered at its finite-population mean.
///
/// Interaction columns that vanish identically (for instance when `v` equals
/// its population mean everywhere) are dropped, which reduces the fit to the
/// completely randomized one. All four HC flavors are conservative here; the
/// `pooled-residual` flavor is `n^-1 (s_e(1)^2/p1 + s_e(0)^2/p0)`.
pub fn tom_survey(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    survey_preconditions(ds)?;
    let (treated, control) = ds.treated_control();
    require_arms(&treated, &control, 2)?;

    let n = ds.n();
    let p0 = control.len() as f64 / n as f64;
    let z_col: Vec<f64> = ds.z().iter().map(|&z| if z { 1.0 } else { 0.0 }).collect();

    let mut columns = vec![vec![1.0; n], z_col.clone()];
    if let Some(x) = ds.x() {
        for j in 0..x.n_cols() {
            columns.push(x.column(j));
        }
    }
    let mut retained_v = 0usize;
    if let (Some(v), Some(v_bar)) = (ds.v(), ds.v_bar()) {
        for j in 0..v.n_cols() {
            let col: Vec<f64> = (0..n)
                .map(|i| (z_col[i] - p0) * (v.get(i, j) - v_bar[j]))
                .collect();
            if col.iter().all(|&c| c == 0.0) {
                continue;
            }
            retained_v += 1;
            columns.push(col);
        }
    }
    let design = Matrix::from_columns(&columns)?;
    let weights = tom_weights(ds.z());
    let fit = wls_fit(ds.y(), &design, &weights)?;

    let point = if ds.k() == 0 && retained_v == 0 {
        mean_idx(ds.y(), &treated) - mean_idx(ds.y(), &control)
    } else {
        fit.coefficients[1]
    };
    let mut report = EstimateReport::new("tom_survey", point, alpha, design.n_cols());
    insert_hc_flavors(&mut report, &fit, &design, &z_contrast(design.n_cols()))?;

    let se1: f64 = treated.iter().map(|&i| fit.residuals[i].powi(2)).sum::<f64>()
        / (treated.len() - 1) as f64;
    let se0: f64 = control.iter().map(|&i| fit.residuals[i].powi(2)).sum::<f64>()
        / (control.len() - 1) as f64;
    let p1 = treated.len() as f64 / n as f64;
    report.insert(
        VarianceFlavor::PooledResidual,
        (se1 / p1 + se0 / p0) / n as f64,
    );
    Ok(report)
}

/// Moment plug-in estimator for survey experiments: projection coefficients
/// `beta = p0 s_x(1)^-2 s_x1 + p1 s_x(0)^-2 s_x0` and
/// `gamma = s_v(1)^-2 s_v1 - s_v(0)^-2 s_v0`, subtracted against the two
/// covariate imbalances; the variance substitutes the adjusted outcomes into
/// the Neyman formula.
pub fn plugin_survey(ds: &Dataset, alpha: f64) -> Result<EstimateReport, EstimatorError> {
    survey_preconditions(ds)?;
    let (treated, control) = ds.treated_control();
    require_arms(&treated, &control, 2)?;

    let n = ds.n();
    let n1 = treated.len();
    let n0 = control.len();
    let p1 = n1 as f64 / n as f64;
    let p0 = n0 as f64 / n as f64;

    let tau_hat = mean_idx(ds.y(), &treated) - mean_idx(ds.y(), &control);
    let k2 = ds.k();
    let k1 = ds.v().map_or(0, Matrix::n_cols);

    let beta: DVector<f64> = if k2 > 0 {
        let x = ds.x().expect("k2 > 0");
        let s1 = sample_cov_matrix_idx(x, &treated);
        let s0 = sample_cov_matrix_idx(x, &control);
        let b1 = solve_spd(&s1, &sample_cov_xy_idx(x, ds.y(), &treated))?;
        let b0 = solve_spd(&s0, &sample_cov_xy_idx(x, ds.y(), &control))?;
        b1 * p0 + b0 * p1
    } else {
        DVector::zeros(0)
    };
    let gamma: DVector<f64> = if k1 > 0 {
        let v = ds.v().expect("k1 > 0");
        let s1 = sample_cov_matrix_idx(v, &treated);
        let s0 = sample_cov_matrix_idx(v, &control);
        let g1 = solve_spd(&s1, &sample_cov_xy_idx(v, ds.y(), &treated))?;
        let g0 = solve_spd(&s0, &sample_cov_xy_idx(v, ds.y(), &control))?;
        g1 - g0
    } else {
        DVector::zeros(0)
    };

    let point = if k2 == 0 && k1 == 0 {
        tau_hat
    } else {
        let mut adjusted = tau_hat;
        if k2 > 0 {
            let x = ds.x().expect("k2 > 0");
            let m1 = col_means_idx(x, &treated);
            let m0 = col_means_idx(x, &control);
            for j in 0..k2 {
                adjusted -= beta[j] * (m1[j] - m0[j]);
            }
        }
        if k1 > 0 {
            let v = ds.v().expect("k1 > 0");
            let v_bar = ds.v_bar().expect("validated");
            let all: Vec<usize> = (0..n).collect();
            let v_hat = col_means_idx(v, &all);
            for j in 0..k1 {
                adjusted -= gamma[j] * (v_hat[j] - v_bar[j]);
            }
        }
        adjusted
    };

    // Adjusted outcomes y_i - (z_i - p0)(v_i - vbar)'gamma - x_i'beta feed the
    // Neyman variance.
    let adjusted_y: Vec<f64> = (0..n)
        .map(|i| {
            let mut yi = ds.y()[i];
            if k2 > 0 {
                let x = ds.x().expect("k2 > 0");
                for j in 0..k2 {
                    yi -= x.get(i, j) * beta[j];
                }
            }
            if k1 > 0 {
                let v = ds.v().expect("k1 > 0");
                let v_bar = ds.v_bar().expect("validated");
                let zi = if ds.z()[i] { 1.0 } else { 0.0 };
                for j in 0..k1 {
                    yi -= (zi - p0) * (v.get(i, j) - v_bar[j]) * gamma[j];
                }
            }
            yi
        })
        .collect();
    let variance = (sample_var_idx(&adjusted_y, &treated) / p1
        + sample_var_idx(&adjusted_y, &control) / p0)
        / n as f64;

    let mut report = EstimateReport::new("plugin_survey", point, alpha, 2 + k1 + k2);
    report.insert(VarianceFlavor::Plugin, variance);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{diff_in_means, tom_cre};

    fn base(x: Option<Matrix>, v: Option<(Matrix, Vec<f64>)>) -> Dataset {
        let y = vec![2.0, 4.0, 3.5, 0.5, 1.0, 1.5, 2.5, 0.0];
        let z = vec![true, true, true, false, false, false, true, false];
        let mut b = Dataset::builder(y, z).sampling_fraction(0.25);
        if let Some(x) = x {
            b = b.covariates(x);
        }
        if let Some((v, v_bar)) = v {
            b = b.sampling_covariates(v, v_bar);
        }
        b.build().unwrap()
    }

    #[test]
    fn no_sampling_covariates_equals_tom_cre_exactly() {
        let x = Matrix::from_columns(&[vec![0.3, -1.0, 0.8, 0.1, -0.4, 1.2, 0.9, -0.2]]).unwrap();
        let ds = base(Some(x), None);
        let survey = tom_survey(&ds, 0.05).unwrap();
        let cre = tom_cre(&ds, 0.05).unwrap();
        assert_eq!(survey.point, cre.point);
        for flavor in [
            VarianceFlavor::Hc0,
            VarianceFlavor::Hc1,
            VarianceFlavor::Hc2,
            VarianceFlavor::Hc3,
        ] {
            assert_eq!(survey.variance(flavor), cre.variance(flavor));
        }
    }

    #[test]
    fn constant_v_drops_to_cre() {
        let x = Matrix::from_columns(&[vec![0.3, -1.0, 0.8, 0.1, -0.4, 1.2, 0.9, -0.2]]).unwrap();
        let v = Matrix::from_columns(&[vec![0.7; 8]]).unwrap();
        let ds = base(Some(x.clone()), Some((v, vec![0.7])));
        let full_sample = Dataset::builder(ds.y().to_vec(), ds.z().to_vec())
            .covariates(x)
            .build()
            .unwrap();
        let survey = tom_survey(&ds, 0.05).unwrap();
        let cre = tom_cre(&full_sample, 0.05).unwrap();
        assert_eq!(survey.point, cre.point);
        assert_eq!(survey.df_columns, cre.df_columns);
    }

    #[test]
    fn missing_f_is_an_error() {
        let ds = Dataset::builder(vec![1.0, 2.0, 3.0, 4.0], vec![true, true, false, false])
            .build()
            .unwrap();
        assert!(matches!(
            tom_survey(&ds, 0.05),
            Err(EstimatorError::MissingSamplingFraction)
        ));
    }

    #[test]
    fn plugin_without_covariates_is_diff_in_means() {
        let ds = base(None, None);
        let plug = plugin_survey(&ds, 0.05).unwrap();
        let dim = diff_in_means(&ds, 0.05).unwrap();
        assert_eq!(plug.point, dim.point);
    }
}
