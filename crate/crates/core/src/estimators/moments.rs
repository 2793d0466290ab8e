//! Index-sliced sample moments shared by the plug-in estimators and
//! diagnostics.

use nalgebra::{DMatrix, DVector};

use super::EstimatorError;
use crate::numkit::Matrix;

pub(crate) fn arm_split(z: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (i, zi) in z.iter().enumerate() {
        if *zi {
            treated.push(i);
        } else {
            control.push(i);
        }
    }
    (treated, control)
}

pub(crate) fn mean_idx(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
}

/// Sample variance over the indexed entries, divisor `len - 1`.
pub(crate) fn sample_var_idx(values: &[f64], idx: &[usize]) -> f64 {
    let m = mean_idx(values, idx);
    idx.iter().map(|&i| (values[i] - m).powi(2)).sum::<f64>() / (idx.len() - 1) as f64
}

pub(crate) fn col_means_idx(x: &Matrix, idx: &[usize]) -> Vec<f64> {
    (0..x.n_cols())
        .map(|j| idx.iter().map(|&i| x.get(i, j)).sum::<f64>() / idx.len() as f64)
        .collect()
}

/// Sample covariance matrix of the indexed rows of `x`, divisor `len - 1`.
pub(crate) fn sample_cov_matrix_idx(x: &Matrix, idx: &[usize]) -> DMatrix<f64> {
    let k = x.n_cols();
    let means = col_means_idx(x, idx);
    let mut acc = DMatrix::zeros(k, k);
    for &i in idx {
        for a in 0..k {
            let da = x.get(i, a) - means[a];
            for b in 0..k {
                acc[(a, b)] += da * (x.get(i, b) - means[b]);
            }
        }
    }
    acc / (idx.len() - 1) as f64
}

/// Sample covariance between the columns of `x` and scalar `y`, divisor
/// `len - 1`.
pub(crate) fn sample_cov_xy_idx(x: &Matrix, y: &[f64], idx: &[usize]) -> DVector<f64> {
    let k = x.n_cols();
    let x_means = col_means_idx(x, idx);
    let y_mean = mean_idx(y, idx);
    let mut acc = DVector::zeros(k);
    for &i in idx {
        let dy = y[i] - y_mean;
        for a in 0..k {
            acc[a] += (x.get(i, a) - x_means[a]) * dy;
        }
    }
    acc / (idx.len() - 1) as f64
}

/// Sample cross-covariance between columns of `x` and columns of `v`,
/// divisor `len - 1`.
pub(crate) fn sample_cross_cov_idx(x: &Matrix, v: &Matrix, idx: &[usize]) -> DMatrix<f64> {
    let kx = x.n_cols();
    let kv = v.n_cols();
    let x_means = col_means_idx(x, idx);
    let v_means = col_means_idx(v, idx);
    let mut acc = DMatrix::zeros(kx, kv);
    for &i in idx {
        for a in 0..kx {
            let da = x.get(i, a) - x_means[a];
            for b in 0..kv {
                acc[(a, b)] += da * (v.get(i, b) - v_means[b]);
            }
        }
    }
    acc / (idx.len() - 1) as f64
}

/// Solves a symmetric positive-definite system, falling back to LU; a
/// singular matrix maps to `RankDeficient`.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, EstimatorError> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(EstimatorError::RankDeficient)
}

/// Groups unit indices by label, in order of first appearance.
pub(crate) fn group_by_label(labels: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<usize>> = Default::default();
    for (i, label) in labels.iter().enumerate() {
        let entry = groups.entry(label.as_str()).or_insert_with(|| {
            order.push(label.clone());
            Vec::new()
        });
        entry.push(i);
    }
    order
        .into_iter()
        .map(|label| {
            let idx = groups.remove(label.as_str()).expect("group exists");
            (label, idx)
        })
        .collect()
}
