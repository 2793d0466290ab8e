use nalgebra::{DMatrix, DVector};

use super::{Matrix, NumError};

/// Result of a weighted least-squares fit.
///
/// Residuals are on the original scale (`y - X beta`), and leverages are the
/// diagonal of the weighted hat matrix `X (X'WX)^-1 X'W`, so they lie in
/// `[0, 1]` and sum to the number of design columns.
#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub leverages: Vec<f64>,
    pub weights: Vec<f64>,
    pub rank_ok: bool,
    /// Upper-triangular factor of the weighted design, kept so the sandwich
    /// can solve with `X'WX = R'R` instead of forming the inverse.
    pub(crate) r_factor: DMatrix<f64>,
}

/// Fits `y ~ X` with positive observation weights `w`, minimizing
/// `sum_i w_i (y_i - x_i' beta)^2`.
///
/// The solve goes through a QR factorization of `diag(sqrt(w)) X`; numerical
/// rank is checked on the singular values of the R factor (which equal those
/// of the weighted design), with cutoff `max_sv * cols * machine_epsilon`.
pub fn wls_fit(y: &[f64], x: &Matrix, w: &[f64]) -> Result<WlsFit, NumError> {
    let n = x.n_rows();
    let k = x.n_cols();
    if y.len() != n || w.len() != n {
        return Err(NumError::DimensionMismatch(format!(
            "y has {} entries, w has {}, design has {} rows",
            y.len(),
            w.len(),
            n
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(NumError::NonFinite);
    }
    if w.iter().any(|wi| !wi.is_finite() || *wi <= 0.0) {
        return Err(NumError::NonPositiveWeight);
    }
    if n < k {
        return Err(NumError::RankDeficient);
    }

    let sqrt_w: Vec<f64> = w.iter().map(|wi| wi.sqrt()).collect();
    let xw = DMatrix::from_fn(n, k, |i, j| sqrt_w[i] * x.get(i, j));
    let yw = DVector::from_fn(n, |i, _| sqrt_w[i] * y[i]);

    let qr = xw.qr();
    let q = qr.q();
    let r = qr.r();

    // sv(R) = sv(diag(sqrt w) X) because Q is orthonormal.
    let svd = r.clone().svd(false, false);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = max_sv * k as f64 * f64::EPSILON;
    if max_sv == 0.0 || svd.singular_values.iter().any(|s| *s < cutoff) {
        return Err(NumError::RankDeficient);
    }

    let qty = q.transpose() * &yw;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(NumError::RankDeficient)?;

    let leverages: Vec<f64> = (0..n).map(|i| q.row(i).norm_squared()).collect();
    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            let fitted: f64 = (0..k).map(|j| x.get(i, j) * beta[j]).sum();
            y[i] - fitted
        })
        .collect();

    Ok(WlsFit {
        coefficients: beta.iter().cloned().collect(),
        residuals,
        leverages,
        weights: w.to_vec(),
        rank_ok: true,
        r_factor: r,
    })
}
