use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Matrix, NumError, WlsFit};

/// Residual-scaling family for the sandwich variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HcKind {
    Hc0,
    Hc1,
    Hc2,
    Hc3,
}

impl HcKind {
    pub const ALL: [HcKind; 4] = [HcKind::Hc0, HcKind::Hc1, HcKind::Hc2, HcKind::Hc3];
}

/// Which HC flavor to use and the column count entering the HC1 degrees-of-
/// freedom correction.
#[derive(Debug, Clone, Copy)]
pub struct SandwichSpec {
    pub flavor: HcKind,
    pub df_columns: usize,
}

/// Evaluates the heteroskedasticity-robust variance of `d' beta_hat`:
///
/// `d' (X'WX)^-1 X'W Delta WX (X'WX)^-1 d`, `Delta = diag((eta_i e_i)^2)`,
///
/// with `eta_i = 1` (HC0), `sqrt(n/(n-df))` (HC1), `(1-h_i)^{-1/2}` (HC2),
/// `(1-h_i)^{-1}` (HC3).
pub fn sandwich_variance(
    fit: &WlsFit,
    x: &Matrix,
    spec: SandwichSpec,
    d: &[f64],
) -> Result<f64, NumError> {
    let n = x.n_rows();
    let k = x.n_cols();
    if d.len() != k || fit.residuals.len() != n || fit.coefficients.len() != k {
        return Err(NumError::DimensionMismatch(
            "fit, design, and contrast dimensions disagree".into(),
        ));
    }

    let eta: Vec<f64> = match spec.flavor {
        HcKind::Hc0 => vec![1.0; n],
        HcKind::Hc1 => {
            if n <= spec.df_columns {
                return Err(NumError::DfExhausted {
                    n,
                    df: spec.df_columns,
                });
            }
            let scale = (n as f64 / (n - spec.df_columns) as f64).sqrt();
            vec![scale; n]
        }
        HcKind::Hc2 | HcKind::Hc3 => {
            if fit.leverages.iter().any(|h| *h >= 1.0 - 1e-10) {
                return Err(NumError::LeverageOne);
            }
            fit.leverages
                .iter()
                .map(|h| match spec.flavor {
                    HcKind::Hc2 => (1.0 - h).powf(-0.5),
                    _ => (1.0 - h).recip(),
                })
                .collect()
        }
    };

    // u = (X'WX)^-1 d via the retained R factor: X'WX = R'R.
    let rhs = DVector::from_column_slice(d);
    let half = fit
        .r_factor
        .transpose()
        .solve_lower_triangular(&rhs)
        .ok_or(NumError::RankDeficient)?;
    let u = fit
        .r_factor
        .solve_upper_triangular(&half)
        .ok_or(NumError::RankDeficient)?;

    // V = sum_i (w_i x_i'u)^2 (eta_i e_i)^2, manifestly nonnegative.
    let mut total = 0.0;
    for i in 0..n {
        let xi_u: f64 = (0..k).map(|j| x.get(i, j) * u[j]).sum();
        let term = fit.weights[i] * xi_u * eta[i] * fit.residuals[i];
        total += term * term;
    }
    Ok(total)
}
