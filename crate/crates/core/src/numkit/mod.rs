//! Dense real linear algebra used by every estimator: weighted least squares
//! with hat-matrix leverages, and heteroskedasticity-robust sandwich variances.

mod matrix;
mod sandwich;
mod wls;

pub use matrix::Matrix;
pub use sandwich::{sandwich_variance, HcKind, SandwichSpec};
pub use wls::{wls_fit, WlsFit};

use thiserror::Error;

/// Errors from the linear-algebra layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("weights must be positive and finite")]
    NonPositiveWeight,
    #[error("design matrix is rank deficient (numerical rank < columns)")]
    RankDeficient,
    #[error("leverage at or above one; HC2/HC3 scaling undefined")]
    LeverageOne,
    #[error("HC1 correction needs n > df_columns (n = {n}, df_columns = {df})")]
    DfExhausted { n: usize, df: usize },
}
