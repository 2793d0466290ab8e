use nalgebra::DMatrix;

use super::NumError;

/// Dense real matrix with at least one row and one column and all entries
/// finite. Row index = observation, column index = variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    inner: DMatrix<f64>,
}

impl Matrix {
    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, NumError> {
        if columns.is_empty() {
            return Err(NumError::DimensionMismatch(
                "matrix needs at least one column".into(),
            ));
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(NumError::DimensionMismatch(
                "matrix needs at least one row".into(),
            ));
        }
        if columns.iter().any(|c| c.len() != rows) {
            return Err(NumError::DimensionMismatch(
                "columns have unequal lengths".into(),
            ));
        }
        let inner = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
        Self::from_inner(inner)
    }

    /// Builds a matrix from row slices of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(NumError::DimensionMismatch(
                "matrix needs at least one row and one column".into(),
            ));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumError::DimensionMismatch("rows have unequal lengths".into()));
        }
        let inner = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        Self::from_inner(inner)
    }

    /// Builds a matrix by evaluating `f(row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, NumError> {
        if rows == 0 || cols == 0 {
            return Err(NumError::DimensionMismatch(
                "matrix needs at least one row and one column".into(),
            ));
        }
        Self::from_inner(DMatrix::from_fn(rows, cols, f))
    }

    fn from_inner(inner: DMatrix<f64>) -> Result<Self, NumError> {
        if inner.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite);
        }
        Ok(Self { inner })
    }

    pub fn n_rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Copies row `i` into a new vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols()).map(|j| self.inner[(i, j)]).collect()
    }

    /// Copies column `j` into a new vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.inner[(i, j)]).collect()
    }

    /// Selects a subset of rows, preserving order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, NumError> {
        if indices.is_empty() {
            return Err(NumError::DimensionMismatch("empty row selection".into()));
        }
        Self::from_fn(indices.len(), self.n_cols(), |i, j| self.inner[(indices[i], j)])
    }
}
