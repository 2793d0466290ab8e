//! Shared helpers for the integration tests: an independent normal-equations
//! solver (Gaussian elimination with partial pivoting, no shared code with
//! the QR path under test) and random-instance generators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use tomadjust::numkit::Matrix;

/// Solves `A b = rhs` by Gaussian elimination with partial pivoting.
/// Panics on a numerically singular pivot; callers feed well-conditioned
/// systems.
pub fn solve_dense(a: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        assert!(m[pivot][col].abs() > 1e-12, "singular oracle system");
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Weighted least squares through raw normal equations `(X'WX) b = X'Wy`.
pub fn normal_equations_wls(y: &[f64], x_cols: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let k = x_cols.len();
    let mut gram = vec![vec![0.0; k]; k];
    let mut moment = vec![0.0; k];
    for (a, col_a) in x_cols.iter().enumerate() {
        for (b, col_b) in x_cols.iter().enumerate() {
            gram[a][b] = col_a
                .iter()
                .zip(col_b.iter())
                .zip(w.iter())
                .map(|((xa, xb), wi)| wi * xa * xb)
                .sum();
        }
        moment[a] = col_a
            .iter()
            .zip(y.iter())
            .zip(w.iter())
            .map(|((xa, yi), wi)| wi * xa * yi)
            .sum();
    }
    solve_dense(&gram, &moment)
}

pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random CRE instance: outcomes, treatment with both arms at least
/// `min_arm`, and a covariate matrix.
pub struct CreInstance {
    pub y: Vec<f64>,
    pub z: Vec<bool>,
    pub x_cols: Vec<Vec<f64>>,
}

pub fn random_cre_instance<R: Rng>(n: usize, k: usize, min_arm: usize, rng: &mut R) -> CreInstance {
    let n1 = rng.random_range(min_arm..=n - min_arm);
    let mut z = vec![false; n];
    for slot in rand::seq::index::sample(rng, n, n1).iter() {
        z[slot] = true;
    }
    let x_cols: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| standard_normal(rng)).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = x_cols.iter().map(|c| c[i]).sum();
            let lift = if z[i] { 1.0 } else { 0.0 };
            signal + lift + standard_normal(rng)
        })
        .collect();
    CreInstance { y, z, x_cols }
}

impl CreInstance {
    pub fn x_matrix(&self) -> Matrix {
        Matrix::from_columns(&self.x_cols).expect("valid covariates")
    }

    pub fn arm_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut t = Vec::new();
        let mut c = Vec::new();
        for (i, &zi) in self.z.iter().enumerate() {
            if zi {
                t.push(i)
            } else {
                c.push(i)
            }
        }
        (t, c)
    }
}

/// Column means over the index set.
pub fn col_means(cols: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    cols.iter()
        .map(|c| idx.iter().map(|&i| c[i]).sum::<f64>() / idx.len() as f64)
        .collect()
}

/// Sample covariance (divisor m - 1) between two columns over an index set.
pub fn sample_cov(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / idx.len() as f64;
    let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / (idx.len() - 1) as f64
}

/// k x k within-arm covariance matrix of covariate columns.
pub fn cov_matrix(cols: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    let k = cols.len();
    (0..k)
        .map(|a| (0..k).map(|b| sample_cov(&cols[a], &cols[b], idx)).collect())
        .collect()
}

/// Covariance vector between covariate columns and an outcome.
pub fn cov_with(cols: &[Vec<f64>], y: &[f64], idx: &[usize]) -> Vec<f64> {
    cols.iter().map(|c| sample_cov(c, y, idx)).collect()
}

pub fn matrix_scale_add(a: &[Vec<f64>], sa: f64, b: &[Vec<f64>], sb: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b.iter())
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb.iter())
                .map(|(va, vb)| va * sa + vb * sb)
                .collect()
        })
        .collect()
}

pub fn vec_scale_add(a: &[f64], sa: f64, b: &[f64], sb: f64) -> Vec<f64> {
    a.iter()
        .zip(b.iter())
        .map(|(va, vb)| va * sa + vb * sb)
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
