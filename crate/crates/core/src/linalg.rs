//! Small dense linear-algebra helpers shared by the kernel, prior and sampler code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// First jitter tried when a plain Cholesky factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter ever added to a diagonal.
pub const JITTER_MAX: f64 = 1e-6;

/// A Cholesky factor of `A + jitter * I`.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    /// Factor `a + eps I`, starting at `eps = JITTER_START` and doubling up to
    /// `JITTER_MAX`. `always_jitter = false` tries the bare matrix first.
    pub fn new(a: &DMatrix<f64>, always_jitter: bool, context: &str) -> Result<Self> {
        if !always_jitter {
            if let Some(factor) = a.clone().cholesky() {
                return Ok(Self { factor, jitter: 0.0 });
            }
        }
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX {
            let mut b = a.clone();
            for i in 0..b.nrows() {
                b[(i, i)] += eps;
            }
            if let Some(factor) = b.cholesky() {
                return Ok(Self { factor, jitter: eps });
            }
            eps *= 2.0;
        }
        let min_diag = (0..a.nrows()).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min);
        Err(Error::numerical(
            context,
            format!(
                "Cholesky failed for {}x{} matrix after jitter up to {JITTER_MAX:e} (min diagonal {min_diag:e})",
                a.nrows(),
                a.ncols()
            ),
        ))
    }

    pub fn ln_det(&self) -> f64 {
        ln_det_from_cholesky(&self.factor)
    }
}

pub fn ln_det_from_cholesky(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// `max |WᵀW - I|` over all entries.
pub fn orthonormality_error(w: &DMatrix<f64>) -> f64 {
    let g = w.transpose() * w;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// `x - W Wᵀ x` for a matrix `W` with orthonormal columns.
pub fn project_out(w: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    if w.ncols() == 0 {
        return x.clone();
    }
    let coef = w.tr_mul(x);
    x - w * coef
}

/// Copy of `a` without column `skip`.
pub fn drop_column(a: &DMatrix<f64>, skip: usize) -> DMatrix<f64> {
    a.clone().remove_column(skip)
}

/// Symmetric matrix without row and column `skip`.
pub fn drop_row_col(a: &DMatrix<f64>, skip: usize) -> DMatrix<f64> {
    a.clone().remove_row(skip).remove_column(skip)
}

pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Sample variance of all entries (denominator `len - 1`).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
