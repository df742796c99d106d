//! Random orthonormal matrices with per-column covariance structure.
//!
//! Column `i` is drawn as `z_i ~ N(0, Ω_i)`, projected onto the orthogonal
//! complement of the columns already drawn, and normalized. With `Ω_i = I`
//! this is the uniform distribution on the Stiefel manifold.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{correlation_from_distances, factor_correlation, CoordinateSet, KernelSpec};
use crate::linalg::{orthonormality_error, project_out, JitteredCholesky};

/// Tolerance on `‖WᵀW - I‖_max` for a matrix to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// An `n × k` orthonormal matrix together with the coordinates its rows live
/// on and the kernel attached to each column.
#[derive(Clone, Debug)]
pub struct BasisMatrix {
    pub columns: DMatrix<f64>,
    pub coords: Option<CoordinateSet>,
    pub column_kernels: Vec<KernelSpec>,
}

impl BasisMatrix {
    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.columns)
    }
}

/// Column `i` of a basis expressed in the null space of the others:
/// `w_i = N w̃_i`.
#[derive(Clone, Debug)]
pub struct ProjectedColumn {
    pub tilde_w: DVector<f64>,
    pub null_basis: DMatrix<f64>,
}

impl ProjectedColumn {
    pub fn from_basis(w: &DMatrix<f64>, i: usize) -> Result<Self> {
        let others = w.clone().remove_column(i);
        let null_basis = null_space_basis(&others)?;
        let tilde_w = null_basis.tr_mul(&w.column(i));
        Ok(Self { tilde_w, null_basis })
    }
}

/// Draw an orthonormal `n × k` matrix whose `i`th column is the normalized
/// projection of a `N(0, Ω_i)` draw onto the complement of columns `1..i`.
pub fn generate_structured_orthonormal<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    omegas: &[DMatrix<f64>],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if k == 0 || k > n {
        return Err(Error::input(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if omegas.len() != k {
        return Err(Error::input(format!("expected {k} covariance matrices, got {}", omegas.len())));
    }
    let mut factors = Vec::with_capacity(k);
    for (i, om) in omegas.iter().enumerate() {
        if om.nrows() != n || om.ncols() != n {
            return Err(Error::input(format!("Ω_{} must be {n}x{n}", i + 1)));
        }
        let f = JitteredCholesky::new(om, false, "generating covariance").map_err(|_| {
            Error::input(format!("Ω_{} is not symmetric positive definite", i + 1))
        })?;
        factors.push(f);
    }
    let mut w = DMatrix::<f64>::zeros(n, k);
    for (i, f) in factors.iter().enumerate() {
        let z = correlated_normal(f, rng);
        let prev = w.columns(0, i).into_owned();
        // second pass removes rounding left by the first
        let x = project_out(&prev, &project_out(&prev, &z));
        let norm = x.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::numerical("structured orthonormal draw", "projected draw has zero length"));
        }
        w.set_column(i, &(x / norm));
    }
    Ok(w)
}

/// Generate a [`BasisMatrix`] over `coords` with one kernel per column.
pub fn generate_basis<R: Rng + ?Sized>(
    coords: &CoordinateSet,
    kernels: &[KernelSpec],
    rng: &mut R,
) -> Result<BasisMatrix> {
    let dist = coords.distance_matrix();
    let omegas = kernels
        .iter()
        .map(|k| {
            k.validate()?;
            let c = correlation_from_distances(k, &dist);
            factor_correlation(k, &c)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let columns = generate_structured_orthonormal(coords.len(), kernels.len(), &omegas, rng)?;
    Ok(BasisMatrix {
        columns,
        coords: Some(coords.clone()),
        column_kernels: kernels.to_vec(),
    })
}

/// `L ξ` with `ξ` standard normal and `L` the (jittered) Cholesky factor.
pub fn correlated_normal<R: Rng + ?Sized>(f: &JitteredCholesky, rng: &mut R) -> DVector<f64> {
    let n = f.factor.l_dirty().nrows();
    let xi = standard_normal_vector(n, rng);
    lower_mul(f, &xi)
}

fn lower_mul(f: &JitteredCholesky, x: &DVector<f64>) -> DVector<f64> {
    // l_dirty's strict upper triangle is garbage; use the lower triangle only.
    let l = f.factor.l_dirty();
    let n = l.nrows();
    let mut out = DVector::zeros(n);
    for j in 0..n {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for i in j..n {
            out[i] += l[(i, j)] * xj;
        }
    }
    out
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal basis for the orthogonal complement of the columns of
/// `w_partial` (`n × (k-1)`), taken from the trailing columns of a complete
/// Householder QR factorization. For an empty prefix this is `I_n`.
pub fn null_space_basis(w_partial: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w_partial.nrows();
    let j = w_partial.ncols();
    if j == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    if j >= n {
        return Err(Error::input(format!(
            "null space of {n}x{j} matrix is empty (need fewer than n columns)"
        )));
    }
    let qr = w_partial.clone().qr();
    let r = qr.r();
    for i in 0..j {
        if r[(i, i)].abs() < 1e-10 {
            return Err(Error::numerical(
                "null space basis",
                format!("input is rank deficient (|R[{i},{i}]| = {:e})", r[(i, i)].abs()),
            ));
        }
    }
    // Qᵀ applied to the identity gives the full orthogonal factor transposed.
    let mut qt = DMatrix::<f64>::identity(n, n);
    qr.q_tr_mul(&mut qt);
    Ok(qt.rows(j, n - j).transpose())
}

/// `log[(2π)^{-n*/2} |Ω*|^{-1/2} exp{-½ (r w̃)ᵀ Ω*⁻¹ (r w̃)} r^{n*-1}]`: the joint
/// density of a latent length `r` and unit direction `w̃` of a `N(0, Ω*)` vector.
pub fn projected_normal_logdensity(r: f64, w_tilde: &DVector<f64>, omega_proj: &DMatrix<f64>) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::input(format!("latent length must be positive, got {r}")));
    }
    let dim = w_tilde.len();
    if omega_proj.nrows() != dim || omega_proj.ncols() != dim {
        return Err(Error::input(format!(
            "direction has length {dim} but covariance is {}x{}",
            omega_proj.nrows(),
            omega_proj.ncols()
        )));
    }
    if (w_tilde.norm() - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::input("direction must have unit length"));
    }
    let chol = omega_proj
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("projected normal density", "covariance is not positive definite"))?;
    let x = w_tilde * r;
    let quad = x.dot(&chol.solve(&x));
    let dimf = dim as f64;
    Ok(-0.5 * dimf * (2.0 * std::f64::consts::PI).ln() - 0.5 * chol.ln_determinant() - 0.5 * quad
        + (dimf - 1.0) * r.ln())
}
