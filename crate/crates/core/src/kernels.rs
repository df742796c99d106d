//! Correlation kernels and the coordinate sets they are evaluated on.
//!
//! The Matérn family uses the conventional scaling
//! `C(r) = 2^{1-ν}/Γ(ν) (√(2ν) r/ρ)^ν K_ν(√(2ν) r/ρ)` with `K_ν` the modified
//! Bessel function of the second kind. Under this scaling `ν = 1/2` is exactly
//! the exponential kernel `exp(-r/ρ)` and `ν → ∞` tends to `exp(-r²/(2ρ²))`.
//!
//! The [`KernelSpec::Gaussian`] family is evaluated as `exp(-r²/ρ)`, i.e. with
//! `ρ` playing the role of a squared length-scale. It is *not* the `ν → ∞`
//! limit of the Matérn at the same `ρ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::JitteredCholesky;
use crate::special::{ln_bessel_k, ln_gamma};

/// Largest `p` for which `ν = p + 1/2` uses the closed-form polynomial path.
const MAX_CLOSED_FORM_ORDER: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Matern { nu: f64, rho: f64 },
    Gaussian { rho: f64 },
    Exponential { rho: f64 },
    Identity,
}

impl KernelSpec {
    pub fn matern(nu: f64, rho: f64) -> Result<Self> {
        let k = KernelSpec::Matern { nu, rho };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            KernelSpec::Matern { nu, rho } => {
                if !ok(nu) {
                    return Err(Error::input(format!("Matérn smoothness must be positive, got {nu}")));
                }
                if !ok(rho) {
                    return Err(Error::input(format!("length-scale must be positive, got {rho}")));
                }
            }
            KernelSpec::Gaussian { rho } | KernelSpec::Exponential { rho } => {
                if !ok(rho) {
                    return Err(Error::input(format!("length-scale must be positive, got {rho}")));
                }
            }
            KernelSpec::Identity => {}
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, KernelSpec::Identity)
    }

    pub fn rho(&self) -> Option<f64> {
        match *self {
            KernelSpec::Matern { rho, .. }
            | KernelSpec::Gaussian { rho }
            | KernelSpec::Exponential { rho } => Some(rho),
            KernelSpec::Identity => None,
        }
    }

    /// Same family and smoothness with a new length-scale. Identity is unchanged.
    pub fn with_rho(&self, rho: f64) -> Self {
        match *self {
            KernelSpec::Matern { nu, .. } => KernelSpec::Matern { nu, rho },
            KernelSpec::Gaussian { .. } => KernelSpec::Gaussian { rho },
            KernelSpec::Exponential { .. } => KernelSpec::Exponential { rho },
            KernelSpec::Identity => KernelSpec::Identity,
        }
    }

    /// Correlation as a function of distance.
    pub fn at_distance(&self, r: f64) -> f64 {
        KernelEval::new(self).at_distance(r)
    }
}

/// A kernel with per-family constants precomputed, for filling matrices.
#[derive(Clone, Debug)]
pub(crate) enum KernelEval {
    /// `exp(-t) Σ c_j t^j` with `t = √(2ν) r / ρ`.
    HalfInteger { scale: f64, coefs: Vec<f64> },
    General { nu: f64, scale: f64, ln_front: f64 },
    Gaussian { inv_rho: f64 },
    Exponential { inv_rho: f64 },
    Identity,
}

impl KernelEval {
    pub(crate) fn new(spec: &KernelSpec) -> Self {
        match *spec {
            KernelSpec::Matern { nu, rho } => {
                let scale = (2.0 * nu).sqrt() / rho;
                let twice = 2.0 * nu;
                let p = (nu - 0.5).round();
                if (twice - twice.round()).abs() < 1e-12
                    && (twice.round() as i64) % 2 == 1
                    && p >= 0.0
                    && (p as usize) <= MAX_CLOSED_FORM_ORDER
                {
                    KernelEval::HalfInteger {
                        scale,
                        coefs: half_integer_coefficients(p as usize),
                    }
                } else {
                    KernelEval::General {
                        nu,
                        scale,
                        ln_front: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
                    }
                }
            }
            KernelSpec::Gaussian { rho } => KernelEval::Gaussian { inv_rho: 1.0 / rho },
            KernelSpec::Exponential { rho } => KernelEval::Exponential { inv_rho: 1.0 / rho },
            KernelSpec::Identity => KernelEval::Identity,
        }
    }

    #[inline]
    pub(crate) fn at_distance(&self, r: f64) -> f64 {
        match self {
            KernelEval::HalfInteger { scale, coefs } => {
                let t = scale * r;
                let mut poly = 0.0;
                for c in coefs.iter().rev() {
                    poly = poly * t + c;
                }
                (-t).exp() * poly
            }
            KernelEval::General { nu, scale, ln_front } => matern_general(*nu, scale * r, *ln_front),
            KernelEval::Gaussian { inv_rho } => (-r * r * inv_rho).exp(),
            KernelEval::Exponential { inv_rho } => (-r * inv_rho).exp(),
            KernelEval::Identity => {
                if r == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Matérn correlation through the Bessel route, `t = √(2ν) r/ρ`.
pub(crate) fn matern_general(nu: f64, t: f64, ln_front: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let v = (ln_front + nu * t.ln() + ln_bessel_k(nu, t)).exp();
    v.min(1.0)
}

/// Coefficients `c_j` of `Σ_j c_j t^j` for `ν = p + 1/2`:
/// `C(t) = e^{-t} p!/(2p)! Σ_{i=0}^{p} (p+i)!/(i!(p-i)!) (2t)^{p-i}`.
fn half_integer_coefficients(p: usize) -> Vec<f64> {
    let ln_fact = |n: usize| ln_gamma(n as f64 + 1.0);
    let mut coefs = vec![0.0; p + 1];
    for i in 0..=p {
        let power = p - i;
        let ln_c = ln_fact(p) - ln_fact(2 * p) + ln_fact(p + i) - ln_fact(i) - ln_fact(p - i)
            + power as f64 * std::f64::consts::LN_2;
        coefs[power] = ln_c.exp();
    }
    coefs
}

/// Ordered points in `ℝ^d`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSet {
    dim: usize,
    data: Vec<f64>,
}

impl CoordinateSet {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::input("coordinate set must contain at least one point"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::input("coordinates must have dimension >= 1"));
        }
        let mut data = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::input(format!(
                    "coordinate {i} has dimension {} but expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("coordinate {i} is not finite")));
            }
            data.extend_from_slice(p);
        }
        Ok(Self { dim, data })
    }

    pub fn from_1d(values: &[f64]) -> Result<Self> {
        let pts: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Self::new(&pts)
    }

    /// `n` equally spaced points on `[lo, hi]`, endpoints included.
    pub fn equally_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("need at least one point"));
        }
        if n == 1 {
            return Self::from_1d(&[lo]);
        }
        let step = (hi - lo) / (n - 1) as f64;
        let v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        Self::from_1d(&v)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i).to_vec()).collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.distance(i, j))
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.distance(i, j));
            }
        }
        best
    }
}

fn euclidean(s: &[f64], t: &[f64]) -> f64 {
    s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn kernel_value(spec: &KernelSpec, s: &[f64], t: &[f64]) -> Result<f64> {
    spec.validate()?;
    if s.len() != t.len() {
        return Err(Error::input(format!(
            "coordinate dimension mismatch: {} vs {}",
            s.len(),
            t.len()
        )));
    }
    Ok(spec.at_distance(euclidean(s, t)))
}

/// Correlation matrix from a precomputed distance matrix, symmetric by construction.
pub fn correlation_from_distances(spec: &KernelSpec, dist: &DMatrix<f64>) -> DMatrix<f64> {
    let n = dist.nrows();
    if spec.is_identity() {
        return DMatrix::identity(n, n);
    }
    let eval = KernelEval::new(spec);
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let v = eval.at_distance(dist[(i, j)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Factor a correlation matrix, always adding at least the starting jitter
/// for non-identity kernels.
pub fn factor_correlation(spec: &KernelSpec, c: &DMatrix<f64>) -> Result<JitteredCholesky> {
    JitteredCholesky::new(c, !spec.is_identity(), "correlation matrix")
}

/// Pairwise correlation matrix over `coords`. Fails if the matrix cannot be
/// Cholesky-factored even after the maximum jitter.
pub fn correlation_matrix(spec: &KernelSpec, coords: &CoordinateSet) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = coords.len();
    if spec.is_identity() {
        return Ok(DMatrix::identity(n, n));
    }
    let eval = KernelEval::new(spec);
    let c = DMatrix::from_fn(n, n, |i, j| eval.at_distance(coords.distance(i, j)));
    factor_correlation(spec, &c)?;
    Ok(c)
}
