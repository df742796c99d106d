//! Model configuration, parameter state, likelihood and column priors.
//!
//! Data model: `Z = M + U D Vᵀ + E` with `vec(E) ~ N(0, σ² I)`. Column `i` of
//! `U` has prior density `N_{n*}(d_i ũ_i; 0, Nᵀ Ω N) d_i^{n*-1}` in null-space
//! coordinates, `n* = n - k + 1`, `Ω = σ²_{u,i} C(ρ_{u,i})`; likewise for `V`.
//!
//! The null-space quantities are never formed explicitly inside the sampler.
//! With `G = C⁻¹` and `W_{-i}` the other columns,
//!
//! ```text
//! ũᵀ (NᵀCN)⁻¹ ũ = uᵀGu - uᵀGW (WᵀGW)⁻¹ WᵀGu
//! ln |NᵀCN|      = ln |C| + ln |WᵀGW|
//! ```
//!
//! which only needs `k × k` solves once `G` is cached.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{correlation_from_distances, factor_correlation, KernelSpec};
use crate::linalg::{frobenius_sq, ln_det_from_cholesky};
use crate::stiefel::projected_normal_logdensity;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// How the sphere-restricted normal conditional of a basis column is sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnUpdate {
    /// Normalized normal draw used as an independence proposal with an exact
    /// Metropolis-Hastings correction for the radial marginalization.
    #[default]
    Corrected,
    /// Normalized normal draw accepted unconditionally.
    Normalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    U,
    V,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::U => "u",
            Side::V => "v",
        }
    }
}

fn default_nu() -> f64 {
    3.5
}
fn default_xi() -> f64 {
    1.0
}
fn default_a() -> f64 {
    1e5
}
fn default_beta_sd() -> f64 {
    10.0
}
fn default_true() -> bool {
    true
}
fn default_thin() -> usize {
    1
}
fn default_window() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvdModelConfig {
    pub k: usize,
    /// Kernel for the columns of `U`. `None` means Matérn with `nu_default`.
    /// When `estimate_rho` is set the length-scale here is ignored and the
    /// chain starts at a tenth of the coordinate diameter.
    #[serde(default)]
    pub u_kernel: Option<KernelSpec>,
    #[serde(default)]
    pub v_kernel: Option<KernelSpec>,
    #[serde(default = "default_true")]
    pub estimate_rho: bool,
    #[serde(default)]
    pub grouped_rho: bool,
    #[serde(default = "default_nu")]
    pub nu_default: f64,
    #[serde(default = "default_xi")]
    pub halft_xi: f64,
    #[serde(default = "default_a")]
    pub halft_a: f64,
    #[serde(default = "default_beta_sd")]
    pub beta_prior_sd: f64,
    pub n_iterations: usize,
    pub n_burnin: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    /// Flip `(u_i, v_i)` after each `u_i` update so `u_i` points the same way
    /// as its initial value.
    #[serde(default = "default_true")]
    pub align_signs: bool,
    #[serde(default)]
    pub column_update: ColumnUpdate,
    /// Add a joint Givens-rotation step for every pair of columns. The
    /// singular values are then kept in non-increasing order so that a
    /// rotation cannot swap column labels.
    #[serde(default)]
    pub rotation_moves: bool,
    /// Hold `σ²` at this value instead of sampling it.
    #[serde(default)]
    pub fixed_noise_variance: Option<f64>,
    /// Hold every `σ²_{u,i}` and `σ²_{v,i}` at this value.
    #[serde(default)]
    pub fixed_basis_variance: Option<f64>,
    #[serde(default = "default_window")]
    pub adapt_window: usize,
}

impl SvdModelConfig {
    pub fn new(k: usize, n_iterations: usize, n_burnin: usize) -> Self {
        Self {
            k,
            u_kernel: None,
            v_kernel: None,
            estimate_rho: true,
            grouped_rho: false,
            nu_default: default_nu(),
            halft_xi: default_xi(),
            halft_a: default_a(),
            beta_prior_sd: default_beta_sd(),
            n_iterations,
            n_burnin,
            thin: 1,
            seed: 0,
            align_signs: true,
            column_update: ColumnUpdate::Corrected,
            rotation_moves: false,
            fixed_noise_variance: None,
            fixed_basis_variance: None,
            adapt_window: default_window(),
        }
    }

    pub fn with_kernels(mut self, u: KernelSpec, v: KernelSpec) -> Self {
        self.u_kernel = Some(u);
        self.v_kernel = Some(v);
        self
    }

    pub fn kernel(&self, side: Side) -> KernelSpec {
        let k = match side {
            Side::U => self.u_kernel,
            Side::V => self.v_kernel,
        };
        k.unwrap_or(KernelSpec::Matern { nu: self.nu_default, rho: 1.0 })
    }

    /// Whether length-scales on `side` are sampled.
    pub fn samples_rho(&self, side: Side) -> bool {
        self.estimate_rho && !self.kernel(side).is_identity()
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.n_burnin >= self.n_iterations {
            return Err(Error::Config(format!(
                "n_burnin ({}) must be less than n_iterations ({})",
                self.n_burnin, self.n_iterations
            )));
        }
        if self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::Config("thin and adapt_window must be at least 1".into()));
        }
        if !pos(self.nu_default) || !pos(self.halft_xi) || !pos(self.halft_a) || !pos(self.beta_prior_sd) {
            return Err(Error::Config("nu_default, halft_xi, halft_a and beta_prior_sd must be positive".into()));
        }
        for v in [self.fixed_noise_variance, self.fixed_basis_variance].into_iter().flatten() {
            if !pos(v) {
                return Err(Error::Config(format!("fixed variances must be positive, got {v}")));
            }
        }
        for side in [Side::U, Side::V] {
            self.kernel(side).validate().map_err(|e| Error::Config(format!("{} kernel: {e}", side.name())))?;
        }
        Ok(())
    }

    /// Dimension checks against an `n × m` data matrix.
    pub fn validate_for(&self, n: usize, m: usize) -> Result<()> {
        self.validate()?;
        if self.k > n.min(m) {
            return Err(Error::input(format!("rank k = {} exceeds min(n, m) = {}", self.k, n.min(m))));
        }
        Ok(())
    }
}

/// All model parameters at one iteration.
///
/// Length-scale vectors have length `k` (one per column), 1 (grouped) or 0
/// (identity kernel).
#[derive(Clone, Debug, PartialEq)]
pub struct SvdModelState {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub d: Vec<f64>,
    pub sigma2: f64,
    pub sigma2_u: Vec<f64>,
    pub sigma2_v: Vec<f64>,
    pub rho_u: Vec<f64>,
    pub rho_v: Vec<f64>,
    pub beta: Vec<f64>,
    pub aux_a: f64,
    pub aux_a_u: Vec<f64>,
    pub aux_a_v: Vec<f64>,
}

impl SvdModelState {
    pub fn k(&self) -> usize {
        self.d.len()
    }

    pub fn basis(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::U => &self.u,
            Side::V => &self.v,
        }
    }

    pub fn rho(&self, side: Side) -> &[f64] {
        match side {
            Side::U => &self.rho_u,
            Side::V => &self.rho_v,
        }
    }

    pub fn basis_variance(&self, side: Side) -> &[f64] {
        match side {
            Side::U => &self.sigma2_u,
            Side::V => &self.sigma2_v,
        }
    }

    /// Length-scale governing column `i` (shared when grouped).
    pub fn rho_for(&self, side: Side, i: usize) -> Option<f64> {
        let r = self.rho(side);
        match r.len() {
            0 => None,
            1 => Some(r[0]),
            _ => Some(r[i]),
        }
    }

    /// `U D Vᵀ`.
    pub fn signal(&self) -> DMatrix<f64> {
        let mut ud = self.u.clone();
        for (j, &dj) in self.d.iter().enumerate() {
            ud.column_mut(j).scale_mut(dj);
        }
        ud * self.v.transpose()
    }

    /// `D Vᵀ`, the PCA loadings.
    pub fn loadings(&self) -> DMatrix<f64> {
        let mut a = self.v.transpose();
        for (j, &dj) in self.d.iter().enumerate() {
            a.row_mut(j).scale_mut(dj);
        }
        a
    }

    pub fn check_dimensions(&self, n: usize, m: usize) -> Result<()> {
        let k = self.k();
        if self.u.shape() != (n, k) || self.v.shape() != (m, k) {
            return Err(Error::input(format!(
                "state has U {:?} and V {:?}, expected ({n}, {k}) and ({m}, {k})",
                self.u.shape(),
                self.v.shape()
            )));
        }
        Ok(())
    }
}

/// Fixed-effect mean `M` as an `n × m` matrix from `vec(M) = Xβ` (column-major).
pub fn fixed_effect(x: &DMatrix<f64>, beta: &[f64], n: usize, m: usize) -> DMatrix<f64> {
    let b = DVector::from_column_slice(beta);
    let mv = x * b;
    DMatrix::from_column_slice(n, m, mv.as_slice())
}

/// Matrix-normal log-likelihood with row covariance `σ² Iₙ` and column
/// covariance `I_m`.
pub fn log_likelihood(z: &DMatrix<f64>, state: &SvdModelState, m: &DMatrix<f64>) -> f64 {
    let (n, mm) = z.shape();
    let resid = z - m - state.signal();
    let nm = (n * mm) as f64;
    -0.5 * nm * (LN_2PI + state.sigma2.ln()) - frobenius_sq(&resid) / (2.0 * state.sigma2)
}

/// `E_{-i} = Z - M - Σ_{j≠i} d_j u_j v_jᵀ`.
#[derive(Clone, Debug)]
pub struct ResidualView {
    pub column: usize,
    pub e_minus_i: DMatrix<f64>,
}

impl ResidualView {
    /// `E_{-i} - d_i u_i v_iᵀ`, the full residual.
    pub fn full_residual(&self, state: &SvdModelState) -> DMatrix<f64> {
        let i = self.column;
        &self.e_minus_i - state.u.column(i) * state.v.column(i).transpose() * state.d[i]
    }
}

pub fn residual_for_column(z: &DMatrix<f64>, m: &DMatrix<f64>, state: &SvdModelState, i: usize) -> Result<ResidualView> {
    if i >= state.k() {
        return Err(Error::input(format!("column {i} out of range for rank {}", state.k())));
    }
    let full = z - m - state.signal();
    let e = full + state.u.column(i) * state.v.column(i).transpose() * state.d[i];
    Ok(ResidualView { column: i, e_minus_i: e })
}

/// Column log-prior through explicit null-space coordinates: the latent-length
/// projected-normal density of `(d_i, w̃)` under `Nᵀ Ω N`.
pub fn log_prior_column(
    d: f64,
    w_tilde: &DVector<f64>,
    null_basis: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    side_dim: usize,
) -> Result<f64> {
    if null_basis.nrows() != side_dim || omega.nrows() != side_dim || null_basis.ncols() != w_tilde.len() {
        return Err(Error::input("null basis, covariance and direction dimensions disagree"));
    }
    let omega_proj = null_basis.transpose() * omega * null_basis;
    projected_normal_logdensity(d, w_tilde, &omega_proj)
}

/// Inverse and log-determinant of a (jittered) correlation matrix.
#[derive(Clone, Debug)]
pub struct CorrelationFactor {
    pub precision: DMatrix<f64>,
    pub ln_det: f64,
    pub identity: bool,
}

impl CorrelationFactor {
    pub fn new(spec: &KernelSpec, dist: &DMatrix<f64>) -> Result<Self> {
        let n = dist.nrows();
        if spec.is_identity() {
            return Ok(Self { precision: DMatrix::identity(n, n), ln_det: 0.0, identity: true });
        }
        let c = correlation_from_distances(spec, dist);
        let f = factor_correlation(spec, &c)?;
        Ok(Self { precision: f.factor.inverse(), ln_det: f.ln_det(), identity: false })
    }

    /// `G W`.
    fn apply(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity {
            w.clone()
        } else {
            &self.precision * w
        }
    }
}

/// `q = w̃ᵀ (NᵀCN)⁻¹ w̃` and `ln |NᵀCN|` for column `i` of `w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnPriorStats {
    pub q: f64,
    pub ln_det: f64,
}

pub fn column_prior_stats(factor: &CorrelationFactor, w: &DMatrix<f64>, i: usize) -> Result<ColumnPriorStats> {
    let k = w.ncols();
    let gw = factor.apply(w);
    let mm = w.tr_mul(&gw);
    if k == 1 {
        return Ok(ColumnPriorStats { q: mm[(0, 0)], ln_det: factor.ln_det });
    }
    let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
    let sub = mm.select_rows(&others).select_columns(&others);
    let mi = DVector::from_iterator(k - 1, others.iter().map(|&j| mm[(j, i)]));
    let chol = sub
        .cholesky()
        .ok_or_else(|| Error::numerical("column prior", "WᵀC⁻¹W is not positive definite"))?;
    let q = mm[(i, i)] - mi.dot(&chol.solve(&mi));
    Ok(ColumnPriorStats { q, ln_det: factor.ln_det + ln_det_from_cholesky(&chol) })
}

/// `B = N (NᵀCN)⁻¹ Nᵀ = G - G W (WᵀGW)⁻¹ WᵀG` for the columns of `w` other than `i`.
pub fn column_prior_precision(factor: &CorrelationFactor, w: &DMatrix<f64>, i: usize) -> Result<DMatrix<f64>> {
    let others = w.clone().remove_column(i);
    let n = w.nrows();
    if others.ncols() == 0 {
        return Ok(factor.precision.clone());
    }
    if factor.identity {
        return Ok(DMatrix::identity(n, n) - &others * others.transpose());
    }
    let gw = &factor.precision * &others;
    let chol = others
        .tr_mul(&gw)
        .cholesky()
        .ok_or_else(|| Error::numerical("column prior", "WᵀC⁻¹W is not positive definite"))?;
    let sol = chol.solve(&gw.transpose());
    Ok(&factor.precision - gw * sol)
}

/// Column log-prior from cached statistics:
/// `-(n*/2) ln 2π - ½ (n* ln σ² + ln|NᵀCN|) - d² q / (2σ²) + (n*-1) ln d`.
pub fn column_log_prior(d: f64, basis_variance: f64, n_star: usize, stats: ColumnPriorStats) -> f64 {
    let ns = n_star as f64;
    -0.5 * ns * LN_2PI - 0.5 * (ns * basis_variance.ln() + stats.ln_det) - d * d * stats.q / (2.0 * basis_variance)
        + (ns - 1.0) * d.ln()
}
