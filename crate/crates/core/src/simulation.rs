//! Synthetic datasets with known ground truth.
//!
//! Data are `Z = M + U D Vᵀ + σ η` with `η` iid standard normal. The noise
//! scale is set from realized sample variances so that
//! `var(M + Y) / var(σ η)` equals the requested SNR for the drawn `η`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{correlation_matrix, factor_correlation, CoordinateSet, KernelSpec};
use crate::linalg::sample_variance;
use crate::model::fixed_effect;
use crate::stiefel::{correlated_normal, generate_structured_orthonormal};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateMode {
    #[default]
    None,
    /// iid `N(0, 0.2²)` entries.
    M1,
    /// Smooth covariates sharing the random effect's length-scales.
    M2,
    /// Rough covariates (short length-scales).
    M3,
}

fn default_domain_u() -> [f64; 2] {
    [-5.0, 5.0]
}
fn default_domain_v() -> [f64; 2] {
    [0.0, 10.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_domain_u")]
    pub domain_u: [f64; 2],
    #[serde(default = "default_domain_v")]
    pub domain_v: [f64; 2],
    pub d_true: Vec<f64>,
    /// One kernel per column, or a single kernel shared by all columns.
    pub u_kernels: Vec<KernelSpec>,
    pub v_kernels: Vec<KernelSpec>,
    pub snr: f64,
    #[serde(default)]
    pub covariate_mode: CovariateMode,
    #[serde(default)]
    pub beta_true: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// Same Matérn(3.5) kernel on every column of both sides.
    pub fn shared_matern(n: usize, m: usize, d_true: Vec<f64>, rho: f64, snr: f64) -> Self {
        let k = d_true.len();
        let kern = KernelSpec::Matern { nu: 3.5, rho };
        Self {
            n,
            m,
            domain_u: default_domain_u(),
            domain_v: default_domain_v(),
            d_true,
            u_kernels: vec![kern; k],
            v_kernels: vec![kern; k],
            snr,
            covariate_mode: CovariateMode::None,
            beta_true: None,
            seed: 0,
        }
    }

    /// Matérn(3.5) kernels with one length-scale per column, shared by both sides.
    pub fn per_column_matern(n: usize, m: usize, d_true: Vec<f64>, rho: &[f64], snr: f64) -> Self {
        let kernels: Vec<_> = rho.iter().map(|&r| KernelSpec::Matern { nu: 3.5, rho: r }).collect();
        Self {
            u_kernels: kernels.clone(),
            v_kernels: kernels,
            ..Self::shared_matern(n, m, d_true, 1.0, snr)
        }
    }

    pub fn k_true(&self) -> usize {
        self.d_true.len()
    }

    pub fn coords_u(&self) -> Result<CoordinateSet> {
        CoordinateSet::equally_spaced(self.domain_u[0], self.domain_u[1], self.n)
    }

    pub fn coords_v(&self) -> Result<CoordinateSet> {
        CoordinateSet::equally_spaced(self.domain_v[0], self.domain_v[1], self.m)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k_true();
        if k == 0 || k > self.n.min(self.m) {
            return Err(Error::input(format!(
                "need 1 <= k_true <= min(n, m), got k_true={k}, n={}, m={}",
                self.n, self.m
            )));
        }
        if self.d_true.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::input("d_true entries must be positive"));
        }
        if self.d_true.windows(2).any(|w| w[1] >= w[0]) {
            log::warn!("d_true is not strictly decreasing; column order will not match a fitted SVD");
        }
        let ok = |n: usize| n == 1 || n == k;
        if !ok(self.u_kernels.len()) || !ok(self.v_kernels.len()) {
            return Err(Error::input(format!("need 1 or {k} kernels per side")));
        }
        for kern in self.u_kernels.iter().chain(&self.v_kernels) {
            kern.validate()?;
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::input(format!("snr must be positive, got {}", self.snr)));
        }
        for dom in [self.domain_u, self.domain_v] {
            if !(dom[0].is_finite() && dom[1].is_finite() && dom[0] < dom[1]) {
                return Err(Error::input(format!("invalid domain [{}, {}]", dom[0], dom[1])));
            }
        }
        match (self.covariate_mode, &self.beta_true) {
            (CovariateMode::None, Some(_)) => Err(Error::input("beta_true given without a covariate mode")),
            (CovariateMode::None, None) => Ok(()),
            (_, Some(b)) if b.len() == COVARIATES => Ok(()),
            (_, Some(b)) => Err(Error::input(format!("beta_true needs {COVARIATES} entries, got {}", b.len()))),
            (_, None) => Err(Error::input("covariate mode requires beta_true")),
        }
    }
}

/// Ground truth behind one synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub z: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub d: Vec<f64>,
    pub v: DMatrix<f64>,
    pub mean: DMatrix<f64>,
    pub sigma: f64,
    pub beta: Option<Vec<f64>>,
    pub x: Option<DMatrix<f64>>,
    pub eta: DMatrix<f64>,
    pub coords_u: CoordinateSet,
    pub coords_v: CoordinateSet,
}

impl SyntheticTruth {
    /// The random effect `Y = U D Vᵀ`.
    pub fn signal(&self) -> DMatrix<f64> {
        let mut ud = self.u.clone();
        for (i, &d) in self.d.iter().enumerate() {
            ud.column_mut(i).scale_mut(d);
        }
        ud * self.v.transpose()
    }

    pub fn k(&self) -> usize {
        self.d.len()
    }
}

pub const COVARIATES: usize = 4;

/// The `nm × 4` covariate design in column-major `vec` order (row `s + n t`).
///
/// M2 and M3 replicate a spatial draw across time for the first two columns
/// and a temporal draw across space for the third. The fourth column has
/// separable space-time correlation.
pub fn make_covariates<R: Rng + ?Sized>(
    mode: CovariateMode,
    coords_u: &CoordinateSet,
    coords_v: &CoordinateSet,
    rng: &mut R,
) -> Result<Option<DMatrix<f64>>> {
    let (n, m) = (coords_u.len(), coords_v.len());
    let (rho_s, rho_t, rho_st) = match mode {
        CovariateMode::None => return Ok(None),
        CovariateMode::M1 => {
            let normal = Normal::new(0.0, 0.2).expect("valid normal");
            return Ok(Some(DMatrix::from_fn(n * m, COVARIATES, |_, _| normal.sample(rng))));
        }
        CovariateMode::M2 => (3.0, 3.0, 1.0),
        CovariateMode::M3 => (0.3, 0.3, 1.0),
    };
    let draw = |coords: &CoordinateSet, rho: f64, rng: &mut R| -> Result<nalgebra::DVector<f64>> {
        let spec = KernelSpec::Matern { nu: 3.5, rho };
        let f = factor_correlation(&spec, &correlation_matrix(&spec, coords)?)?;
        Ok(correlated_normal(&f, rng))
    };
    let x1 = draw(coords_u, rho_s, rng)?;
    let x2 = draw(coords_u, rho_s, rng)?;
    let xt = draw(coords_v, rho_t, rng)?;

    let st = KernelSpec::Matern { nu: 3.5, rho: rho_st };
    let ls = factor_correlation(&st, &correlation_matrix(&st, coords_u)?)?;
    let lt = factor_correlation(&st, &correlation_matrix(&st, coords_v)?)?;
    let xi = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let ls_l = ls.factor.l();
    let lt_l = lt.factor.l();
    let xst = &ls_l * xi * lt_l.transpose();

    let mut x = DMatrix::zeros(n * m, COVARIATES);
    for t in 0..m {
        for s in 0..n {
            let r = s + n * t;
            x[(r, 0)] = x1[s];
            x[(r, 1)] = x2[s];
            x[(r, 2)] = xt[t];
            x[(r, 3)] = xst[(s, t)];
        }
    }
    Ok(Some(x))
}

pub fn simulate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticTruth> {
    spec.validate()?;
    let (n, m, k) = (spec.n, spec.m, spec.k_true());
    let coords_u = spec.coords_u()?;
    let coords_v = spec.coords_v()?;
    let per_column = |kernels: &[KernelSpec], coords: &CoordinateSet| {
        (0..k)
            .map(|i| correlation_matrix(&kernels[i.min(kernels.len() - 1)], coords))
            .collect::<Result<Vec<_>>>()
    };
    let omega_u = per_column(&spec.u_kernels, &coords_u)?;
    let omega_v = per_column(&spec.v_kernels, &coords_v)?;
    let u = generate_structured_orthonormal(n, k, &omega_u, rng)?;
    let v = generate_structured_orthonormal(m, k, &omega_v, rng)?;

    let x = make_covariates(spec.covariate_mode, &coords_u, &coords_v, rng)?;
    let mean = match (&x, &spec.beta_true) {
        (Some(x), Some(b)) => fixed_effect(x, b, n, m),
        _ => DMatrix::zeros(n, m),
    };
    let eta = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));

    let mut truth = SyntheticTruth {
        z: DMatrix::zeros(n, m),
        u,
        d: spec.d_true.clone(),
        v,
        mean,
        sigma: 0.0,
        beta: spec.beta_true.clone(),
        x,
        eta,
        coords_u,
        coords_v,
    };
    let structured = &truth.mean + truth.signal();
    truth.sigma = (sample_variance(structured.as_slice()) / (spec.snr * sample_variance(truth.eta.as_slice()))).sqrt();
    truth.z = structured + &truth.eta * truth.sigma;
    Ok(truth)
}

/// [`simulate`] with a generator seeded from `spec.seed`.
pub fn simulate_seeded(spec: &SyntheticSpec) -> Result<SyntheticTruth> {
    simulate(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}
