//! Metropolis-within-Gibbs sampler for the structured Bayesian SVD.
//!
//! One iteration updates, in order: `d` (random-walk Metropolis per entry),
//! the columns of `U`, the columns of `V`, `σ²`, the per-column basis
//! variances on each side, the length-scales on each side, then `β` when
//! covariates are present.

pub mod column;
pub mod tuner;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::csvd::classical_svd;
use crate::dist::{inverse_gamma, truncated_normal, truncated_walk_correction};
use crate::error::{Error, Result};
use crate::kernels::{CoordinateSet, KernelSpec};
use crate::linalg::{frobenius_sq, project_out, sample_variance, JitteredCholesky};
use crate::model::{
    column_log_prior, column_prior_precision, column_prior_stats, fixed_effect, ColumnPriorStats, CorrelationFactor,
    Side, SvdModelConfig, SvdModelState,
};
use crate::stiefel::standard_normal_vector;
use column::ColumnConditional;
pub use tuner::{AcceptCounter, AcceptanceRate, ProposalTuner};

/// Retained draws of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorChain {
    pub states: Vec<SvdModelState>,
    /// Zero-based iteration index of each retained state.
    pub iterations: Vec<usize>,
    pub acceptance: Vec<AcceptanceRate>,
    pub seed: u64,
    pub config: SvdModelConfig,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    /// Element-wise posterior means of `U` and `V`.
    pub fn basis_means(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let first = self.states.first().ok_or_else(|| Error::input("chain is empty"))?;
        let mut mu = DMatrix::zeros(first.u.nrows(), first.u.ncols());
        let mut mv = DMatrix::zeros(first.v.nrows(), first.v.ncols());
        for s in &self.states {
            mu += &s.u;
            mv += &s.v;
        }
        let n = self.states.len() as f64;
        Ok((mu / n, mv / n))
    }
}

struct SideState {
    side: Side,
    kernel: KernelSpec,
    dist: DMatrix<f64>,
    rho_upper: f64,
    /// One factor per distinct length-scale (1 when grouped or identity).
    factors: Vec<CorrelationFactor>,
    rho_tuners: Vec<ProposalTuner>,
    column_accept: Vec<AcceptCounter>,
    n_star: usize,
}

impl SideState {
    fn new(side: Side, config: &SvdModelConfig, coords: &CoordinateSet, rho: &[f64]) -> Result<Self> {
        let kernel = config.kernel(side);
        let dist = coords.distance_matrix();
        let factors = if rho.is_empty() {
            vec![CorrelationFactor::new(&kernel, &dist)?]
        } else {
            rho.iter()
                .map(|&r| CorrelationFactor::new(&kernel.with_rho(r), &dist))
                .collect::<Result<Vec<_>>>()?
        };
        let rho_tuners = if config.samples_rho(side) {
            rho.iter().map(|&r| ProposalTuner::new(0.2 * r, config.adapt_window)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            side,
            kernel,
            rho_upper: coords.diameter() / 2.0,
            dist,
            factors,
            rho_tuners,
            column_accept: vec![AcceptCounter::default(); config.k],
            n_star: coords.len() - config.k + 1,
        })
    }

    fn factor(&self, i: usize) -> &CorrelationFactor {
        if self.factors.len() == 1 {
            &self.factors[0]
        } else {
            &self.factors[i]
        }
    }

    fn stats(&self, w: &DMatrix<f64>) -> Result<Vec<ColumnPriorStats>> {
        (0..w.ncols()).map(|i| column_prior_stats(self.factor(i), w, i)).collect()
    }
}

/// Initial length-scales for one side.
fn initial_rho(config: &SvdModelConfig, side: Side, coords: &CoordinateSet) -> Result<Vec<f64>> {
    let kernel = config.kernel(side);
    let Some(template) = kernel.rho() else {
        return Ok(Vec::new());
    };
    let rho0 = if config.estimate_rho {
        let diam = coords.diameter();
        if !(diam > 0.0) {
            return Err(Error::input(format!(
                "cannot estimate the {} length-scale: all coordinates coincide",
                side.name()
            )));
        }
        diam / 10.0
    } else {
        template
    };
    Ok(if config.grouped_rho { vec![rho0] } else { vec![rho0; config.k] })
}

/// A running chain. [`run_mcmc`] drives this for the usual fit; it is public
/// so callers can inspect every iteration or swap the data between steps.
pub struct Sampler {
    config: SvdModelConfig,
    z: DMatrix<f64>,
    x: Option<DMatrix<f64>>,
    xtx: Option<DMatrix<f64>>,
    mean: DMatrix<f64>,
    resid: DMatrix<f64>,
    state: SvdModelState,
    u_side: SideState,
    v_side: SideState,
    d_tuners: Vec<ProposalTuner>,
    /// One per column pair `(i, j)`, `i < j`, in row-major order.
    rotation_tuners: Vec<ProposalTuner>,
    u_init: DMatrix<f64>,
    rng: ChaCha8Rng,
    iteration: usize,
}

fn check_inputs(
    z: &DMatrix<f64>,
    coords_u: &CoordinateSet,
    coords_v: &CoordinateSet,
    x: Option<&DMatrix<f64>>,
    config: &SvdModelConfig,
) -> Result<()> {
    let (n, m) = z.shape();
    config.validate_for(n, m)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("data matrix has non-finite entries"));
    }
    if coords_u.len() != n || coords_v.len() != m {
        return Err(Error::input(format!(
            "data is {n}x{m} but coordinates have {} and {} points",
            coords_u.len(),
            coords_v.len()
        )));
    }
    if let Some(x) = x {
        if x.nrows() != n * m || x.ncols() == 0 {
            return Err(Error::input(format!(
                "covariate matrix is {}x{}, expected {} rows",
                x.nrows(),
                x.ncols(),
                n * m
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("covariate matrix has non-finite entries"));
        }
    }
    Ok(())
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let chol = (x.transpose() * x)
        .cholesky()
        .ok_or_else(|| Error::numerical("least-squares initialization", "covariate matrix is rank deficient"))?;
    Ok(chol.solve(&x.tr_mul(y)).iter().copied().collect())
}

impl Sampler {
    /// Start a chain from the classical SVD of the data (after removing a
    /// least-squares fixed effect when covariates are given).
    pub fn new(
        z: &DMatrix<f64>,
        coords_u: &CoordinateSet,
        coords_v: &CoordinateSet,
        x: Option<&DMatrix<f64>>,
        config: &SvdModelConfig,
    ) -> Result<Self> {
        check_inputs(z, coords_u, coords_v, x, config)?;
        let (n, m) = z.shape();
        let k = config.k;
        let beta = match x {
            Some(x) => ols(x, &DVector::from_column_slice(z.as_slice()))?,
            None => Vec::new(),
        };
        let mean = match x {
            Some(x) => fixed_effect(x, &beta, n, m),
            None => DMatrix::zeros(n, m),
        };
        let centred = z - &mean;
        let svd = classical_svd(&centred, k)?;
        let floor = f64::EPSILON * (1.0 + svd.d[0]);
        let d: Vec<f64> = svd.d.iter().map(|&v| v.max(floor)).collect();
        let sigma2 = match config.fixed_noise_variance {
            Some(v) => v,
            None => {
                let r = &centred - svd.reconstruct();
                let v = sample_variance(r.as_slice());
                if v > 0.0 {
                    v
                } else {
                    1e-6 * sample_variance(z.as_slice()).max(1e-300)
                }
            }
        };
        let rho_u = initial_rho(config, Side::U, coords_u)?;
        let rho_v = initial_rho(config, Side::V, coords_v)?;
        let mut state = SvdModelState {
            u: svd.u,
            v: svd.v,
            d,
            sigma2,
            sigma2_u: vec![1.0; k],
            sigma2_v: vec![1.0; k],
            rho_u,
            rho_v,
            beta,
            aux_a: 1.0,
            aux_a_u: vec![1.0; k],
            aux_a_v: vec![1.0; k],
        };
        let u_side = SideState::new(Side::U, config, coords_u, &state.rho_u)?;
        let v_side = SideState::new(Side::V, config, coords_v, &state.rho_v)?;
        // basis variances start at their conditional scale rather than 1
        for (side, cache) in [(Side::U, &u_side), (Side::V, &v_side)] {
            let w = state.basis(side).clone();
            let stats = cache.stats(&w)?;
            let values: Vec<f64> = match config.fixed_basis_variance {
                Some(v) => vec![v; k],
                None => (0..k)
                    .map(|i| (state.d[i] * state.d[i] * stats[i].q / cache.n_star as f64).max(1e-12))
                    .collect(),
            };
            match side {
                Side::U => state.sigma2_u = values,
                Side::V => state.sigma2_v = values,
            }
        }
        Self::assemble(z, x, config, mean, state, u_side, v_side)
    }

    /// Start a chain from an explicit state.
    pub fn from_state(
        z: &DMatrix<f64>,
        coords_u: &CoordinateSet,
        coords_v: &CoordinateSet,
        x: Option<&DMatrix<f64>>,
        config: &SvdModelConfig,
        state: SvdModelState,
    ) -> Result<Self> {
        check_inputs(z, coords_u, coords_v, x, config)?;
        let (n, m) = z.shape();
        state.check_dimensions(n, m)?;
        if state.k() != config.k {
            return Err(Error::input(format!("state has rank {} but config has k = {}", state.k(), config.k)));
        }
        if config.rotation_moves && state.d.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::input("state singular values must be non-increasing"));
        }
        let mean = match x {
            Some(x) => {
                if state.beta.len() != x.ncols() {
                    return Err(Error::input("state β length does not match covariates"));
                }
                fixed_effect(x, &state.beta, n, m)
            }
            None => DMatrix::zeros(n, m),
        };
        let u_side = SideState::new(Side::U, config, coords_u, &state.rho_u)?;
        let v_side = SideState::new(Side::V, config, coords_v, &state.rho_v)?;
        Self::assemble(z, x, config, mean, state, u_side, v_side)
    }

    fn assemble(
        z: &DMatrix<f64>,
        x: Option<&DMatrix<f64>>,
        config: &SvdModelConfig,
        mean: DMatrix<f64>,
        state: SvdModelState,
        u_side: SideState,
        v_side: SideState,
    ) -> Result<Self> {
        let d_sd = state.sigma2.sqrt();
        let d_tuners = (0..config.k).map(|_| ProposalTuner::new(d_sd, config.adapt_window)).collect();
        let mut rotation_tuners = Vec::new();
        if config.rotation_moves {
            for i in 0..config.k {
                for j in i + 1..config.k {
                    let gap = (state.d[i] - state.d[j]).abs().max(d_sd);
                    rotation_tuners.push(ProposalTuner::new((d_sd / gap).min(0.5), config.adapt_window));
                }
            }
        }
        let mut sampler = Self {
            config: config.clone(),
            z: z.clone(),
            x: x.cloned(),
            xtx: x.map(|x| x.transpose() * x),
            resid: DMatrix::zeros(z.nrows(), z.ncols()),
            mean,
            u_init: state.u.clone(),
            state,
            u_side,
            v_side,
            d_tuners,
            rotation_tuners,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            iteration: 0,
        };
        sampler.refresh_residual();
        Ok(sampler)
    }

    pub fn state(&self) -> &SvdModelState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Replace the data matrix, keeping all parameters.
    pub fn set_data(&mut self, z: DMatrix<f64>) -> Result<()> {
        if z.shape() != self.z.shape() {
            return Err(Error::input("replacement data has a different shape"));
        }
        self.z = z;
        self.refresh_residual();
        Ok(())
    }

    fn refresh_residual(&mut self) {
        self.resid = &self.z - &self.mean - self.state.signal();
    }

    fn side(&self, side: Side) -> &SideState {
        match side {
            Side::U => &self.u_side,
            Side::V => &self.v_side,
        }
    }

    fn post_burnin(&self) -> bool {
        self.iteration >= self.config.n_burnin
    }

    /// Run one full iteration.
    pub fn step(&mut self) -> Result<()> {
        let it = self.iteration;
        if it == self.config.n_burnin {
            self.d_tuners.iter_mut().for_each(ProposalTuner::freeze);
            self.rotation_tuners.iter_mut().for_each(ProposalTuner::freeze);
            self.u_side.rho_tuners.iter_mut().for_each(ProposalTuner::freeze);
            self.v_side.rho_tuners.iter_mut().for_each(ProposalTuner::freeze);
        }
        self.refresh_residual();
        self.update_d().map_err(|e| e.in_sampler(it, "d"))?;
        for i in 0..self.config.k {
            self.update_column(Side::U, i).map_err(|e| e.in_sampler(it, format!("u[{i}]")))?;
        }
        for i in 0..self.config.k {
            self.update_column(Side::V, i).map_err(|e| e.in_sampler(it, format!("v[{i}]")))?;
        }
        if self.config.rotation_moves && self.config.k > 1 {
            self.update_rotations().map_err(|e| e.in_sampler(it, "rotation"))?;
        }
        self.update_noise_variance();
        self.update_basis_variances(Side::U).map_err(|e| e.in_sampler(it, "sigma2_u"))?;
        self.update_basis_variances(Side::V).map_err(|e| e.in_sampler(it, "sigma2_v"))?;
        if self.config.samples_rho(Side::U) {
            self.update_rho(Side::U).map_err(|e| e.in_sampler(it, "rho_u"))?;
        }
        if self.config.samples_rho(Side::V) {
            self.update_rho(Side::V).map_err(|e| e.in_sampler(it, "rho_v"))?;
        }
        if self.x.is_some() {
            self.update_beta().map_err(|e| e.in_sampler(it, "beta"))?;
        }
        self.iteration += 1;
        Ok(())
    }

    fn update_d(&mut self) -> Result<()> {
        let su = self.u_side.stats(&self.state.u)?;
        let sv = self.v_side.stats(&self.state.v)?;
        let power = (self.u_side.n_star + self.v_side.n_star - 2) as f64;
        let sigma2 = self.state.sigma2;
        for i in 0..self.config.k {
            let d = self.state.d[i];
            let c = {
                let rv = &self.resid * self.state.v.column(i);
                self.state.u.column(i).dot(&rv) + d
            };
            let coef = su[i].q / self.state.sigma2_u[i] + sv[i].q / self.state.sigma2_v[i];
            let log_target = |x: f64| (x * c - 0.5 * x * x) / sigma2 - 0.5 * x * x * coef + power * x.ln();
            let ordered = self.config.rotation_moves;
            let lo = if ordered && i + 1 < self.config.k { self.state.d[i + 1] } else { 0.0 };
            let hi = if ordered && i > 0 { self.state.d[i - 1] } else { f64::INFINITY };
            if hi <= lo {
                self.d_tuners[i].record(false);
                continue;
            }
            let sd = self.d_tuners[i].proposal_sd;
            let prop = truncated_normal(&mut self.rng, d, sd, lo, hi);
            let log_alpha = log_target(prop) - log_target(d) + truncated_walk_correction(d, prop, sd, lo, hi);
            let accepted = prop > 0.0 && (log_alpha >= 0.0 || self.rng.random::<f64>().ln() < log_alpha);
            if accepted {
                let delta = prop - d;
                self.resid -= self.state.u.column(i) * self.state.v.column(i).transpose() * delta;
                self.state.d[i] = prop;
            }
            self.d_tuners[i].record(accepted);
        }
        Ok(())
    }

    fn update_column(&mut self, side: Side, i: usize) -> Result<()> {
        let d = self.state.d[i];
        let sigma2 = self.state.sigma2;
        let (w, other) = match side {
            Side::U => (&self.state.u, &self.state.v),
            Side::V => (&self.state.v, &self.state.u),
        };
        let current = w.column(i).into_owned();
        let e_times_other = match side {
            Side::U => &self.resid * other.column(i) + &current * d,
            Side::V => self.resid.tr_mul(&other.column(i)) + &current * d,
        };
        let others = w.clone().remove_column(i);
        let linear = project_out(&others, &e_times_other) * (d / sigma2);
        let cache = match side {
            Side::U => &self.u_side,
            Side::V => &self.v_side,
        };
        let mut precision = column_prior_precision(cache.factor(i), w, i)? / self.state.basis_variance(side)[i];
        for j in 0..precision.nrows() {
            precision[(j, j)] += 1.0 / sigma2;
        }
        precision *= d * d;
        let cond = ColumnConditional { precision, linear, others: &others, p: cache.n_star - 1 };
        let draw = cond.sample(&current, self.config.column_update, &mut self.rng)?;
        let post = self.post_burnin();
        let cache = match side {
            Side::U => &mut self.u_side,
            Side::V => &mut self.v_side,
        };
        if post {
            cache.column_accept[i].record(draw.accepted);
        }
        if draw.accepted {
            let diff = (&current - &draw.column) * d;
            match side {
                Side::U => {
                    self.resid += diff * self.state.v.column(i).transpose();
                    self.state.u.set_column(i, &draw.column);
                }
                Side::V => {
                    self.resid += self.state.u.column(i) * diff.transpose();
                    self.state.v.set_column(i, &draw.column);
                }
            }
        }
        if side == Side::U && self.config.align_signs && self.state.u.column(i).dot(&self.u_init.column(i)) < 0.0 {
            self.state.u.column_mut(i).neg_mut();
            self.state.v.column_mut(i).neg_mut();
        }
        Ok(())
    }

    /// Column log-priors of `cols` on both sides at bases `u`, `v`.
    fn pair_log_prior(&self, u: &DMatrix<f64>, v: &DMatrix<f64>, cols: [usize; 2]) -> Result<f64> {
        let mut total = 0.0;
        for (side, w) in [(Side::U, u), (Side::V, v)] {
            let cache = self.side(side);
            let s2 = self.state.basis_variance(side);
            for c in cols {
                let stats = column_prior_stats(cache.factor(c), w, c)?;
                total += column_log_prior(self.state.d[c], s2[c], cache.n_star, stats);
            }
        }
        Ok(total)
    }

    /// Random-walk Metropolis on the angle of a Givens rotation applied to
    /// `(u_i, u_j)` and `(v_i, v_j)` together. Column-wise updates keep each
    /// column orthogonal to the rest and cannot move along this direction.
    fn update_rotations(&mut self) -> Result<()> {
        let k = self.config.k;
        let sigma2 = self.state.sigma2;
        let mut pair = 0;
        for i in 0..k {
            for j in i + 1..k {
                let sd = self.rotation_tuners[pair].proposal_sd;
                let theta = sd * self.rng.sample::<f64, _>(StandardNormal);
                let (c, s) = (theta.cos(), theta.sin());
                let rotate = |w: &DMatrix<f64>| {
                    let mut out = w.clone();
                    out.set_column(i, &(w.column(i) * c - w.column(j) * s));
                    out.set_column(j, &(w.column(i) * s + w.column(j) * c));
                    out
                };
                let (u1, v1) = (rotate(&self.state.u), rotate(&self.state.v));
                let pair_signal = |u: &DMatrix<f64>, v: &DMatrix<f64>| {
                    u.column(i) * v.column(i).transpose() * self.state.d[i]
                        + u.column(j) * v.column(j).transpose() * self.state.d[j]
                };
                let resid1 = &self.resid + pair_signal(&self.state.u, &self.state.v) - pair_signal(&u1, &v1);
                let log_alpha = (frobenius_sq(&self.resid) - frobenius_sq(&resid1)) / (2.0 * sigma2)
                    + self.pair_log_prior(&u1, &v1, [i, j])?
                    - self.pair_log_prior(&self.state.u, &self.state.v, [i, j])?;
                let accepted = log_alpha >= 0.0 || self.rng.random::<f64>().ln() < log_alpha;
                if accepted {
                    self.state.u = u1;
                    self.state.v = v1;
                    self.resid = resid1;
                }
                self.rotation_tuners[pair].record(accepted);
                pair += 1;
            }
        }
        Ok(())
    }

    fn update_noise_variance(&mut self) {
        if let Some(v) = self.config.fixed_noise_variance {
            self.state.sigma2 = v;
            return;
        }
        let (xi, a_scale) = (self.config.halft_xi, self.config.halft_a);
        let nm = (self.z.nrows() * self.z.ncols()) as f64;
        let a = inverse_gamma(&mut self.rng, 0.5 * (xi + 1.0), 1.0 / (a_scale * a_scale) + xi / self.state.sigma2);
        self.state.aux_a = a;
        let sse = frobenius_sq(&self.resid);
        self.state.sigma2 = inverse_gamma(&mut self.rng, 0.5 * (nm + xi), xi / a + 0.5 * sse);
    }

    fn update_basis_variances(&mut self, side: Side) -> Result<()> {
        if let Some(v) = self.config.fixed_basis_variance {
            let k = self.config.k;
            match side {
                Side::U => self.state.sigma2_u = vec![v; k],
                Side::V => self.state.sigma2_v = vec![v; k],
            }
            return Ok(());
        }
        let (xi, a_scale) = (self.config.halft_xi, self.config.halft_a);
        let cache = self.side(side);
        let stats = cache.stats(self.state.basis(side))?;
        let n_star = cache.n_star as f64;
        for i in 0..self.config.k {
            let d = self.state.d[i];
            let (s2, aux) = match side {
                Side::U => (&mut self.state.sigma2_u[i], &mut self.state.aux_a_u[i]),
                Side::V => (&mut self.state.sigma2_v[i], &mut self.state.aux_a_v[i]),
            };
            let a = inverse_gamma(&mut self.rng, 0.5 * (xi + 1.0), 1.0 / (a_scale * a_scale) + xi / *s2);
            *aux = a;
            *s2 = inverse_gamma(&mut self.rng, 0.5 * (n_star + xi), xi / a + 0.5 * d * d * stats[i].q);
        }
        Ok(())
    }

    /// Column log-prior summed over `cols` with `factor` standing in for the
    /// correlation of those columns.
    fn rho_target(&self, side: Side, factor: &CorrelationFactor, cols: &[usize]) -> Result<f64> {
        let w = self.state.basis(side);
        let s2 = self.state.basis_variance(side);
        let n_star = self.side(side).n_star;
        let mut total = 0.0;
        for &i in cols {
            let stats = column_prior_stats(factor, w, i)?;
            total += column_log_prior(self.state.d[i], s2[i], n_star, stats);
        }
        Ok(total)
    }

    fn update_rho(&mut self, side: Side) -> Result<()> {
        let k = self.config.k;
        let n_params = self.state.rho(side).len();
        for j in 0..n_params {
            let cols: Vec<usize> = if n_params == 1 { (0..k).collect() } else { vec![j] };
            let cache = self.side(side);
            let upper = cache.rho_upper;
            let rho = self.state.rho(side)[j];
            let sd = cache.rho_tuners[j].proposal_sd;
            let prop = truncated_normal(&mut self.rng, rho, sd, 0.0, upper);
            let cache = self.side(side);
            let candidate = match CorrelationFactor::new(&cache.kernel.with_rho(prop), &cache.dist) {
                Err(e) => {
                    log::warn!("rejecting {} length-scale proposal {prop:.6}: {e}", cache.side.name());
                    None
                }
                Ok(new_factor) => {
                    let current = self.rho_target(side, &cache.factors[j], &cols)?;
                    let proposed = self.rho_target(side, &new_factor, &cols)?;
                    let log_alpha = proposed - current + truncated_walk_correction(rho, prop, sd, 0.0, upper);
                    Some((new_factor, log_alpha))
                }
            };
            let accepted = match candidate {
                Some((f, log_alpha)) if log_alpha >= 0.0 || self.rng.random::<f64>().ln() < log_alpha => Some(f),
                _ => None,
            };
            let cache = match side {
                Side::U => &mut self.u_side,
                Side::V => &mut self.v_side,
            };
            cache.rho_tuners[j].record(accepted.is_some());
            if let Some(f) = accepted {
                cache.factors[j] = f;
                match side {
                    Side::U => self.state.rho_u[j] = prop,
                    Side::V => self.state.rho_v[j] = prop,
                }
            }
        }
        Ok(())
    }

    fn update_beta(&mut self) -> Result<()> {
        let x = self.x.as_ref().expect("covariates present");
        let xtx = self.xtx.as_ref().expect("covariates present");
        let sigma2 = self.state.sigma2;
        let prior_prec = 1.0 / (self.config.beta_prior_sd * self.config.beta_prior_sd);
        let mut q = xtx / sigma2;
        for j in 0..q.nrows() {
            q[(j, j)] += prior_prec;
        }
        let y = &self.z - self.state.signal();
        let rhs = x.tr_mul(&DVector::from_column_slice(y.as_slice())) / sigma2;
        let chol = JitteredCholesky::new(&q, false, "β posterior precision")?;
        let mean = chol.factor.solve(&rhs);
        let xi = standard_normal_vector(mean.len(), &mut self.rng);
        let noise = chol
            .factor
            .l_dirty()
            .lower_triangle()
            .tr_solve_lower_triangular(&xi)
            .expect("Cholesky factor has a positive diagonal");
        let beta = mean + noise;
        let (n, m) = self.z.shape();
        self.state.beta = beta.iter().copied().collect();
        self.mean = fixed_effect(x, &self.state.beta, n, m);
        self.refresh_residual();
        Ok(())
    }

    /// Acceptance rates since burn-in for every Metropolis step.
    pub fn acceptance(&self) -> Vec<AcceptanceRate> {
        let mut out = Vec::new();
        for (i, t) in self.d_tuners.iter().enumerate() {
            let (accepted, attempted) = t.counts();
            out.push(AcceptanceRate {
                parameter: format!("d[{i}]"),
                accepted,
                attempted,
                proposal_sd: Some(t.proposal_sd),
            });
        }
        for cache in [&self.u_side, &self.v_side] {
            let name = cache.side.name();
            for (i, c) in cache.column_accept.iter().enumerate() {
                out.push(AcceptanceRate {
                    parameter: format!("{name}[{i}]"),
                    accepted: c.accepted,
                    attempted: c.attempted,
                    proposal_sd: None,
                });
            }
        }
        let k = self.config.k;
        let pairs = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j)));
        for ((i, j), t) in pairs.zip(&self.rotation_tuners) {
            let (accepted, attempted) = t.counts();
            out.push(AcceptanceRate {
                parameter: format!("rotation[{i},{j}]"),
                accepted,
                attempted,
                proposal_sd: Some(t.proposal_sd),
            });
        }
        for cache in [&self.u_side, &self.v_side] {
            let name = cache.side.name();
            for (j, t) in cache.rho_tuners.iter().enumerate() {
                let (accepted, attempted) = t.counts();
                out.push(AcceptanceRate {
                    parameter: format!("rho_{name}[{j}]"),
                    accepted,
                    attempted,
                    proposal_sd: Some(t.proposal_sd),
                });
            }
        }
        out
    }
}

/// Run a full chain: `config.n_iterations` iterations seeded by `config.seed`,
/// keeping every `thin`-th state after burn-in.
pub fn run_mcmc(
    z: &DMatrix<f64>,
    coords_u: &CoordinateSet,
    coords_v: &CoordinateSet,
    config: &SvdModelConfig,
    x: Option<&DMatrix<f64>>,
) -> Result<PosteriorChain> {
    let mut sampler = Sampler::new(z, coords_u, coords_v, x, config)?;
    let mut states = Vec::with_capacity(config.n_retained());
    let mut iterations = Vec::with_capacity(config.n_retained());
    for it in 0..config.n_iterations {
        sampler.step()?;
        if it >= config.n_burnin && (it - config.n_burnin + 1) % config.thin == 0 {
            states.push(sampler.state().clone());
            iterations.push(it);
        }
    }
    Ok(PosteriorChain {
        states,
        iterations,
        acceptance: sampler.acceptance(),
        seed: config.seed,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests;
