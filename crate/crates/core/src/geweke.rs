//! Geweke (2004) joint-distribution test of the sampler.
//!
//! The marginal-conditional simulator draws parameters from the prior. The
//! successive-conditional simulator alternates one sampler iteration with a
//! fresh data draw given the current parameters. Both target the same joint
//! distribution, so any statistic of the parameters must have equal means.
//!
//! The test model uses identity kernels, fixed basis variances and a half-t
//! noise prior with enough degrees of freedom for `σ²` to have finite
//! variance. Under this prior the `d_i²` are Gamma draws (sorted when rotation
//! moves are on) and `U`, `V` are uniform on their Stiefel manifolds.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dist::{gamma, half_t, inverse_gamma};
use crate::error::Result;
use crate::kernels::{CoordinateSet, KernelSpec};
use crate::model::{ColumnUpdate, SvdModelConfig, SvdModelState};
use crate::sampler::Sampler;
use crate::stiefel::generate_structured_orthonormal;

#[derive(Clone, Debug)]
pub struct GewekeConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub halft_xi: f64,
    pub halft_a: f64,
    pub basis_variance: f64,
    /// Prior draws for the marginal-conditional simulator.
    pub prior_draws: usize,
    /// Retained successive-conditional cycles.
    pub cycles: usize,
    /// Successive-conditional cycles run (with proposal adaptation) before retention.
    pub warmup: usize,
    pub batches: usize,
    pub column_update: ColumnUpdate,
    pub rotation_moves: bool,
    pub seed: u64,
}

impl GewekeConfig {
    pub fn new(n: usize, m: usize, k: usize, cycles: usize) -> Self {
        Self {
            n,
            m,
            k,
            halft_xi: 8.0,
            halft_a: 1.0,
            basis_variance: 1.0,
            prior_draws: cycles,
            cycles,
            warmup: 2000,
            batches: 50,
            column_update: ColumnUpdate::Corrected,
            rotation_moves: false,
            seed: 0,
        }
    }

    fn sampler_config(&self) -> SvdModelConfig {
        let mut c = SvdModelConfig::new(self.k, self.warmup + self.cycles, self.warmup)
            .with_kernels(KernelSpec::Identity, KernelSpec::Identity);
        c.halft_xi = self.halft_xi;
        c.halft_a = self.halft_a;
        c.fixed_basis_variance = Some(self.basis_variance);
        c.align_signs = false;
        c.column_update = self.column_update;
        c.rotation_moves = self.rotation_moves;
        c.seed = self.seed.wrapping_add(1);
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GewekeStatistic {
    pub name: String,
    pub prior_mean: f64,
    pub prior_se: f64,
    pub chain_mean: f64,
    pub chain_se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GewekeReport {
    pub statistics: Vec<GewekeStatistic>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.statistics.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&GewekeStatistic> {
        self.statistics.iter().find(|s| s.name == name)
    }
}

const STAT_NAMES: [&str; 5] = ["d[0]", "sigma2", "u[0,0]", "u[0,0]^2", "v[0,0]^2"];

fn statistics(s: &SvdModelState) -> [f64; 5] {
    let u = s.u[(0, 0)];
    let v = s.v[(0, 0)];
    [s.d[0], s.sigma2, u, u * u, v * v]
}

/// One draw of every sampled parameter from the test prior. The `d_i` are
/// exchangeable here, so sorting iid draws gives the ordered prior used with
/// rotation moves.
pub fn draw_prior<R: Rng + ?Sized>(cfg: &GewekeConfig, rng: &mut R) -> Result<SvdModelState> {
    let (n, m, k) = (cfg.n, cfg.m, cfg.k);
    let sigma = half_t(rng, cfg.halft_xi, cfg.halft_a);
    let sigma2 = sigma * sigma;
    let aux_a = inverse_gamma(
        rng,
        0.5 * (cfg.halft_xi + 1.0),
        1.0 / (cfg.halft_a * cfg.halft_a) + cfg.halft_xi / sigma2,
    );
    let (ns, ms) = ((n - k + 1) as f64, (m - k + 1) as f64);
    let rate = 0.5 * (2.0 / cfg.basis_variance);
    let mut d: Vec<f64> = (0..k).map(|_| gamma(rng, 0.5 * (ns + ms - 1.0), rate).sqrt()).collect();
    if cfg.rotation_moves {
        d.sort_by(|a, b| b.total_cmp(a));
    }
    let u = generate_structured_orthonormal(n, k, &vec![DMatrix::identity(n, n); k], rng)?;
    let v = generate_structured_orthonormal(m, k, &vec![DMatrix::identity(m, m); k], rng)?;
    Ok(SvdModelState {
        u,
        v,
        d,
        sigma2,
        sigma2_u: vec![cfg.basis_variance; k],
        sigma2_v: vec![cfg.basis_variance; k],
        rho_u: Vec::new(),
        rho_v: Vec::new(),
        beta: Vec::new(),
        aux_a,
        aux_a_u: vec![1.0; k],
        aux_a_v: vec![1.0; k],
    })
}

/// `Z = U D Vᵀ + σ η`.
pub fn draw_data<R: Rng + ?Sized>(state: &SvdModelState, rng: &mut R) -> DMatrix<f64> {
    let sigma = state.sigma2.sqrt();
    let signal = state.signal();
    let noise = DMatrix::from_fn(signal.nrows(), signal.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    signal + noise * sigma
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Squared standard error of the mean by non-overlapping batch means.
fn batch_means_var(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = x.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let (_, v) = mean_var(&means);
    v / means.len() as f64
}

pub fn run_geweke(cfg: &GewekeConfig) -> Result<GewekeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prior_stats: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.prior_draws); STAT_NAMES.len()];
    for _ in 0..cfg.prior_draws {
        let s = draw_prior(cfg, &mut rng)?;
        for (j, v) in statistics(&s).into_iter().enumerate() {
            prior_stats[j].push(v);
        }
    }

    let scfg = cfg.sampler_config();
    let start = draw_prior(cfg, &mut rng)?;
    let z = draw_data(&start, &mut rng);
    let cu = CoordinateSet::equally_spaced(0.0, 1.0, cfg.n)?;
    let cv = CoordinateSet::equally_spaced(0.0, 1.0, cfg.m)?;
    let mut sampler = Sampler::from_state(&z, &cu, &cv, None, &scfg, start)?;
    let mut chain_stats: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.cycles); STAT_NAMES.len()];
    for it in 0..(cfg.warmup + cfg.cycles) {
        sampler.step()?;
        let current = sampler.state().clone();
        let z = draw_data(&current, sampler.rng_mut());
        sampler.set_data(z)?;
        if it >= cfg.warmup {
            for (j, v) in statistics(sampler.state()).into_iter().enumerate() {
                chain_stats[j].push(v);
            }
        }
    }

    let statistics = STAT_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (pm, pv) = mean_var(&prior_stats[j]);
            let prior_se = (pv / prior_stats[j].len() as f64).sqrt();
            let (cm, _) = mean_var(&chain_stats[j]);
            let chain_se = batch_means_var(&chain_stats[j], cfg.batches).sqrt();
            GewekeStatistic {
                name: name.to_string(),
                prior_mean: pm,
                prior_se,
                chain_mean: cm,
                chain_se,
                z: (pm - cm) / (prior_se * prior_se + chain_se * chain_se).sqrt(),
            }
        })
        .collect();
    Ok(GewekeReport { statistics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_draws_have_known_moments() {
        let cfg = GewekeConfig::new(8, 6, 1, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<_> = (0..20_000).map(|_| draw_prior(&cfg, &mut rng).unwrap()).collect();
        // E d² = shape / rate = (8 + 6 - 1)/2 / 1
        let d2: Vec<f64> = draws.iter().map(|s| s.d[0] * s.d[0]).collect();
        let (m, v) = mean_var(&d2);
        assert!((m - 6.5).abs() < 4.0 * (v / 20_000.0).sqrt());
        // uniform direction: E u₁₁² = 1/n
        let u2: Vec<f64> = draws.iter().map(|s| s.u[(0, 0)].powi(2)).collect();
        let (m, v) = mean_var(&u2);
        assert!((m - 0.125).abs() < 4.0 * (v / 20_000.0).sqrt());
    }

    #[test]
    fn short_run_produces_all_statistics() {
        let mut cfg = GewekeConfig::new(5, 4, 1, 2000);
        cfg.warmup = 200;
        let r = run_geweke(&cfg).unwrap();
        assert_eq!(r.statistics.len(), 5);
        assert!(r.statistics.iter().all(|s| s.z.is_finite()));
    }
}
