//! Replicated simulation studies: variable versus grouped length-scales,
//! fitted rank, and covariate confounding.
//!
//! Every replicate derives its data and chain seeds from the base seed and its
//! indices, so results do not depend on the number of worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::csvd::classical_svd;
use crate::diagnostics::{column_coverage, column_rmse, coverage_rate, median, quantile_sorted, rmse, summarize, svd_rmse, Target};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{Side, SvdModelConfig};
use crate::sampler::run_mcmc;
use crate::simulation::{simulate_seeded, CovariateMode, SyntheticSpec, SyntheticTruth};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyScale {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalePreset {
    pub n: usize,
    pub replicates: usize,
    pub n_iterations: usize,
    pub n_burnin: usize,
}

impl StudyScale {
    pub fn preset(self) -> ScalePreset {
        match self {
            StudyScale::Desk => ScalePreset { n: 50, replicates: 20, n_iterations: 4000, n_burnin: 2000 },
            StudyScale::Paper => ScalePreset { n: 100, replicates: 100, n_iterations: 10000, n_burnin: 5000 },
        }
    }
}

pub const PAPER_SNRS: [f64; 6] = [10.0, 5.0, 2.0, 1.0, 0.5, 0.1];
pub const COVARIATE_BETA: [f64; 4] = [-2.0, 0.6, 1.2, -0.9];

/// Worker count from `BSVD_WORKERS`, defaulting to the available cores.
pub fn workers_from_env() -> usize {
    std::env::var("BSVD_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// SplitMix64 finalizer over the base seed and a list of indices.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    indices.iter().fold(mix(base), |acc, &i| mix(acc ^ mix(i)))
}

/// Run `f(0..tasks)` on up to `workers` threads and return results in task
/// order. The first error by task index wins.
pub fn run_tasks<T, F>(tasks: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..tasks).map(|_| None).collect());
    let workers = workers.clamp(1, tasks.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tasks {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

fn fit_config(k: usize, preset: &ScalePreset, kernel: KernelSpec, estimate_rho: bool, grouped: bool, seed: u64) -> SvdModelConfig {
    let mut c = SvdModelConfig::new(k, preset.n_iterations, preset.n_burnin).with_kernels(kernel, kernel);
    c.estimate_rho = estimate_rho;
    c.grouped_rho = grouped;
    c.seed = seed;
    c
}

fn fit(truth: &SyntheticTruth, config: &SvdModelConfig) -> Result<crate::diagnostics::PosteriorSummary> {
    let chain = run_mcmc(&truth.z, &truth.coords_u, &truth.coords_v, config, truth.x.as_ref())?;
    summarize(&chain, 0.95)
}

// ---------------------------------------------------------------------------
// variable versus grouped length-scales

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableLengthConfig {
    pub preset: ScalePreset,
    pub d_true: Vec<f64>,
    pub rho_true: Vec<f64>,
    pub snrs: Vec<f64>,
    pub seed: u64,
}

impl VariableLengthConfig {
    pub fn new(scale: StudyScale) -> Self {
        Self {
            preset: scale.preset(),
            d_true: vec![40.0, 30.0, 20.0, 10.0],
            rho_true: vec![3.5, 1.0, 0.5, 0.25],
            snrs: match scale {
                StudyScale::Desk => vec![2.0],
                StudyScale::Paper => PAPER_SNRS.to_vec(),
            },
            seed: 2024,
        }
    }

    fn spec(&self, s: usize, rep: usize) -> SyntheticSpec {
        let n = self.preset.n;
        let mut spec = SyntheticSpec::per_column_matern(n, n, self.d_true.clone(), &self.rho_true, self.snrs[s]);
        spec.seed = derive_seed(self.seed, &[0, s as u64, rep as u64]);
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableLengthRow {
    pub snr: f64,
    pub replicate: usize,
    pub side: Side,
    pub column: usize,
    pub rmse_variable: f64,
    pub rmse_grouped: f64,
    pub ratio: f64,
}

pub fn variable_length_study(cfg: &VariableLengthConfig, workers: usize) -> Result<Vec<VariableLengthRow>> {
    let reps = cfg.preset.replicates;
    let k = cfg.d_true.len();
    // task = (snr, replicate, grouped?)
    let tasks = cfg.snrs.len() * reps * 2;
    let per_task = run_tasks(tasks, workers, |t| {
        let (s, rest) = (t / (reps * 2), t % (reps * 2));
        let (rep, grouped) = (rest / 2, rest % 2 == 1);
        let truth = simulate_seeded(&cfg.spec(s, rep))?;
        let seed = derive_seed(cfg.seed, &[1, s as u64, rep as u64, grouped as u64]);
        let kernel = KernelSpec::Matern { nu: 3.5, rho: 1.0 };
        let summary = fit(&truth, &fit_config(k, &cfg.preset, kernel, true, grouped, seed))?;
        Ok((column_rmse(&summary, &truth, Target::U), column_rmse(&summary, &truth, Target::V)))
    })?;
    let mut rows = Vec::new();
    for s in 0..cfg.snrs.len() {
        for rep in 0..reps {
            let base = (s * reps + rep) * 2;
            let (var, grp) = (&per_task[base], &per_task[base + 1]);
            for (side, v, g) in [(Side::U, &var.0, &grp.0), (Side::V, &var.1, &grp.1)] {
                for c in 0..k {
                    rows.push(VariableLengthRow {
                        snr: cfg.snrs[s],
                        replicate: rep,
                        side,
                        column: c,
                        rmse_variable: v[c],
                        rmse_grouped: g[c],
                        ratio: v[c] / g[c],
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Median and 2.5%/97.5% quantiles of a set of replicate values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self { median: median(&v), lower: quantile_sorted(&v, 0.025), upper: quantile_sorted(&v, 0.975) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub snr: f64,
    pub side: Side,
    pub column: usize,
    pub ratio: Spread,
}

pub fn summarize_ratios(rows: &[VariableLengthRow]) -> Vec<RatioSummary> {
    let mut keys: Vec<(f64, Side, usize)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.snr && k.1 == r.side && k.2 == r.column) {
            keys.push((r.snr, r.side, r.column));
        }
    }
    keys.into_iter()
        .map(|(snr, side, column)| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.snr == snr && r.side == side && r.column == column)
                .map(|r| r.ratio)
                .collect();
            RatioSummary { snr, side, column, ratio: Spread::of(&vals) }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// fitted rank

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankStudyConfig {
    pub preset: ScalePreset,
    pub d_true: Vec<f64>,
    pub rho: f64,
    pub snrs: Vec<f64>,
    pub fitted_k: Vec<usize>,
    pub seed: u64,
}

impl RankStudyConfig {
    pub fn new(scale: StudyScale) -> Self {
        match scale {
            StudyScale::Desk => Self {
                preset: scale.preset(),
                d_true: vec![40.0, 30.0, 20.0],
                rho: 3.0,
                snrs: vec![2.0],
                fitted_k: vec![2, 3, 4],
                seed: 2025,
            },
            StudyScale::Paper => Self {
                preset: scale.preset(),
                d_true: vec![40.0, 30.0, 20.0, 10.0, 5.0],
                rho: 3.0,
                snrs: PAPER_SNRS.to_vec(),
                fitted_k: vec![3, 4, 5, 6, 7],
                seed: 2025,
            },
        }
    }

    fn spec(&self, s: usize, rep: usize) -> SyntheticSpec {
        let n = self.preset.n;
        let mut spec = SyntheticSpec::shared_matern(n, n, self.d_true.clone(), self.rho, self.snrs[s]);
        spec.seed = derive_seed(self.seed, &[0, s as u64, rep as u64]);
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub snr: f64,
    pub replicate: usize,
    pub k: usize,
    pub coverage_u: f64,
    pub coverage_v: f64,
    pub coverage_y: f64,
    pub rmse_u: f64,
    pub rmse_v: f64,
    pub rmse_y: f64,
    pub csvd_rmse_u: f64,
    pub csvd_rmse_v: f64,
    pub csvd_rmse_y: f64,
}

pub fn rank_study(cfg: &RankStudyConfig, workers: usize) -> Result<Vec<RankRow>> {
    let reps = cfg.preset.replicates;
    let nk = cfg.fitted_k.len();
    let tasks = cfg.snrs.len() * reps * nk;
    run_tasks(tasks, workers, |t| {
        let (s, rest) = (t / (reps * nk), t % (reps * nk));
        let (rep, ki) = (rest / nk, rest % nk);
        let k = cfg.fitted_k[ki];
        let truth = simulate_seeded(&cfg.spec(s, rep))?;
        let seed = derive_seed(cfg.seed, &[1, s as u64, rep as u64, k as u64]);
        let kernel = KernelSpec::Matern { nu: 3.5, rho: cfg.rho };
        let summary = fit(&truth, &fit_config(k, &cfg.preset, kernel, false, false, seed))?;
        let svd = classical_svd(&truth.z, k)?;
        Ok(RankRow {
            snr: cfg.snrs[s],
            replicate: rep,
            k,
            coverage_u: coverage_rate(&summary, &truth, Target::U),
            coverage_v: coverage_rate(&summary, &truth, Target::V),
            coverage_y: coverage_rate(&summary, &truth, Target::Y),
            rmse_u: rmse(&summary, &truth, Target::U),
            rmse_v: rmse(&summary, &truth, Target::V),
            rmse_y: rmse(&summary, &truth, Target::Y),
            csvd_rmse_u: svd_rmse(&svd, &truth, Target::U),
            csvd_rmse_v: svd_rmse(&svd, &truth, Target::V),
            csvd_rmse_y: svd_rmse(&svd, &truth, Target::Y),
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub snr: f64,
    pub k: usize,
    pub coverage_u: Spread,
    pub coverage_v: Spread,
    pub coverage_y: Spread,
    pub rmse_u: Spread,
    pub rmse_v: Spread,
    pub rmse_y: Spread,
    pub csvd_rmse_u: Spread,
    pub csvd_rmse_v: Spread,
    pub csvd_rmse_y: Spread,
    /// Fraction of replicates where the posterior mean beats the C-SVD on both `U` and `V`.
    pub bayes_wins: f64,
}

pub fn summarize_rank(rows: &[RankRow]) -> Vec<RankSummary> {
    let mut keys: Vec<(f64, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.snr, r.k)) {
            keys.push((r.snr, r.k));
        }
    }
    keys.into_iter()
        .map(|(snr, k)| {
            let sel: Vec<&RankRow> = rows.iter().filter(|r| r.snr == snr && r.k == k).collect();
            let spread = |f: fn(&RankRow) -> f64| Spread::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let wins = sel.iter().filter(|r| r.rmse_u <= r.csvd_rmse_u && r.rmse_v <= r.csvd_rmse_v).count();
            RankSummary {
                snr,
                k,
                coverage_u: spread(|r| r.coverage_u),
                coverage_v: spread(|r| r.coverage_v),
                coverage_y: spread(|r| r.coverage_y),
                rmse_u: spread(|r| r.rmse_u),
                rmse_v: spread(|r| r.rmse_v),
                rmse_y: spread(|r| r.rmse_y),
                csvd_rmse_u: spread(|r| r.csvd_rmse_u),
                csvd_rmse_v: spread(|r| r.csvd_rmse_v),
                csvd_rmse_y: spread(|r| r.csvd_rmse_y),
                bayes_wins: wins as f64 / sel.len() as f64,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// covariates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateStudyConfig {
    pub preset: ScalePreset,
    pub d_true: Vec<f64>,
    pub rho: f64,
    pub beta: Vec<f64>,
    pub snr: f64,
    pub designs: Vec<CovariateMode>,
    pub fit_k: usize,
    pub fit_nu: f64,
    pub seed: u64,
}

impl CovariateStudyConfig {
    pub fn new(scale: StudyScale) -> Self {
        Self {
            preset: scale.preset(),
            d_true: vec![40.0, 30.0, 20.0, 10.0, 5.0],
            rho: 3.0,
            beta: COVARIATE_BETA.to_vec(),
            snr: 2.0,
            designs: vec![CovariateMode::M1, CovariateMode::M2, CovariateMode::M3],
            fit_k: 5,
            fit_nu: 3.5,
            seed: 2026,
        }
    }

    pub fn spec(&self, design: usize, rep: usize) -> SyntheticSpec {
        let n = self.preset.n;
        let mut spec = SyntheticSpec::shared_matern(n, n, self.d_true.clone(), self.rho, self.snr);
        spec.covariate_mode = self.designs[design];
        spec.beta_true = Some(self.beta.clone());
        spec.seed = derive_seed(self.seed, &[0, design as u64, rep as u64]);
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub design: CovariateMode,
    pub replicate: usize,
    pub index: usize,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub design: CovariateMode,
    pub replicate: usize,
    pub coverage_y: f64,
    pub beta_covered: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateReport {
    pub beta: Vec<BetaRow>,
    pub designs: Vec<DesignRow>,
}

/// Per-design medians over replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: CovariateMode,
    pub coverage_y: Spread,
    pub beta_covered: f64,
    /// Median posterior mean, lower and upper bound per coefficient.
    pub beta_mean: Vec<f64>,
    pub beta_lower: Vec<f64>,
    pub beta_upper: Vec<f64>,
}

impl CovariateReport {
    pub fn summarize(&self) -> Vec<DesignSummary> {
        let mut designs: Vec<CovariateMode> = Vec::new();
        for d in &self.designs {
            if !designs.contains(&d.design) {
                designs.push(d.design);
            }
        }
        designs
            .into_iter()
            .map(|design| {
                let rows: Vec<&DesignRow> = self.designs.iter().filter(|r| r.design == design).collect();
                let cov: Vec<f64> = rows.iter().map(|r| r.coverage_y).collect();
                let covered: Vec<f64> = rows.iter().map(|r| r.beta_covered as f64).collect();
                let p = self.beta.iter().filter(|b| b.design == design).map(|b| b.index + 1).max().unwrap_or(0);
                let per = |f: fn(&BetaRow) -> f64| -> Vec<f64> {
                    (0..p)
                        .map(|j| {
                            let v: Vec<f64> =
                                self.beta.iter().filter(|b| b.design == design && b.index == j).map(f).collect();
                            Spread::of(&v).median
                        })
                        .collect()
                };
                DesignSummary {
                    design,
                    coverage_y: Spread::of(&cov),
                    beta_covered: Spread::of(&covered).median,
                    beta_mean: per(|b| b.mean),
                    beta_lower: per(|b| b.lower),
                    beta_upper: per(|b| b.upper),
                }
            })
            .collect()
    }
}

pub fn covariate_study(cfg: &CovariateStudyConfig, workers: usize) -> Result<CovariateReport> {
    if cfg.designs.contains(&CovariateMode::None) {
        return Err(Error::input("covariate study designs must be M1, M2 or M3"));
    }
    let reps = cfg.preset.replicates;
    let tasks = cfg.designs.len() * reps;
    let results = run_tasks(tasks, workers, |t| {
        let (di, rep) = (t / reps, t % reps);
        let truth = simulate_seeded(&cfg.spec(di, rep))?;
        let seed = derive_seed(cfg.seed, &[1, di as u64, rep as u64]);
        let kernel = KernelSpec::Matern { nu: cfg.fit_nu, rho: 1.0 };
        let summary = fit(&truth, &fit_config(cfg.fit_k, &cfg.preset, kernel, true, false, seed))?;
        let design = cfg.designs[di];
        let beta: Vec<BetaRow> = cfg
            .beta
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let (lo, hi) = (summary.beta.lower[(j, 0)], summary.beta.upper[(j, 0)]);
                BetaRow {
                    design,
                    replicate: rep,
                    index: j,
                    truth: b,
                    mean: summary.beta.mean[(j, 0)],
                    sd: summary.beta.sd[(j, 0)],
                    lower: lo,
                    upper: hi,
                    covered: lo <= b && b <= hi,
                }
            })
            .collect();
        let row = DesignRow {
            design,
            replicate: rep,
            coverage_y: column_coverage(&summary, &truth, Target::Y)[0],
            beta_covered: beta.iter().filter(|b| b.covered).count(),
        };
        Ok((beta, row))
    })?;
    let mut report = CovariateReport::default();
    for (b, d) in results {
        report.beta.extend(b);
        report.designs.push(d);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_and_repeat() {
        let a = derive_seed(1, &[0, 1, 2]);
        assert_eq!(a, derive_seed(1, &[0, 1, 2]));
        assert_ne!(a, derive_seed(1, &[0, 2, 1]));
        assert_ne!(a, derive_seed(2, &[0, 1, 2]));
    }

    #[test]
    fn tasks_return_in_order_for_any_worker_count() {
        for w in [1, 3, 8] {
            let out = run_tasks(17, w, |i| Ok(i * i)).unwrap();
            assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
        }
        let err = run_tasks(5, 2, |i| if i >= 2 { Err(Error::input(format!("task {i}"))) } else { Ok(i) });
        assert!(err.unwrap_err().to_string().contains("task 2"));
    }

    #[test]
    fn spread_of_known_values() {
        let s = Spread::of(&[3.0, 1.0, 2.0, 4.0, 5.0]);
        assert_eq!(s.median, 3.0);
        assert!((s.lower - 1.1).abs() < 1e-12 && (s.upper - 4.9).abs() < 1e-12);
    }

    fn tiny(preset: &mut ScalePreset) {
        *preset = ScalePreset { n: 12, replicates: 2, n_iterations: 60, n_burnin: 30 };
    }

    #[test]
    fn tiny_studies_are_worker_independent() {
        let mut rank = RankStudyConfig::new(StudyScale::Desk);
        tiny(&mut rank.preset);
        let a = rank_study(&rank, 1).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, rank_study(&rank, 3).unwrap());
        assert_eq!(summarize_rank(&a).len(), 3);

        let mut var = VariableLengthConfig::new(StudyScale::Desk);
        tiny(&mut var.preset);
        let rows = variable_length_study(&var, 2).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        assert_eq!(summarize_ratios(&rows).len(), 8);

        let mut cov = CovariateStudyConfig::new(StudyScale::Desk);
        tiny(&mut cov.preset);
        cov.preset.replicates = 1;
        let rep = covariate_study(&cov, 2).unwrap();
        assert_eq!(rep.beta.len(), 12);
        assert_eq!(rep.designs.len(), 3);
        let sum = rep.summarize();
        assert_eq!(sum.len(), 3);
        assert_eq!(sum[1].design, CovariateMode::M2);
        assert_eq!(sum[0].beta_mean.len(), 4);
        assert_eq!(sum[0].coverage_y.median, rep.designs[0].coverage_y);
    }
}
