use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use bsvd::csvd::{classical_svd, column_cosines};
use bsvd::diagnostics::{column_coverage, column_rmse, significance_mask, summarize as summarize_chain, CellSummary, Matching, PosteriorSummary, Target};
use bsvd::io::{
    fmt_f64, read_chain, read_config, read_coordinates, read_matrix, read_truth, write_cell_summary, write_chain,
    write_coordinates, write_dir_atomic, write_json, write_matrix, write_table, write_truth, FORMAT_VERSION,
};
use bsvd::sampler::run_mcmc;
use bsvd::simulation::simulate_seeded;
use nalgebra::DMatrix;
use serde_json::{json, Value};

/// A problem with the command line or its inputs rather than the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Common header of every `manifest.json`.
pub fn manifest(command: &str, body: Value) -> Value {
    let mut m = json!({
        "tool": "bsvd",
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "command": command,
    });
    if let (Value::Object(m), Value::Object(b)) = (&mut m, body) {
        m.extend(b);
    }
    m
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = read_config(config)?;
    let mut spec = cfg
        .simulation
        .ok_or_else(|| usage(format!("{}: config has no `simulation` section", config.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let truth = simulate_seeded(&spec)?;
    log::info!("simulated {}x{} matrix with rank {}", spec.n, spec.m, spec.k_true());
    write_dir_atomic(out, |dir| {
        write_matrix(dir.join("z.csv"), &truth.z)?;
        write_coordinates(dir.join("coords_u.csv"), &truth.coords_u)?;
        write_coordinates(dir.join("coords_v.csv"), &truth.coords_v)?;
        write_truth(dir.join("truth.json"), &truth, Some(&spec))?;
        let mut files = vec!["z.csv", "coords_u.csv", "coords_v.csv", "truth.json"];
        if let Some(x) = &truth.x {
            write_matrix(dir.join("covariates.csv"), x)?;
            files.push("covariates.csv");
        }
        let body = json!({
            "seed": spec.seed,
            "inputs": { "config": path_str(config) },
            "simulation": spec,
            "files": files,
        });
        write_json(dir.join("manifest.json"), &manifest("simulate", body))
    })?;
    Ok(())
}

pub struct FitArgs {
    pub data: PathBuf,
    pub coords_u: PathBuf,
    pub coords_v: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    pub covariates: Option<PathBuf>,
    pub center: bool,
    pub seed: Option<u64>,
    pub timing: bool,
}

fn load_data(path: &Path, center: bool) -> Result<(DMatrix<f64>, Option<f64>)> {
    let mut z = read_matrix(path)?;
    if z.is_empty() {
        return Err(usage(format!("{}: data matrix is empty", path.display())));
    }
    if !center {
        return Ok((z, None));
    }
    let mu = z.mean();
    z.add_scalar_mut(-mu);
    Ok((z, Some(mu)))
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let cfg = read_config(&a.config)?;
    let mut model = cfg
        .model
        .ok_or_else(|| usage(format!("{}: config has no `model` section", a.config.display())))?;
    if let Some(s) = a.seed {
        model.seed = s;
    }
    let (z, offset) = load_data(&a.data, a.center)?;
    let cu = read_coordinates(&a.coords_u)?;
    let cv = read_coordinates(&a.coords_v)?;
    let x = a.covariates.as_deref().map(read_matrix).transpose()?;
    model.validate_for(z.nrows(), z.ncols())?;
    log::info!("fitting rank {} to a {}x{} matrix for {} iterations", model.k, z.nrows(), z.ncols(), model.n_iterations);

    let start = Instant::now();
    let chain = run_mcmc(&z, &cu, &cv, &model, x.as_ref()).context("sampler failed")?;
    let seconds = start.elapsed().as_secs_f64();

    write_dir_atomic(&a.out, |dir| {
        write_chain(&chain, dir.join("chain"))?;
        let rows: Vec<Vec<String>> = chain
            .acceptance
            .iter()
            .map(|r| {
                vec![
                    r.parameter.clone(),
                    r.accepted.to_string(),
                    r.attempted.to_string(),
                    fmt_f64(r.rate()),
                    r.proposal_sd.map(fmt_f64).unwrap_or_default(),
                ]
            })
            .collect();
        write_table(dir.join("acceptance.csv"), &["parameter", "accepted", "attempted", "rate", "proposal_sd"], &rows)?;
        if a.timing {
            let runtime = json!({
                "seconds": seconds,
                "iterations": model.n_iterations,
                "seconds_per_iteration": seconds / model.n_iterations as f64,
            });
            write_json(dir.join("runtime.json"), &runtime)?;
        }
        let mut inputs = json!({
            "data": path_str(&a.data),
            "coords_u": path_str(&a.coords_u),
            "coords_v": path_str(&a.coords_v),
            "config": path_str(&a.config),
        });
        if let Some(c) = &a.covariates {
            inputs["covariates"] = json!(path_str(c));
        }
        let body = json!({
            "seed": model.seed,
            "inputs": inputs,
            "center_offset": offset,
            "model": model,
            "draws": chain.len(),
        });
        write_json(dir.join("manifest.json"), &manifest("fit", body))
    })?;
    Ok(())
}

/// Accept either a chain directory or a `fit` output directory containing one.
fn chain_dir(path: &Path) -> PathBuf {
    let inner = path.join("chain");
    if inner.join("manifest.json").is_file() {
        inner
    } else {
        path.to_path_buf()
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(usage(format!("--level must be in (0, 1), got {level}")));
    }
    Ok(())
}

fn scalar_rows(s: &PosteriorSummary) -> Vec<Vec<String>> {
    let groups: [(&str, &CellSummary); 7] = [
        ("d", &s.d),
        ("sigma2", &s.sigma2),
        ("sigma2_u", &s.sigma2_u),
        ("sigma2_v", &s.sigma2_v),
        ("rho_u", &s.rho_u),
        ("rho_v", &s.rho_v),
        ("beta", &s.beta),
    ];
    let mut rows = Vec::new();
    for (name, c) in groups {
        for i in 0..c.shape().0 {
            rows.push(vec![
                name.to_string(),
                i.to_string(),
                fmt_f64(c.mean[(i, 0)]),
                fmt_f64(c.sd[(i, 0)]),
                fmt_f64(c.lower[(i, 0)]),
                fmt_f64(c.upper[(i, 0)]),
            ]);
        }
    }
    rows
}

pub fn summarize(chain: &Path, out: &Path, level: f64, truth_file: Option<&Path>) -> Result<()> {
    check_level(level)?;
    let dir_in = chain_dir(chain);
    let chain = read_chain(&dir_in)?;
    let summary = summarize_chain(&chain, level)?;
    let truth = truth_file.map(read_truth).transpose()?;
    if let Some(t) = &truth {
        if t.u.nrows() != summary.u.shape().0 || t.v.nrows() != summary.v.shape().0 {
            return Err(usage(format!(
                "truth is {}x{} but the chain is {}x{}",
                t.u.nrows(),
                t.v.nrows(),
                summary.u.shape().0,
                summary.v.shape().0
            )));
        }
    }
    let shown = match &truth {
        Some(t) => summary.aligned_to(&t.u, &t.v, Matching::Index),
        None => summary.clone(),
    };
    write_dir_atomic(out, |dir| {
        write_cell_summary(dir.join("u.csv"), &shown.u)?;
        write_cell_summary(dir.join("v.csv"), &shown.v)?;
        write_cell_summary(dir.join("y.csv"), &shown.y)?;
        write_cell_summary(dir.join("a.csv"), &shown.a)?;
        write_table(dir.join("scalars.csv"), &["parameter", "index", "mean", "sd", "lower", "upper"], &scalar_rows(&shown))?;
        if let Some(t) = &truth {
            let mut overall = Vec::new();
            let mut per_column = Vec::new();
            for (name, target) in [("U", Target::U), ("V", Target::V), ("Y", Target::Y)] {
                let cov = column_coverage(&summary, t, target);
                let err = column_rmse(&summary, t, target);
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                overall.push(vec![name.to_string(), fmt_f64(mean(&cov)), fmt_f64(mean(&err))]);
                if target != Target::Y {
                    for (j, (c, e)) in cov.iter().zip(&err).enumerate() {
                        per_column.push(vec![name.to_string(), j.to_string(), fmt_f64(*c), fmt_f64(*e)]);
                    }
                }
            }
            write_table(dir.join("metrics.csv"), &["target", "coverage", "rmse"], &overall)?;
            write_table(dir.join("column_metrics.csv"), &["target", "column", "coverage", "rmse"], &per_column)?;
        }
        let body = json!({
            "seed": chain.seed,
            "inputs": { "chain": path_str(&dir_in), "truth": truth_file.map(path_str) },
            "level": level,
            "draws": summary.draws,
        });
        write_json(dir.join("manifest.json"), &manifest("summarize", body))
    })?;
    Ok(())
}

fn mask_matrix(mask: &DMatrix<bool>) -> DMatrix<f64> {
    mask.map(|b| if b { 1.0 } else { 0.0 })
}

pub fn compare(chain: &Path, data: &Path, out: &Path, level: f64, center: bool) -> Result<()> {
    check_level(level)?;
    let dir_in = chain_dir(chain);
    let chain = read_chain(&dir_in)?;
    let (z, offset) = load_data(data, center)?;
    let k = chain.k();
    let summary = summarize_chain(&chain, level)?;
    if z.nrows() != summary.u.shape().0 || z.ncols() != summary.v.shape().0 {
        return Err(usage(format!(
            "data is {}x{} but the chain is {}x{}",
            z.nrows(),
            z.ncols(),
            summary.u.shape().0,
            summary.v.shape().0
        )));
    }
    let svd = classical_svd(&z, k)?;
    let cos_u = column_cosines(&summary.u.mean, &svd.u);
    let cos_v = column_cosines(&summary.v.mean, &svd.v);
    let aligned = summary.aligned_to(&svd.u, &svd.v, Matching::Index);
    let mask_u = significance_mask(&aligned.u, &svd.u);
    let mask_v = significance_mask(&aligned.v, &svd.v);
    write_dir_atomic(out, |dir| {
        write_matrix(dir.join("csvd_u.csv"), &svd.u)?;
        write_matrix(dir.join("csvd_v.csv"), &svd.v)?;
        write_matrix(dir.join("csvd_d.csv"), &DMatrix::from_column_slice(k, 1, &svd.d))?;
        let mut rows = Vec::new();
        for (side, cos, mask) in [("U", &cos_u, &mask_u), ("V", &cos_v, &mask_v)] {
            for (j, c) in cos.iter().enumerate() {
                let flagged = mask.column(j).iter().filter(|b| **b).count();
                rows.push(vec![side.to_string(), j.to_string(), fmt_f64(*c), flagged.to_string()]);
            }
        }
        write_table(dir.join("cosines.csv"), &["side", "column", "abs_cosine", "cells_differing"], &rows)?;
        write_matrix(dir.join("mask_u.csv"), &mask_matrix(&mask_u))?;
        write_matrix(dir.join("mask_v.csv"), &mask_matrix(&mask_v))?;
        let body = json!({
            "seed": chain.seed,
            "inputs": { "chain": path_str(&dir_in), "data": path_str(data) },
            "center_offset": offset,
            "level": level,
            "k": k,
        });
        write_json(dir.join("manifest.json"), &manifest("compare", body))
    })?;
    Ok(())
}
