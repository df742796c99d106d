//! `bsvd study`: run a preset study and write per-replicate rows plus the
//! aggregated tables.

use std::path::Path;

use anyhow::Result;
use bsvd::io::{fmt_f64, write_dir_atomic, write_json, write_table};
use bsvd::study::{
    covariate_study, rank_study, summarize_rank, summarize_ratios, variable_length_study, CovariateStudyConfig,
    RankStudyConfig, ScalePreset, Spread, StudyScale, VariableLengthConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::commands::manifest;

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> bsvd::error::Result<()> {
    let io_err = |e: csv::Error| bsvd::error::Error::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| bsvd::error::Error::Config(format!("{}: {e}", path.display())))
}

fn spread_cells(s: &Spread) -> [String; 3] {
    [fmt_f64(s.median), fmt_f64(s.lower), fmt_f64(s.upper)]
}

fn spread_header(name: &str) -> [String; 3] {
    [format!("{name}_median"), format!("{name}_lower"), format!("{name}_upper")]
}

pub struct Run {
    pub scale: StudyScale,
    pub preset: ScalePreset,
    pub workers: usize,
}

fn scale_name(scale: StudyScale) -> &'static str {
    match scale {
        StudyScale::Desk => "desk",
        StudyScale::Paper => "paper",
    }
}

pub fn variable_length(run: &Run, out: &Path) -> Result<()> {
    let scale = run.scale;
    let mut cfg = VariableLengthConfig::new(scale);
    cfg.preset = run.preset;
    log::info!("variable-length study: {} replicates", cfg.preset.replicates);
    let rows = variable_length_study(&cfg, run.workers)?;
    let summary = summarize_ratios(&rows);
    write_dir_atomic(out, |dir| {
        write_rows(&dir.join("rows.csv"), &rows)?;
        let table: Vec<Vec<String>> = summary
            .iter()
            .map(|s| {
                let mut r = vec![fmt_f64(s.snr), s.side.name().to_string(), s.column.to_string()];
                r.extend(spread_cells(&s.ratio));
                r
            })
            .collect();
        write_table(dir.join("ratios.csv"), &["snr", "side", "column", "ratio_median", "ratio_lower", "ratio_upper"], &table)?;
        let body = json!({ "study": "variable-length", "scale": scale_name(scale), "seed": cfg.seed, "config": cfg });
        write_json(dir.join("manifest.json"), &manifest("study", body))
    })?;
    Ok(())
}

pub fn rank(run: &Run, out: &Path) -> Result<()> {
    let scale = run.scale;
    let mut cfg = RankStudyConfig::new(scale);
    cfg.preset = run.preset;
    log::info!("rank study: {} replicates x {} fitted ranks", cfg.preset.replicates, cfg.fitted_k.len());
    let rows = rank_study(&cfg, run.workers)?;
    let summary = summarize_rank(&rows);
    write_dir_atomic(out, |dir| {
        write_rows(&dir.join("rows.csv"), &rows)?;
        let metrics = [
            "coverage_u",
            "coverage_v",
            "coverage_y",
            "rmse_u",
            "rmse_v",
            "rmse_y",
            "csvd_rmse_u",
            "csvd_rmse_v",
            "csvd_rmse_y",
        ];
        let mut header: Vec<String> = vec!["snr".into(), "k".into()];
        for m in metrics {
            header.extend(spread_header(m));
        }
        header.push("bayes_wins".into());
        let table: Vec<Vec<String>> = summary
            .iter()
            .map(|s| {
                let mut r = vec![fmt_f64(s.snr), s.k.to_string()];
                for sp in [
                    &s.coverage_u,
                    &s.coverage_v,
                    &s.coverage_y,
                    &s.rmse_u,
                    &s.rmse_v,
                    &s.rmse_y,
                    &s.csvd_rmse_u,
                    &s.csvd_rmse_v,
                    &s.csvd_rmse_y,
                ] {
                    r.extend(spread_cells(sp));
                }
                r.push(fmt_f64(s.bayes_wins));
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(dir.join("summary.csv"), &header, &table)?;
        let body = json!({ "study": "rank", "scale": scale_name(scale), "seed": cfg.seed, "config": cfg });
        write_json(dir.join("manifest.json"), &manifest("study", body))
    })?;
    Ok(())
}

pub fn covariates(run: &Run, out: &Path) -> Result<()> {
    let scale = run.scale;
    let mut cfg = CovariateStudyConfig::new(scale);
    cfg.preset = run.preset;
    log::info!("covariate study: {} replicates x {} designs", cfg.preset.replicates, cfg.designs.len());
    let report = covariate_study(&cfg, run.workers)?;
    let summary = report.summarize();
    write_dir_atomic(out, |dir| {
        write_rows(&dir.join("beta.csv"), &report.beta)?;
        write_rows(&dir.join("designs.csv"), &report.designs)?;
        // truth, then posterior mean over a row of lower and upper bounds per design
        let p = cfg.beta.len();
        let mut header = vec!["design".to_string(), "row".to_string()];
        header.extend((0..p).map(|j| format!("beta[{j}]")));
        header.extend(["coverage_y".to_string(), "beta_covered".to_string()]);
        let mut table = Vec::new();
        let mut truth = vec!["truth".to_string(), "value".to_string()];
        truth.extend(cfg.beta.iter().map(|b| fmt_f64(*b)));
        truth.extend([String::new(), String::new()]);
        table.push(truth);
        for s in &summary {
            let name = format!("{:?}", s.design);
            for (row, vals) in [("mean", &s.beta_mean), ("lower", &s.beta_lower), ("upper", &s.beta_upper)] {
                let mut r = vec![name.clone(), row.to_string()];
                r.extend(vals.iter().map(|v| fmt_f64(*v)));
                if row == "mean" {
                    r.extend([fmt_f64(s.coverage_y.median), fmt_f64(s.beta_covered)]);
                } else {
                    r.extend([String::new(), String::new()]);
                }
                table.push(r);
            }
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(dir.join("table.csv"), &header, &table)?;
        let body = json!({ "study": "covariates", "scale": scale_name(scale), "seed": cfg.seed, "config": cfg });
        write_json(dir.join("manifest.json"), &manifest("study", body))
    })?;
    Ok(())
}
