use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsvd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsvd"))
        .args(args)
        .current_dir(cwd)
        .env("BSVD_WORKERS", "1")
        .output()
        .expect("failed to launch bsvd")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, k: usize) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "version": 1,
  "simulation": {{
    "n": 30, "m": 24,
    "d_true": [40, 30, 20, 10, 5],
    "u_kernels": [{{"family": "matern", "nu": 3.5, "rho": 3}}],
    "v_kernels": [{{"family": "matern", "nu": 3.5, "rho": 3}}],
    "snr": 2, "seed": 3
  }},
  "model": {{ "k": {k}, "n_iterations": 200, "n_burnin": 100, "seed": 4 }}
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn simulate_and_fit(dir: &Path) {
    write_config(dir, 5);
    ok(bsvd(&["simulate", "--config", "config.json", "--out", "sim"], dir));
    ok(bsvd(
        &[
            "fit", "--data", "sim/z.csv", "--coords-u", "sim/coords_u.csv", "--coords-v", "sim/coords_v.csv",
            "--config", "config.json", "--out", "fit",
        ],
        dir,
    ));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn simulate_fit_summarize_produces_coverage_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate_and_fit(dir);
    for f in ["z.csv", "coords_u.csv", "coords_v.csv", "truth.json", "manifest.json"] {
        assert!(dir.join("sim").join(f).is_file(), "sim/{f}");
    }
    for f in ["chain/manifest.json", "chain/u.csv", "acceptance.csv", "manifest.json"] {
        assert!(dir.join("fit").join(f).is_file(), "fit/{f}");
    }
    assert!(!dir.join("fit/runtime.json").exists());

    ok(bsvd(&["summarize", "--chain", "fit", "--out", "summary", "--truth", "sim/truth.json"], dir));
    let metrics = csv_rows(&dir.join("summary/metrics.csv"));
    assert_eq!(metrics[0], ["target", "coverage", "rmse"]);
    let targets: Vec<&str> = metrics[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(targets, ["U", "V", "Y"]);
    for row in &metrics[1..] {
        let cr: f64 = row[1].parse().unwrap();
        let rmse: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&cr));
        assert!(rmse.is_finite() && rmse >= 0.0);
    }
    // one row per (side, column)
    assert_eq!(csv_rows(&dir.join("summary/column_metrics.csv")).len(), 1 + 2 * 5);

    ok(bsvd(&["compare", "--chain", "fit", "--data", "sim/z.csv", "--out", "cmp"], dir));
    let cos = csv_rows(&dir.join("cmp/cosines.csv"));
    assert_eq!(cos.len(), 1 + 10);
    for row in &cos[1..] {
        let c: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&c));
    }
}

#[test]
fn rank_above_data_dimensions_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, 5);
    ok(bsvd(&["simulate", "--config", "config.json", "--out", "sim"], dir));
    write_config(dir, 25);
    let out = bsvd(
        &[
            "fit", "--data", "sim/z.csv", "--coords-u", "sim/coords_u.csv", "--coords-v", "sim/coords_v.csv",
            "--config", "config.json", "--out", "fit",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    assert!(!dir.join("fit").exists());
}

#[test]
fn missing_inputs_exit_with_usage_error_and_leave_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir, 2);
    let out = bsvd(
        &[
            "fit", "--data", "nope.csv", "--coords-u", "a.csv", "--coords-v", "b.csv", "--config", "config.json",
            "--out", "fit",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("nope.csv"), "{msg}");
    assert!(!dir.join("fit").exists());

    let out = bsvd(&["summarize", "--chain", "missing", "--out", "s"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("s").exists());
}

#[test]
fn invalid_level_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate_and_fit(dir);
    let out = bsvd(&["summarize", "--chain", "fit", "--out", "s", "--level", "1.5"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("s").exists());
}

#[test]
fn fit_output_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        fs::create_dir(d).unwrap();
        simulate_and_fit(d);
    }
    for f in ["sim/z.csv", "sim/truth.json", "fit/chain/u.csv", "fit/chain/d.csv", "fit/acceptance.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn covariate_study_table_has_truth_then_interval_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(bsvd(&["study", "--name", "covariates", "--replicates", "1", "--out", "cov"], dir));
    let table = csv_rows(&dir.join("cov/table.csv"));
    assert_eq!(table[0], ["design", "row", "beta[0]", "beta[1]", "beta[2]", "beta[3]", "coverage_y", "beta_covered"]);
    assert_eq!(table[1][..2], ["truth", "value"]);
    let truth: Vec<f64> = table[1][2..6].iter().map(|c| c.parse().unwrap()).collect();
    assert_eq!(truth, [-2.0, 0.6, 1.2, -0.9]);
    let labels: Vec<(&str, &str)> = table[2..].iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    let mut want = Vec::new();
    for d in ["M1", "M2", "M3"] {
        for r in ["mean", "lower", "upper"] {
            want.push((d, r));
        }
    }
    assert_eq!(labels, want);
    for block in table[2..].chunks(3) {
        for j in 2..6 {
            let (mean, lo, hi): (f64, f64, f64) =
                (block[0][j].parse().unwrap(), block[1][j].parse().unwrap(), block[2][j].parse().unwrap());
            assert!(lo <= mean && mean <= hi);
        }
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("cov/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["preset"]["replicates"], 1);
}

#[test]
fn zero_replicates_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bsvd(&["study", "--name", "rank", "--replicates", "0", "--out", "r"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
