//! File formats: CSV matrices, JSON run configurations, chain directories
//! and truth sidecars.
//!
//! Floating-point values are written with 17 significant digits, so every
//! write/read round trip is exact.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::CellSummary;
use crate::error::{Error, Result};
use crate::kernels::CoordinateSet;
use crate::model::{SvdModelConfig, SvdModelState};
use crate::sampler::{AcceptanceRate, PosteriorChain};
use crate::simulation::{SyntheticSpec, SyntheticTruth};

pub const FORMAT_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// A numeric matrix with optional column and row labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    pub data: DMatrix<f64>,
    pub column_labels: Option<Vec<String>>,
    pub row_labels: Option<Vec<String>>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Read a CSV matrix. A first line with no numeric cells is a header; a
/// first column that is non-numeric on the first data line holds row labels.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<MatrixFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut row_labels: Option<Vec<String>> = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if header.is_none() && rows == 0 && rec.iter().all(|c| parse_cell(c).is_none()) {
            header = Some(rec.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>());
            continue;
        }
        if rows == 0 {
            let first_numeric = rec.get(0).and_then(parse_cell).is_some();
            if !first_numeric {
                row_labels = Some(Vec::new());
            }
        }
        let skip = usize::from(row_labels.is_some());
        if let Some(labels) = row_labels.as_mut() {
            labels.push(rec.get(0).unwrap_or("").trim().to_string());
        }
        let cells = rec.len().saturating_sub(skip);
        match width {
            None => width = Some(cells),
            Some(w) if w != cells => {
                return Err(parse_err(path, line, format!("expected {w} values, found {cells}")));
            }
            _ => {}
        }
        for (j, c) in rec.iter().skip(skip).enumerate() {
            let v = parse_cell(c).ok_or_else(|| parse_err(path, line, format!("column {}: `{c}` is not a number", j + 1 + skip)))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", j + 1 + skip)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(parse_err(path, 1, "no numeric rows"));
    }
    let column_labels = header.map(|h| if row_labels.is_some() && h.len() == cols + 1 { h[1..].to_vec() } else { h });
    if let Some(h) = &column_labels {
        if h.len() != cols {
            return Err(parse_err(path, 1, format!("header has {} labels for {cols} columns", h.len())));
        }
    }
    Ok(MatrixFile { data: DMatrix::from_row_slice(rows, cols, &values), column_labels, row_labels })
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix_file(path).map(|f| f.data)
}

pub fn write_matrix_file(path: impl AsRef<Path>, file: &MatrixFile) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(h) = &file.column_labels {
        if file.row_labels.is_some() {
            out.push_str("label,");
        }
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for r in 0..file.data.nrows() {
        let mut cells = Vec::with_capacity(file.data.ncols() + 1);
        if let Some(l) = &file.row_labels {
            cells.push(l[r].clone());
        }
        cells.extend(file.data.row(r).iter().map(|&x| fmt_f64(x)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_file(path, &MatrixFile { data: m.clone(), column_labels: None, row_labels: None })
}

/// Coordinates are stored one point per row.
pub fn read_coordinates(path: impl AsRef<Path>) -> Result<CoordinateSet> {
    let m = read_matrix(path)?;
    let points: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    CoordinateSet::new(&points)
}

pub fn write_coordinates(path: impl AsRef<Path>, coords: &CoordinateSet) -> Result<()> {
    let pts = coords.points();
    let m = DMatrix::from_fn(coords.len(), coords.dim(), |r, c| pts[r][c]);
    write_matrix(path, &m)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = sibling(path, "partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{tag}-{}", std::process::id()))
}

/// Build a directory under a temporary name and move it into place only once
/// `fill` succeeds. An existing directory at `dir` is replaced.
pub fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = sibling(dir, "partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

/// A run configuration: sampler settings, a synthetic design, or both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<SvdModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SyntheticSpec>,
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Config(format!(
                "{}: config version {v} is not supported (expected {FORMAT_VERSION})",
                path.display()
            )))
        }
        None => return Err(Error::Config(format!("{}: missing integer `version`", path.display()))),
    }
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))?;
    if let Some(m) = &cfg.model {
        m.validate()?;
    }
    if let Some(s) = &cfg.simulation {
        s.validate()?;
    }
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainManifest {
    version: u32,
    draws: usize,
    n: usize,
    m: usize,
    k: usize,
    p: usize,
    rho_u: usize,
    rho_v: usize,
    seed: u64,
    config: SvdModelConfig,
    acceptance: Vec<AcceptanceRate>,
    files: Vec<String>,
}

struct Group {
    file: &'static str,
    header: Vec<String>,
    row: fn(&SvdModelState) -> Vec<f64>,
}

fn names(prefix: &str, len: usize) -> Vec<String> {
    (0..len).map(|i| format!("{prefix}[{i}]")).collect()
}

fn cell_names(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..cols).flat_map(|c| (0..rows).map(move |r| format!("{prefix}[{r}][{c}]"))).collect()
}

fn groups(man: &ChainManifest) -> Vec<Group> {
    let k = man.k;
    let mut g = vec![
        Group { file: "d.csv", header: names("d", k), row: |s| s.d.clone() },
        Group { file: "noise.csv", header: vec!["sigma2".into(), "aux_a".into()], row: |s| vec![s.sigma2, s.aux_a] },
        Group { file: "u.csv", header: cell_names("u", man.n, k), row: |s| s.u.as_slice().to_vec() },
        Group { file: "v.csv", header: cell_names("v", man.m, k), row: |s| s.v.as_slice().to_vec() },
        Group {
            file: "basis_variance.csv",
            header: [names("sigma2_u", k), names("sigma2_v", k), names("aux_a_u", k), names("aux_a_v", k)].concat(),
            row: |s| [s.sigma2_u.clone(), s.sigma2_v.clone(), s.aux_a_u.clone(), s.aux_a_v.clone()].concat(),
        },
    ];
    if man.rho_u + man.rho_v > 0 {
        g.push(Group {
            file: "rho.csv",
            header: [names("rho_u", man.rho_u), names("rho_v", man.rho_v)].concat(),
            row: |s| [s.rho_u.clone(), s.rho_v.clone()].concat(),
        });
    }
    if man.p > 0 {
        g.push(Group { file: "beta.csv", header: names("beta", man.p), row: |s| s.beta.clone() });
    }
    g
}

/// Persist a chain as `manifest.json` plus one CSV per parameter group. The
/// directory appears only once every file is complete.
pub fn write_chain(chain: &PosteriorChain, dir: impl AsRef<Path>) -> Result<()> {
    let first = chain.states.first().ok_or_else(|| Error::input("cannot write an empty chain"))?;
    let mut man = ChainManifest {
        version: FORMAT_VERSION,
        draws: chain.len(),
        n: first.u.nrows(),
        m: first.v.nrows(),
        k: first.k(),
        p: first.beta.len(),
        rho_u: first.rho_u.len(),
        rho_v: first.rho_v.len(),
        seed: chain.seed,
        config: chain.config.clone(),
        acceptance: chain.acceptance.clone(),
        files: Vec::new(),
    };
    let gs = groups(&man);
    man.files = gs.iter().map(|g| g.file.to_string()).collect();
    write_dir_atomic(dir.as_ref(), |tmp| {
        for g in &gs {
            let mut out = String::from("iteration,");
            out.push_str(&g.header.join(","));
            out.push('\n');
            for (it, s) in chain.iterations.iter().zip(&chain.states) {
                out.push_str(&it.to_string());
                for x in (g.row)(s) {
                    out.push(',');
                    out.push_str(&fmt_f64(x));
                }
                out.push('\n');
            }
            let p = tmp.join(g.file);
            fs::write(&p, out).map_err(|e| Error::io(&p, e))?;
        }
        write_json(tmp.join("manifest.json"), &man)
    })
}

pub fn read_chain(dir: impl AsRef<Path>) -> Result<PosteriorChain> {
    let dir = dir.as_ref();
    let man_path = dir.join("manifest.json");
    let man: ChainManifest = read_json(&man_path)?;
    if man.version != FORMAT_VERSION {
        return Err(Error::Config(format!("{}: chain format version {} is not supported", man_path.display(), man.version)));
    }
    let (n, m, k) = (man.n, man.m, man.k);
    let mut states: Vec<SvdModelState> = (0..man.draws)
        .map(|_| SvdModelState {
            u: DMatrix::zeros(n, k),
            v: DMatrix::zeros(m, k),
            d: vec![0.0; k],
            sigma2: 0.0,
            sigma2_u: vec![0.0; k],
            sigma2_v: vec![0.0; k],
            rho_u: vec![0.0; man.rho_u],
            rho_v: vec![0.0; man.rho_v],
            beta: vec![0.0; man.p],
            aux_a: 0.0,
            aux_a_u: vec![0.0; k],
            aux_a_v: vec![0.0; k],
        })
        .collect();
    let mut iterations = Vec::new();
    for g in groups(&man) {
        let path = dir.join(g.file);
        let f = read_matrix_file(&path)?;
        let t = &f.data;
        if t.nrows() != man.draws || t.ncols() != g.header.len() + 1 {
            return Err(parse_err(&path, 1, format!(
                "expected {} rows of {} values, found {}x{}",
                man.draws,
                g.header.len() + 1,
                t.nrows(),
                t.ncols()
            )));
        }
        let its: Vec<usize> = t.column(0).iter().map(|&x| x as usize).collect();
        if iterations.is_empty() {
            iterations = its;
        } else if iterations != its {
            return Err(parse_err(&path, 1, "iteration column disagrees with other files"));
        }
        for (s, state) in states.iter_mut().enumerate() {
            let vals: Vec<f64> = t.row(s).iter().skip(1).copied().collect();
            match g.file {
                "d.csv" => state.d = vals,
                "noise.csv" => (state.sigma2, state.aux_a) = (vals[0], vals[1]),
                "u.csv" => state.u = DMatrix::from_column_slice(n, k, &vals),
                "v.csv" => state.v = DMatrix::from_column_slice(m, k, &vals),
                "basis_variance.csv" => {
                    state.sigma2_u = vals[..k].to_vec();
                    state.sigma2_v = vals[k..2 * k].to_vec();
                    state.aux_a_u = vals[2 * k..3 * k].to_vec();
                    state.aux_a_v = vals[3 * k..].to_vec();
                }
                "rho.csv" => {
                    state.rho_u = vals[..man.rho_u].to_vec();
                    state.rho_v = vals[man.rho_u..].to_vec();
                }
                "beta.csv" => state.beta = vals,
                _ => unreachable!(),
            }
        }
    }
    Ok(PosteriorChain { states, iterations, acceptance: man.acceptance, seed: man.seed, config: man.config })
}

/// Ground truth of a synthetic dataset. Matrices are stored row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub version: u32,
    pub sigma: f64,
    pub d: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SyntheticSpec>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], path: &Path) -> Result<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(parse_err(path, 1, "ragged matrix in truth file"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

pub fn write_truth(path: impl AsRef<Path>, truth: &SyntheticTruth, spec: Option<&SyntheticSpec>) -> Result<()> {
    write_json(
        path,
        &TruthFile {
            version: FORMAT_VERSION,
            sigma: truth.sigma,
            d: truth.d.clone(),
            u: rows_of(&truth.u),
            v: rows_of(&truth.v),
            beta: truth.beta.clone(),
            spec: spec.cloned(),
        },
    )
}

/// Read a truth sidecar. Data, noise and fixed effect are not stored and come
/// back as zeros; coordinates are unit-interval placeholders unless a spec is
/// present.
pub fn read_truth(path: impl AsRef<Path>) -> Result<SyntheticTruth> {
    let path = path.as_ref();
    let t: TruthFile = read_json(path)?;
    if t.version != FORMAT_VERSION {
        return Err(Error::Config(format!("{}: truth format version {} is not supported", path.display(), t.version)));
    }
    let u = from_rows(&t.u, path)?;
    let v = from_rows(&t.v, path)?;
    if u.ncols() != t.d.len() || v.ncols() != t.d.len() {
        return Err(parse_err(path, 1, "U, V and d disagree on the rank"));
    }
    let (n, m) = (u.nrows(), v.nrows());
    let (coords_u, coords_v) = match &t.spec {
        Some(s) => (s.coords_u()?, s.coords_v()?),
        None => (CoordinateSet::equally_spaced(0.0, 1.0, n)?, CoordinateSet::equally_spaced(0.0, 1.0, m)?),
    };
    Ok(SyntheticTruth {
        z: DMatrix::zeros(n, m),
        u,
        d: t.d,
        v,
        mean: DMatrix::zeros(n, m),
        sigma: t.sigma,
        beta: t.beta,
        x: None,
        eta: DMatrix::zeros(n, m),
        coords_u,
        coords_v,
    })
}

/// Long-format cell summary: `row,col,mean,sd,lower,upper`.
pub fn write_cell_summary(path: impl AsRef<Path>, cells: &CellSummary) -> Result<()> {
    let mut out = String::from("row,col,mean,sd,lower,upper\n");
    let (rows, cols) = cells.shape();
    for c in 0..cols {
        for r in 0..rows {
            out.push_str(&format!(
                "{r},{c},{},{},{},{}\n",
                fmt_f64(cells.mean[(r, c)]),
                fmt_f64(cells.sd[(r, c)]),
                fmt_f64(cells.lower[(r, c)]),
                fmt_f64(cells.upper[(r, c)])
            ));
        }
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Write a table with a header and pre-formatted rows.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::sampler::run_mcmc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.csv");
        write_matrix(&p, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn random_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(20, 5, |_, _| rng.random::<f64>() * 10f64.powi(rng.random_range(-300..300)));
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        let f = MatrixFile {
            data: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]),
            column_labels: Some(vec!["a".into(), "b".into()]),
            row_labels: Some(vec!["x".into(), "y".into()]),
        };
        write_matrix_file(&p, &f).unwrap();
        assert_eq!(read_matrix_file(&p).unwrap(), f);
    }

    #[test]
    fn ragged_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2,3\n4,5,6\n7,8\n").unwrap();
        match read_matrix(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "a,b\n1,2\n3,oops\n").unwrap();
        match read_matrix(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_parses_and_rejects() {
        let p = Path::new("cfg.json");
        let text = r#"{"version": 1,
            "model": {"k": 5, "n_iterations": 10000, "n_burnin": 5000},
            "simulation": {"n": 50, "m": 40, "d_true": [3, 2, 1], "snr": 2,
                "u_kernels": [{"family": "matern", "nu": 3.5, "rho": 3}, {"family": "identity"}, {"family": "exponential", "rho": 1}],
                "v_kernels": [{"family": "gaussian", "rho": 1}, {"family": "identity"}, {"family": "identity"}]}}"#;
        let c = parse_config(text, p).unwrap();
        let model = c.model.unwrap();
        assert_eq!((model.k, model.n_iterations), (5, 10000));
        assert_eq!(c.simulation.unwrap().snr, 2.0);

        let missing = r#"{"version": 1, "model": {"k": 5, "n_burnin": 10}}"#;
        assert!(parse_config(missing, p).unwrap_err().to_string().contains("n_iterations"));
        let unknown = r#"{"version": 1, "model": {"k": 5, "n_iterations": 10, "n_burnin": 1, "itrs": 3}}"#;
        let msg = parse_config(unknown, p).unwrap_err().to_string();
        assert!(msg.contains("itrs") && msg.contains("n_iterations"), "{msg}");
        let version = r#"{"version": 2}"#;
        assert!(matches!(parse_config(version, p), Err(Error::Config(_))));
    }

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = DMatrix::from_fn(7, 6, |_, _| rng.random::<f64>());
        let x = DMatrix::from_fn(42, 2, |_, _| rng.random::<f64>());
        let cu = CoordinateSet::equally_spaced(0.0, 1.0, 7).unwrap();
        let cv = CoordinateSet::equally_spaced(0.0, 1.0, 6).unwrap();
        let mut cfg = SvdModelConfig::new(2, 14, 4).with_kernels(KernelSpec::Matern { nu: 1.5, rho: 1.0 }, KernelSpec::Exponential { rho: 1.0 });
        cfg.grouped_rho = true;
        let chain = run_mcmc(&z, &cu, &cv, &cfg, Some(&x)).unwrap();
        assert_eq!(chain.len(), 10);
        let out = dir.path().join("chain");
        write_chain(&chain, &out).unwrap();
        assert_eq!(read_chain(&out).unwrap(), chain);
        // rewriting replaces the directory and leaves no partial files
        write_chain(&chain, &out).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec::shared_matern(8, 6, vec![2.0, 1.0], 1.0, 2.0);
        let t = crate::simulation::simulate_seeded(&spec).unwrap();
        let p = dir.path().join("truth.json");
        write_truth(&p, &t, Some(&spec)).unwrap();
        let back = read_truth(&p).unwrap();
        assert_eq!((back.u, back.v, back.d, back.sigma), (t.u, t.v, t.d, t.sigma));
        assert_eq!(back.coords_u, t.coords_u);
    }
}
