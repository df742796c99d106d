//! Python bindings. Matrices cross the boundary as lists of rows and
//! coordinates as lists of points.

use bsvd::csvd::{classical_svd, csvd_equivalence_gap};
use bsvd::diagnostics::{self, CellSummary, PosteriorSummary, Target};
use bsvd::error::Error;
use bsvd::io;
use bsvd::kernels::{correlation_matrix, CoordinateSet, KernelSpec};
use bsvd::model::SvdModelConfig;
use bsvd::sampler::{run_mcmc, PosteriorChain};
use bsvd::simulation::{simulate_seeded, SyntheticSpec, SyntheticTruth};
use bsvd::stiefel::generate_basis;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numerical { .. } | Error::Sampler { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(format!("{what} is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(format!("{what}: row {i} has {} entries, expected {m}", rows[i].len()));
    }
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    to_matrix(rows, what).map_err(PyValueError::new_err)
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn coords(points: &[Vec<f64>]) -> PyResult<CoordinateSet> {
    CoordinateSet::new(points).map_err(py_err)
}

fn parse_target(name: &str) -> PyResult<Target> {
    match name.to_ascii_lowercase().as_str() {
        "u" => Ok(Target::U),
        "v" => Ok(Target::V),
        "y" => Ok(Target::Y),
        _ => Err(PyValueError::new_err(format!("target must be 'u', 'v' or 'y', got {name:?}"))),
    }
}

/// A correlation kernel.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Kernel {
    spec: KernelSpec,
}

#[pymethods]
impl Kernel {
    #[staticmethod]
    fn matern(nu: f64, rho: f64) -> PyResult<Self> {
        Ok(Self { spec: KernelSpec::matern(nu, rho).map_err(py_err)? })
    }

    #[staticmethod]
    fn gaussian(rho: f64) -> PyResult<Self> {
        let spec = KernelSpec::Gaussian { rho };
        spec.validate().map_err(py_err)?;
        Ok(Self { spec })
    }

    #[staticmethod]
    fn exponential(rho: f64) -> PyResult<Self> {
        let spec = KernelSpec::Exponential { rho };
        spec.validate().map_err(py_err)?;
        Ok(Self { spec })
    }

    #[staticmethod]
    fn identity() -> Self {
        Self { spec: KernelSpec::Identity }
    }

    /// Correlation at distance `r`.
    fn __call__(&self, r: f64) -> f64 {
        self.spec.at_distance(r)
    }

    fn correlation(&self, points: Rows) -> PyResult<Rows> {
        Ok(to_rows(&correlation_matrix(&self.spec, &coords(&points)?).map_err(py_err)?))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?})", self.spec)
    }
}

/// Sampler settings. Any field not covered by the constructor can be set
/// through `from_json`.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct ModelConfig {
    inner: SvdModelConfig,
}

#[pymethods]
impl ModelConfig {
    #[new]
    #[pyo3(signature = (k, n_iterations, n_burnin, seed=0, u_kernel=None, v_kernel=None, estimate_rho=true, thin=1, rotation_moves=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        k: usize,
        n_iterations: usize,
        n_burnin: usize,
        seed: u64,
        u_kernel: Option<Kernel>,
        v_kernel: Option<Kernel>,
        estimate_rho: bool,
        thin: usize,
        rotation_moves: bool,
    ) -> PyResult<Self> {
        let mut c = SvdModelConfig::new(k, n_iterations, n_burnin);
        c.seed = seed;
        c.u_kernel = u_kernel.map(|k| k.spec);
        c.v_kernel = v_kernel.map(|k| k.spec);
        c.estimate_rho = estimate_rho;
        c.thin = thin;
        c.rotation_moves = rotation_moves;
        c.validate().map_err(py_err)?;
        Ok(Self { inner: c })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: SvdModelConfig = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

/// A simulated dataset and the values that generated it.
#[pyclass(frozen)]
struct Truth {
    inner: SyntheticTruth,
}

#[pymethods]
impl Truth {
    #[getter]
    fn z(&self) -> Rows {
        to_rows(&self.inner.z)
    }
    #[getter]
    fn u(&self) -> Rows {
        to_rows(&self.inner.u)
    }
    #[getter]
    fn v(&self) -> Rows {
        to_rows(&self.inner.v)
    }
    #[getter]
    fn d(&self) -> Vec<f64> {
        self.inner.d.clone()
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn beta(&self) -> Option<Vec<f64>> {
        self.inner.beta.clone()
    }
    #[getter]
    fn x(&self) -> Option<Rows> {
        self.inner.x.as_ref().map(to_rows)
    }
    #[getter]
    fn coords_u(&self) -> Rows {
        self.inner.coords_u.points()
    }
    #[getter]
    fn coords_v(&self) -> Rows {
        self.inner.coords_v.points()
    }
    /// The random effect `U D Vᵀ`.
    fn signal(&self) -> Rows {
        to_rows(&self.inner.signal())
    }
    fn save(&self, path: &str) -> PyResult<()> {
        io::write_truth(path, &self.inner, None).map_err(py_err)
    }
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: io::read_truth(path).map_err(py_err)? })
    }
}

fn cells_dict<'py>(py: Python<'py>, c: &CellSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mean", to_rows(&c.mean))?;
    d.set_item("sd", to_rows(&c.sd))?;
    d.set_item("lower", to_rows(&c.lower))?;
    d.set_item("upper", to_rows(&c.upper))?;
    Ok(d)
}

/// Posterior means, standard deviations and equal-tailed intervals.
#[pyclass(frozen)]
struct Summary {
    inner: PosteriorSummary,
}

#[pymethods]
impl Summary {
    #[getter]
    fn level(&self) -> f64 {
        self.inner.level
    }
    #[getter]
    fn draws(&self) -> usize {
        self.inner.draws
    }

    /// Cell summaries of one quantity: `u`, `v`, `y`, `a`, `d`, `sigma2`,
    /// `sigma2_u`, `sigma2_v`, `rho_u`, `rho_v` or `beta`.
    fn cells<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner;
        let c = match name {
            "u" => &s.u,
            "v" => &s.v,
            "y" => &s.y,
            "a" => &s.a,
            "d" => &s.d,
            "sigma2" => &s.sigma2,
            "sigma2_u" => &s.sigma2_u,
            "sigma2_v" => &s.sigma2_v,
            "rho_u" => &s.rho_u,
            "rho_v" => &s.rho_v,
            "beta" => &s.beta,
            _ => return Err(PyValueError::new_err(format!("unknown quantity {name:?}"))),
        };
        cells_dict(py, c)
    }

    /// Share of true cells inside their interval.
    fn coverage(&self, truth: &Truth, target: &str) -> PyResult<f64> {
        Ok(diagnostics::coverage_rate(&self.inner, &truth.inner, parse_target(target)?))
    }

    fn rmse(&self, truth: &Truth, target: &str) -> PyResult<f64> {
        Ok(diagnostics::rmse(&self.inner, &truth.inner, parse_target(target)?))
    }
}

/// Retained draws of one chain.
#[pyclass(frozen)]
struct Chain {
    inner: PosteriorChain,
}

#[pymethods]
impl Chain {
    fn __len__(&self) -> usize {
        self.inner.len()
    }
    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn config(&self) -> ModelConfig {
        ModelConfig { inner: self.inner.config.clone() }
    }

    /// One row of singular values per retained draw.
    fn d(&self) -> Rows {
        self.inner.states.iter().map(|s| s.d.clone()).collect()
    }
    fn sigma2(&self) -> Vec<f64> {
        self.inner.states.iter().map(|s| s.sigma2).collect()
    }
    fn u(&self, draw: usize) -> PyResult<Rows> {
        self.state(draw).map(|s| to_rows(&s.u))
    }
    fn v(&self, draw: usize) -> PyResult<Rows> {
        self.state(draw).map(|s| to_rows(&s.v))
    }

    fn basis_means(&self) -> PyResult<(Rows, Rows)> {
        let (u, v) = self.inner.basis_means().map_err(py_err)?;
        Ok((to_rows(&u), to_rows(&v)))
    }

    fn acceptance<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .acceptance
            .iter()
            .map(|a| {
                let d = PyDict::new(py);
                d.set_item("parameter", &a.parameter)?;
                d.set_item("accepted", a.accepted)?;
                d.set_item("attempted", a.attempted)?;
                d.set_item("proposal_sd", a.proposal_sd)?;
                Ok(d)
            })
            .collect()
    }

    #[pyo3(signature = (level=0.95))]
    fn summarize(&self, level: f64) -> PyResult<Summary> {
        Ok(Summary { inner: diagnostics::summarize(&self.inner, level).map_err(py_err)? })
    }

    /// Absolute cosine between each posterior-mean column and the matching
    /// column of the classical SVD of `z`.
    fn csvd_cosines(&self, z: Rows) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let gap = csvd_equivalence_gap(&self.inner, &matrix(&z, "z")?).map_err(py_err)?;
        Ok((gap.u, gap.v))
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        io::write_chain(&self.inner, dir).map_err(py_err)
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(Self { inner: io::read_chain(dir).map_err(py_err)? })
    }
}

impl Chain {
    fn state(&self, draw: usize) -> PyResult<&bsvd::model::SvdModelState> {
        self.inner
            .states
            .get(draw)
            .ok_or_else(|| PyValueError::new_err(format!("draw {draw} out of range (chain has {})", self.inner.len())))
    }
}

/// Simulate a dataset from a JSON design (the `simulation` section of a
/// run config).
#[pyfunction]
fn simulate(spec_json: &str) -> PyResult<Truth> {
    let spec: SyntheticSpec = serde_json::from_str(spec_json).map_err(json_err)?;
    Ok(Truth { inner: simulate_seeded(&spec).map_err(py_err)? })
}

/// Run the sampler. The GIL is released while the chain runs.
#[pyfunction]
#[pyo3(signature = (z, coords_u, coords_v, config, x=None))]
fn fit(py: Python<'_>, z: Rows, coords_u: Rows, coords_v: Rows, config: &ModelConfig, x: Option<Rows>) -> PyResult<Chain> {
    let z = matrix(&z, "z")?;
    let x = x.map(|x| matrix(&x, "x")).transpose()?;
    let (cu, cv) = (coords(&coords_u)?, coords(&coords_v)?);
    let cfg = config.inner.clone();
    let chain = py.detach(|| run_mcmc(&z, &cu, &cv, &cfg, x.as_ref())).map_err(py_err)?;
    Ok(Chain { inner: chain })
}

/// Draw one orthonormal basis over `points` with one kernel per column.
#[pyfunction]
fn random_basis(points: Rows, kernels: Vec<Kernel>, seed: u64) -> PyResult<Rows> {
    let specs: Vec<KernelSpec> = kernels.iter().map(|k| k.spec).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = generate_basis(&coords(&points)?, &specs, &mut rng).map_err(py_err)?;
    Ok(to_rows(&b.columns))
}

/// Rank-`k` classical SVD: `(u, d, v)`.
#[pyfunction]
fn svd(z: Rows, k: usize) -> PyResult<(Rows, Vec<f64>, Rows)> {
    let s = classical_svd(&matrix(&z, "z")?, k).map_err(py_err)?;
    Ok((to_rows(&s.u), s.d.clone(), to_rows(&s.v)))
}

/// `n` equally spaced one-dimensional points on `[lo, hi]`.
#[pyfunction]
fn grid(lo: f64, hi: f64, n: usize) -> PyResult<Rows> {
    Ok(CoordinateSet::equally_spaced(lo, hi, n).map_err(py_err)?.points())
}

#[pymodule]
fn pybsvd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Kernel>()?;
    m.add_class::<ModelConfig>()?;
    m.add_class::<Truth>()?;
    m.add_class::<Summary>()?;
    m.add_class::<Chain>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(random_basis, m)?)?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    Ok(())
}
