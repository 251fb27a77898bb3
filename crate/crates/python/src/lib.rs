//! Python module `fkl`: oracles, simulators, divergence estimation and
//! snapshot metrics. Point clouds are lists of equal-length float lists.

use std::path::PathBuf;

use fkl_cli::pipeline::{
    build_from_pools, build_gaussian, dataset_coeffs, shuffle_pool, Backend, GaussianCase, NoiseSpec, PairSetup, SDE_INIT_MEAN,
    SDE_INIT_VAR,
};
use fkl_core::fkl::{FklConfig, FklEstimate, TimeSampler};
use fkl_core::io::{read_trajectory_file, write_trajectory_file};
use fkl_core::metrics::{self, MetricSettings, PointCloud};
use fkl_core::oracles::{self, LinearSdeSpec};
use fkl_core::sde::{euler_maruyama, SimConfig, SystemSpec, TrajectoryDataset};
use fkl_core::spectral::Extension;
use fkl_core::velocity::TrainConfig;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(format!("{e:#}"))
}

fn cloud(rows: Vec<Vec<f64>>) -> PyResult<PointCloud> {
    PointCloud::from_rows(&rows).map_err(err)
}

fn rows(c: &PointCloud) -> Vec<Vec<f64>> {
    c.iter().map(<[f64]>::to_vec).collect()
}

/// Simulated or imported trajectories, shape `(paths, times, dim)`.
#[pyclass(frozen, module = "fkl")]
struct Trajectories {
    inner: TrajectoryDataset,
}

#[pymethods]
impl Trajectories {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: read_trajectory_file(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_trajectory_file(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let [n, m, d] = self.inner.shape();
        (n, m, d)
    }

    /// Rescaled grid times in `[0, 1]`.
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.grid().locations()
    }

    #[getter]
    fn physical_horizon(&self) -> f64 {
        self.inner.grid().physical_horizon()
    }

    /// Row-major values of shape `(paths, times, dim)`.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// One path as a list of `times` rows.
    fn path(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        if i >= self.inner.n_paths() {
            return Err(PyValueError::new_err(format!("path {i} out of range")));
        }
        Ok(self.inner.path(i).chunks(self.inner.dim()).map(<[f64]>::to_vec).collect())
    }

    /// Points of all paths at the grid time nearest to `tau`.
    fn cloud_at(&self, tau: f64) -> PyResult<Vec<Vec<f64>>> {
        let j = self.inner.grid().index_of(tau).ok_or_else(|| PyValueError::new_err(format!("time {tau} outside [0, 1]")))?;
        Ok(rows(&self.inner.cloud_at(j, 0..self.inner.n_paths()).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        let [n, m, d] = self.inner.shape();
        format!("Trajectories(system={:?}, shape=({n}, {m}, {d}))", self.inner.provenance().system)
    }
}

/// Simulates a built-in system: lotka-volterra, repressilator, petal or linear-sde.
#[pyfunction]
#[pyo3(signature = (system, n_paths=100, seed=0, horizon=None, dt=None, drift_coeff=None, diffusion=None, dim=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    system: &str,
    n_paths: usize,
    seed: u64,
    horizon: Option<f64>,
    dt: Option<f64>,
    drift_coeff: Option<f64>,
    diffusion: Option<f64>,
    dim: Option<usize>,
) -> PyResult<Trajectories> {
    let mut spec = SystemSpec::by_name(system).ok_or_else(|| PyValueError::new_err(format!("unknown system {system:?}")))?;
    if let SystemSpec::LinearSde { drift_coeff: c, diffusion: g, dim: d, .. } = &mut spec {
        *c = drift_coeff.unwrap_or(*c);
        *g = diffusion.unwrap_or(*g);
        *d = dim.unwrap_or(*d);
    } else if drift_coeff.is_some() || diffusion.is_some() || dim.is_some() {
        return Err(PyValueError::new_err("drift_coeff, diffusion and dim apply to linear-sde only"));
    }
    let (h0, dt0) = spec.default_time();
    let cfg = SimConfig { horizon: horizon.unwrap_or(h0), dt: dt.unwrap_or(dt0), n_paths, seed };
    let inner = euler_maruyama(&spec.build().map_err(err)?, &cfg).map_err(err)?;
    Ok(Trajectories { inner })
}

/// Closed-form `(KL(A‖B), KL(B‖A))` for linear SDEs differing in drift.
#[pyfunction]
#[pyo3(signature = (ca=0.01, cb=1.5, g=0.75, d=1, m0=SDE_INIT_MEAN, var0=SDE_INIT_VAR))]
fn oracle_linear_sde(ca: f64, cb: f64, g: f64, d: usize, m0: f64, var0: f64) -> PyResult<(f64, f64)> {
    let base = LinearSdeSpec { drift_coeff: ca, diffusion: g, dim: d, init_mean: m0, init_var: var0 };
    oracles::linear_sde_kl_pair(&base, ca, cb).map_err(err)
}

/// Simpson quadrature of the same divergence, `KL` under drift `c` against `c_other`.
#[pyfunction]
#[pyo3(signature = (c, c_other, g=0.75, d=1, m0=SDE_INIT_MEAN, var0=SDE_INIT_VAR, n_nodes=10_001))]
fn linear_sde_quadrature(c: f64, c_other: f64, g: f64, d: usize, m0: f64, var0: f64, n_nodes: usize) -> PyResult<f64> {
    let spec = LinearSdeSpec { drift_coeff: c, diffusion: g, dim: d, init_mean: m0, init_var: var0 };
    oracles::linear_sde_kl_quadrature(&spec, c_other, n_nodes).map_err(err)
}

fn gaussian_case(mean_scale: f64, freq: usize, dims: usize, n_modes: usize) -> GaussianCase {
    GaussianCase { s: mean_scale, f0: freq, dims, n_modes, ..GaussianCase::default() }
}

/// KL between Gaussian measures whose means differ by `s·sin(2π f x)` per dimension.
#[pyfunction]
#[pyo3(signature = (mean_scale=0.5, freq=1, dims=1, n_modes=16))]
fn oracle_gaussian(mean_scale: f64, freq: usize, dims: usize, n_modes: usize) -> PyResult<f64> {
    gaussian_case(mean_scale, freq, dims, n_modes).oracle().map_err(err)
}

/// `∫ t/(1−t) |v_A − v_B|²/κ dt` for one real mode by adaptive quadrature.
#[pyfunction]
#[pyo3(signature = (m, c, kappa, tol=1e-10))]
fn single_mode_fkl(m: f64, c: f64, kappa: f64, tol: f64) -> f64 {
    oracles::single_mode_fkl_integral(m, c, kappa, tol)
}

fn estimate_dict<'py>(py: Python<'py>, e: &FklEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", e.value)?;
    d.set_item("std_error", e.std_error)?;
    d.set_item("n_evals", e.n_evals)?;
    d.set_item("n_sum_modes", e.n_sum_modes)?;
    d.set_item("seed", e.seed)?;
    Ok(d)
}

fn parse_backend(name: &str) -> PyResult<Backend> {
    match name {
        "analytic" => Ok(Backend::Analytic),
        "softmax" => Ok(Backend::Softmax),
        "trained" => Ok(Backend::Trained),
        _ => Err(PyValueError::new_err(format!("unknown backend {name:?}"))),
    }
}

fn setup(backend: &str, noise: &str, fkl: FklConfig, split: bool, iterations: usize) -> PyResult<PairSetup> {
    Ok(PairSetup {
        backend: parse_backend(backend)?,
        noise: NoiseSpec::from_name(noise).map_err(err)?,
        fkl,
        split,
        train: TrainConfig { iterations, seed: fkl.seed, ..TrainConfig::default() },
        network: None,
    })
}

/// Estimates both directions between two trajectory sets. Returns a dict
/// with `forward` and `reverse` entries.
#[pyfunction]
#[pyo3(signature = (a, b, backend="trained", noise="empirical", n_modes=8, n_samples=500, n_time=100, seed=0, iterations=2000, split=true, t_max=None))]
#[allow(clippy::too_many_arguments)]
fn estimate_fkl<'py>(
    py: Python<'py>,
    a: &Trajectories,
    b: &Trajectories,
    backend: &str,
    noise: &str,
    n_modes: usize,
    n_samples: usize,
    n_time: usize,
    seed: u64,
    iterations: usize,
    split: bool,
    t_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let sampler = t_max.map_or_else(TimeSampler::default, |t| TimeSampler::default().with_t_max(t));
    let cfg = FklConfig { n_function_samples: n_samples, n_time_per_function: n_time, n_sum_modes: n_modes, sampler, seed };
    let setup = setup(backend, noise, cfg, split, iterations)?;
    let (fwd, rev) = py
        .detach(|| -> anyhow::Result<_> {
            let mut pa = dataset_coeffs(&a.inner, n_modes, Extension::Mirror)?;
            let mut pb = dataset_coeffs(&b.inner, n_modes, Extension::Mirror)?;
            shuffle_pool(&mut pa, seed, "a");
            shuffle_pool(&mut pb, seed, "b");
            let pair = build_from_pools(&pa, &pb, &setup)?;
            pair.estimate(&cfg)
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("forward", estimate_dict(py, &fwd)?)?;
    out.set_item("reverse", estimate_dict(py, &rev)?)?;
    Ok(out)
}

/// Gaussian sine-shift case: estimate with the chosen backend next to the oracle.
#[pyfunction]
#[pyo3(signature = (mean_scale=0.5, freq=1, dims=1, n_modes=8, backend="analytic", noise="empirical", pool_size=2000, n_samples=2000, n_time=50, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate_fkl_gaussian<'py>(
    py: Python<'py>,
    mean_scale: f64,
    freq: usize,
    dims: usize,
    n_modes: usize,
    backend: &str,
    noise: &str,
    pool_size: usize,
    n_samples: usize,
    n_time: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let case = gaussian_case(mean_scale, freq, dims, n_modes);
    let cfg = FklConfig { n_function_samples: n_samples, n_time_per_function: n_time, n_sum_modes: n_modes, sampler: TimeSampler::default(), seed };
    let setup = setup(backend, noise, cfg, false, 2000)?;
    let (oracle, (fwd, rev)) = py
        .detach(|| -> anyhow::Result<_> { Ok((case.oracle()?, build_gaussian(&case, pool_size, &setup)?.estimate(&cfg)?)) })
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("oracle", oracle)?;
    out.set_item("forward", estimate_dict(py, &fwd)?)?;
    out.set_item("reverse", estimate_dict(py, &rev)?)?;
    Ok(out)
}

/// Exact `W_p` between two point clouds.
#[pyfunction]
#[pyo3(signature = (p, q, order=1))]
fn wasserstein(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, order: u32) -> PyResult<f64> {
    metrics::wasserstein(&cloud(p)?, &cloud(q)?, order).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (p, q, order=2, n_projections=128, seed=0))]
fn sliced_wasserstein(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, order: u32, n_projections: usize, seed: u64) -> PyResult<f64> {
    metrics::sliced_wasserstein(&cloud(p)?, &cloud(q)?, order, n_projections, seed).map_err(err)
}

/// RBF-kernel MMD, unbiased and clipped at zero.
#[pyfunction]
#[pyo3(signature = (p, q, bandwidth=1.0))]
fn mmd(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, bandwidth: f64) -> PyResult<f64> {
    metrics::mmd_rbf(&cloud(p)?, &cloud(q)?, bandwidth).map_err(err)
}

/// All five snapshot metrics under the default settings.
#[pyfunction]
#[pyo3(signature = (p, q, seed=0))]
fn compute_metrics<'py>(py: Python<'py>, p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let settings = MetricSettings { seed, ..MetricSettings::default() };
    let v = metrics::compute_metrics(&cloud(p)?, &cloud(q)?, &settings).map_err(err)?;
    let d = PyDict::new(py);
    for (name, value) in metrics::MetricValues::NAMES.iter().zip(v.as_array()) {
        d.set_item(*name, value)?;
    }
    Ok(d)
}

/// Average ranks (methods × tasks table) and the Friedman statistic.
#[pyfunction]
#[pyo3(signature = (scores, lower_is_better=true))]
fn rank_methods(scores: Vec<Vec<f64>>, lower_is_better: bool) -> PyResult<(Vec<f64>, f64)> {
    let s = metrics::rank_methods(&scores, lower_is_better).map_err(err)?;
    Ok((s.avg_ranks, s.friedman_statistic))
}

#[pymodule]
fn fkl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Trajectories>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_linear_sde, m)?)?;
    m.add_function(wrap_pyfunction!(linear_sde_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(single_mode_fkl, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fkl, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fkl_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(sliced_wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(mmd, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(rank_methods, m)?)?;
    Ok(())
}
