//! Seeded Euler–Maruyama simulation of the benchmark systems and snapshot
//! extraction.
//!
//! Path `i` under seed `s` draws its initial state and every increment from
//! stream `i` of the generator keyed by `s`, so datasets do not depend on the thread count.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};
use crate::metrics::PointCloud;
use crate::oracles::LinearSdeSpec;
use crate::rng::{self, Rng};
use crate::spectral::{FunctionSample, TimeGrid};

/// States with any coordinate above this magnitude count as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e9;

type Drift = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type Init = dyn Fn(&mut Rng) -> Vec<f64> + Send + Sync;
type Observe = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Serializable description of one of the built-in systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    LotkaVolterra {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        sigma: f64,
    },
    Repressilator {
        beta: f64,
        n: f64,
        k: f64,
        gamma: f64,
        sigma: f64,
    },
    Petal {
        length: f64,
        amp: f64,
        kappa: f64,
        sigma_z: f64,
        speed: f64,
        branches: u32,
        sigma_init: f64,
    },
    LinearSde {
        drift_coeff: f64,
        diffusion: f64,
        dim: usize,
        init_mean: f64,
        init_var: f64,
    },
}

impl SystemSpec {
    pub fn lotka_volterra() -> Self {
        SystemSpec::LotkaVolterra {
            alpha: 1.0,
            beta: 0.4,
            gamma: 0.1,
            delta: 0.4,
            sigma: 0.1,
        }
    }

    pub fn repressilator() -> Self {
        SystemSpec::Repressilator {
            beta: 10.0,
            n: 3.0,
            k: 1.0,
            gamma: 1.0,
            sigma: 0.1,
        }
    }

    pub fn petal() -> Self {
        SystemSpec::Petal {
            length: 1.0,
            amp: 0.25,
            kappa: 0.5,
            sigma_z: 0.04,
            speed: 0.2,
            branches: 8,
            sigma_init: 0.1,
        }
    }

    pub fn linear_sde(spec: LinearSdeSpec) -> Self {
        SystemSpec::LinearSde {
            drift_coeff: spec.drift_coeff,
            diffusion: spec.diffusion,
            dim: spec.dim,
            init_mean: spec.init_mean,
            init_var: spec.init_var,
        }
    }

    /// Looks up a system by its kebab-case name with default parameters.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "lotka-volterra" => Some(Self::lotka_volterra()),
            "repressilator" => Some(Self::repressilator()),
            "petal" => Some(Self::petal()),
            "linear-sde" => Some(Self::linear_sde(LinearSdeSpec {
                drift_coeff: 0.01,
                diffusion: 0.75,
                dim: 1,
                init_mean: 2.0,
                init_var: 0.2,
            })),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::LotkaVolterra { .. } => "lotka-volterra",
            SystemSpec::Repressilator { .. } => "repressilator",
            SystemSpec::Petal { .. } => "petal",
            SystemSpec::LinearSde { .. } => "linear-sde",
        }
    }

    /// Default `(horizon, dt)`.
    pub fn default_time(&self) -> (f64, f64) {
        match self {
            SystemSpec::LotkaVolterra { .. } => (8.0, 0.02),
            SystemSpec::Repressilator { .. } => (7.5, 0.01),
            SystemSpec::Petal { .. } => (4.0, 0.04),
            SystemSpec::LinearSde { .. } => (1.0, 0.01),
        }
    }

    /// Copy with all noise (diffusion, not initial spread) switched off.
    pub fn deterministic(&self) -> Self {
        let mut s = *self;
        match &mut s {
            SystemSpec::LotkaVolterra { sigma, .. } | SystemSpec::Repressilator { sigma, .. } => *sigma = 0.0,
            SystemSpec::Petal { sigma_z, .. } => *sigma_z = 0.0,
            SystemSpec::LinearSde { diffusion, .. } => *diffusion = 0.0,
        }
        s
    }

    pub fn build(&self) -> Result<SdeSystem> {
        let sys = match *self {
            SystemSpec::LotkaVolterra { alpha, beta, gamma, delta, sigma } => lotka_volterra_system(alpha, beta, gamma, delta, sigma),
            SystemSpec::Repressilator { beta, n, k, gamma, sigma } => repressilator_system(beta, n, k, gamma, sigma),
            SystemSpec::Petal { length, amp, kappa, sigma_z, speed, branches, sigma_init } => {
                petal_system(PetalParams { length, amp, kappa, sigma_z, speed, branches, sigma_init })?
            }
            SystemSpec::LinearSde { drift_coeff, diffusion, dim, init_mean, init_var } => {
                if dim == 0 || !(init_var >= 0.0) || !(diffusion >= 0.0) {
                    return Err(FklError::InvalidParameter("linear SDE needs dim >= 1 and nonnegative variances".into()));
                }
                linear_sde_system(drift_coeff, diffusion, dim, init_mean, init_var)
            }
        };
        Ok(sys.with_spec(*self))
    }
}

/// Drift, per-dimension diffusion, initial law and optional observation map.
#[derive(Clone)]
pub struct SdeSystem {
    name: String,
    spec: Option<SystemSpec>,
    state_dim: usize,
    diffusion: Vec<f64>,
    drift: Arc<Drift>,
    init: Arc<Init>,
    observe: Option<(usize, Arc<Observe>)>,
}

impl std::fmt::Debug for SdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSystem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("diffusion", &self.diffusion)
            .finish_non_exhaustive()
    }
}

impl SdeSystem {
    pub fn new(
        name: impl Into<String>,
        diffusion: Vec<f64>,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        init: impl Fn(&mut Rng) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            spec: None,
            state_dim: diffusion.len(),
            diffusion,
            drift: Arc::new(drift),
            init: Arc::new(init),
            observe: None,
        }
    }

    fn with_spec(mut self, spec: SystemSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    /// Records `observe(state)` (of length `out_dim`) instead of the state.
    pub fn with_observation(mut self, out_dim: usize, observe: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.observe = Some((out_dim, Arc::new(observe)));
        self
    }

    /// Every path starts at `y0`.
    pub fn with_fixed_init(mut self, y0: Vec<f64>) -> Self {
        assert_eq!(y0.len(), self.state_dim, "initial state dimension");
        self.init = Arc::new(move |_| y0.clone());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> Option<&SystemSpec> {
        self.spec.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Dimension of recorded paths.
    pub fn out_dim(&self) -> usize {
        self.observe.as_ref().map_or(self.state_dim, |(d, _)| *d)
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    pub fn drift(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        (self.drift)(t, y, &mut out);
        out
    }

    pub fn observe(&self, y: &[f64]) -> Vec<f64> {
        match &self.observe {
            Some((_, f)) => f(y),
            None => y.to_vec(),
        }
    }
}

pub fn lotka_volterra_system(alpha: f64, beta: f64, gamma: f64, delta: f64, sigma: f64) -> SdeSystem {
    SdeSystem::new(
        "lotka-volterra",
        vec![sigma; 2],
        move |_, y, out| {
            let (x, p) = (y[0], y[1]);
            out[0] = alpha * x - beta * x * p;
            out[1] = gamma * x * p - delta * p;
        },
        |rng| vec![5.0 + 0.1 * rng.random::<f64>(), 4.0 + 0.1 * rng.random::<f64>()],
    )
}

/// Three-gene ring; gene `i` is repressed by gene `i − 1` (cyclically).
pub fn repressilator_system(beta: f64, n: f64, k: f64, gamma: f64, sigma: f64) -> SdeSystem {
    SdeSystem::new(
        "repressilator",
        vec![sigma; 3],
        move |_, y, out| {
            for i in 0..3 {
                let prev = y[(i + 2) % 3];
                // negative excursions from noise are treated as zero concentration
                let hill = (prev.max(0.0) / k).powf(n);
                out[i] = beta / (1.0 + hill) - gamma * y[i];
            }
        },
        |rng| {
            vec![
                1.0 + 0.1 * rng.random::<f64>(),
                1.0 + 0.1 * rng.random::<f64>(),
                2.0 + 0.1 * rng.random::<f64>(),
            ]
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PetalParams {
    pub length: f64,
    pub amp: f64,
    pub kappa: f64,
    pub sigma_z: f64,
    pub speed: f64,
    pub branches: u32,
    pub sigma_init: f64,
}

/// Planar position on branch `branch` at arclength-like coordinate `u` and
/// transverse offset `z`: the rotated spine `(u, amp·sin(2πu/L))` moved by
/// `z` along its unit normal.
pub fn petal_map(p: &PetalParams, branch: u32, u: f64, z: f64) -> [f64; 2] {
    let w = 2.0 * PI / p.length;
    let spine = [u, p.amp * (w * u).sin()];
    let slope = p.amp * w * (w * u).cos();
    let norm = (1.0 + slope * slope).sqrt();
    let normal = [-slope / norm, 1.0 / norm];
    let local = [spine[0] + z * normal[0], spine[1] + z * normal[1]];
    let angle = 2.0 * PI * f64::from(branch) / f64::from(p.branches);
    let (s, c) = angle.sin_cos();
    [c * local[0] - s * local[1], s * local[0] + c * local[1]]
}

/// State `[u, z, branch]`; the branch is fixed at initialization.
pub fn petal_system(p: PetalParams) -> Result<SdeSystem> {
    if p.branches == 0 {
        return Err(FklError::InvalidParameter("petal needs at least one branch".into()));
    }
    let (speed, kappa, sigma_init, branches) = (p.speed, p.kappa, p.sigma_init, p.branches);
    Ok(SdeSystem::new(
        "petal",
        vec![0.0, p.sigma_z, 0.0],
        move |_, y, out| {
            out[0] = speed;
            out[1] = -kappa * y[1];
            out[2] = 0.0;
        },
        move |rng| {
            let z: f64 = rng.sample(StandardNormal);
            let branch = rng.random_range(0..branches);
            vec![0.0, sigma_init * z, f64::from(branch)]
        },
    )
    .with_observation(2, move |y| petal_map(&p, y[2] as u32, y[0], y[1]).to_vec()))
}

/// `dY = c Y dt + g dW` on `R^D`, `Y_0 ~ N(m0·1, var0·I)`.
pub fn linear_sde_system(c: f64, g: f64, dim: usize, m0: f64, var0: f64) -> SdeSystem {
    let sd0 = var0.sqrt();
    SdeSystem::new(
        "linear-sde",
        vec![g; dim],
        move |_, y, out| {
            for (o, v) in out.iter_mut().zip(y) {
                *o = c * v;
            }
        },
        move |rng| (0..dim).map(|_| m0 + sd0 * rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Number of steps `T / dt`, which must be an integer up to rounding.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.n_paths == 0 {
            return Err(FklError::InvalidParameter("need dt > 0, horizon > 0 and at least one path".into()));
        }
        let ratio = self.horizon / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * n.max(1.0) || n < 1.0 {
            return Err(FklError::InvalidParameter(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: String,
    pub spec: Option<SystemSpec>,
    pub config: Option<SimConfig>,
    pub generator: String,
    pub version: String,
}

impl Provenance {
    pub fn imported(label: &str) -> Self {
        Self {
            system: label.to_string(),
            spec: None,
            config: None,
            generator: "imported".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Paths stored row-major as `(path, time, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    grid: TimeGrid,
    n_paths: usize,
    dim: usize,
    values: Vec<f64>,
    provenance: Provenance,
}

impl TrajectoryDataset {
    pub fn new(grid: TimeGrid, n_paths: usize, dim: usize, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if n_paths == 0 || dim == 0 || values.len() != n_paths * grid.m_points() * dim {
            return Err(FklError::Shape(format!(
                "{} values do not fill {n_paths} x {} x {dim}",
                values.len(),
                grid.m_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FklError::InvalidParameter("trajectory values must be finite".into()));
        }
        Ok(Self { grid, n_paths, dim, values, provenance })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn m_points(&self) -> usize {
        self.grid.m_points()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_paths, self.grid.m_points(), self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let len = self.grid.m_points() * self.dim;
        &self.values[i * len..(i + 1) * len]
    }

    pub fn value(&self, path: usize, j: usize, d: usize) -> f64 {
        self.path(path)[j * self.dim + d]
    }

    /// Positions of paths `range` at grid index `j`.
    pub fn cloud_at(&self, j: usize, paths: impl IntoIterator<Item = usize>) -> Result<PointCloud> {
        let pts = paths
            .into_iter()
            .flat_map(|i| self.path(i)[j * self.dim..(j + 1) * self.dim].to_vec())
            .collect();
        PointCloud::new(self.dim, pts)
    }

    pub fn function_sample(&self, i: usize) -> FunctionSample {
        FunctionSample::new(self.grid, self.dim, self.path(i).to_vec()).expect("dataset values are validated")
    }

    pub fn function_samples(&self) -> Vec<FunctionSample> {
        (0..self.n_paths).map(|i| self.function_sample(i)).collect()
    }

    /// Paths `range` as a new dataset.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n_paths || range.is_empty() {
            return Err(FklError::InvalidParameter(format!("path range {range:?} out of 0..{}", self.n_paths)));
        }
        let len = self.grid.m_points() * self.dim;
        Self::new(
            self.grid,
            range.len(),
            self.dim,
            self.values[range.start * len..range.end * len].to_vec(),
            self.provenance.clone(),
        )
    }
}

fn simulate(system: &SdeSystem, cfg: &SimConfig, observed: bool) -> Result<TrajectoryDataset> {
    let n_steps = cfg.n_steps()?;
    let m_points = n_steps + 1;
    let grid = TimeGrid::new(m_points, cfg.horizon)?;
    let state_dim = system.state_dim;
    let out_dim = if observed { system.out_dim() } else { state_dim };
    let sqrt_dt = cfg.dt.sqrt();
    let paths: Vec<Result<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = rng::stream(cfg.seed, path as u64);
            let mut y = (system.init)(&mut rng);
            if y.len() != state_dim {
                return Err(FklError::Shape("initial sampler returned the wrong dimension".into()));
            }
            let mut f = vec![0.0; state_dim];
            let mut out = Vec::with_capacity(m_points * out_dim);
            let record = |y: &[f64], out: &mut Vec<f64>| {
                if observed {
                    out.extend(system.observe(y));
                } else {
                    out.extend_from_slice(y);
                }
            };
            record(&y, &mut out);
            for step in 0..n_steps {
                let t = step as f64 * cfg.dt;
                (system.drift)(t, &y, &mut f);
                for d in 0..state_dim {
                    let xi: f64 = rng.sample(StandardNormal);
                    y[d] += f[d] * cfg.dt + system.diffusion[d] * sqrt_dt * xi;
                }
                if y.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
                    return Err(FklError::Divergence { path, step: step + 1 });
                }
                record(&y, &mut out);
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity(cfg.n_paths * m_points * out_dim);
    for p in paths {
        values.extend(p?);
    }
    let provenance = Provenance {
        system: system.name.clone(),
        spec: system.spec,
        config: Some(*cfg),
        generator: "chacha8; path i uses stream i of the seed".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    TrajectoryDataset::new(grid, cfg.n_paths, out_dim, values, provenance)
}

/// `y_{j+1} = y_j + b(t_j, y_j) dt + σ √dt ξ_j`, recording observed paths.
pub fn euler_maruyama(system: &SdeSystem, cfg: &SimConfig) -> Result<TrajectoryDataset> {
    simulate(system, cfg, true)
}

/// Same as [`euler_maruyama`] but records the raw state.
pub fn euler_maruyama_latent(system: &SdeSystem, cfg: &SimConfig) -> Result<TrajectoryDataset> {
    simulate(system, cfg, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SplitRule {
    /// Snapshots 1, 3, 5, ... (counting from one) train; the rest validate.
    OddTrainEvenVal,
    /// Every time is used for both; paths are split in half so the two
    /// clouds are disjoint.
    AllSharedResample,
    /// Positions (into the requested time list) used for training.
    Explicit { train: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Rescaled time in `[0, 1]`.
    pub tau: f64,
    pub grid_index: usize,
    pub split: Split,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn with_split(&self, split: Split) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().filter(move |s| s.split == split)
    }

    pub fn at(&self, tau: f64, split: Split) -> Option<&Snapshot> {
        self.with_split(split).find(|s| (s.tau - tau).abs() < 1e-12)
    }
}

/// Clouds of all paths at rescaled times `times`, labelled by `rule`.
pub fn extract_snapshots(ds: &TrajectoryDataset, times: &[f64], rule: &SplitRule) -> Result<SnapshotSet> {
    let indices = times
        .iter()
        .map(|&tau| ds.grid.index_of(tau).ok_or(FklError::OffGrid(tau)))
        .collect::<Result<Vec<_>>>()?;
    let mut snapshots = Vec::new();
    for (pos, &j) in indices.iter().enumerate() {
        let tau_grid = ds.grid.location(j);
        match rule {
            SplitRule::OddTrainEvenVal | SplitRule::Explicit { .. } => {
                let train = match rule {
                    SplitRule::Explicit { train } => train.contains(&pos),
                    _ => pos % 2 == 0,
                };
                snapshots.push(Snapshot {
                    tau: tau_grid,
                    grid_index: j,
                    split: if train { Split::Train } else { Split::Validation },
                    cloud: ds.cloud_at(j, 0..ds.n_paths)?,
                });
            }
            SplitRule::AllSharedResample => {
                if ds.n_paths < 2 {
                    return Err(FklError::InvalidParameter("resampled split needs at least two paths".into()));
                }
                let half = ds.n_paths / 2;
                snapshots.push(Snapshot { tau: tau_grid, grid_index: j, split: Split::Train, cloud: ds.cloud_at(j, 0..half)? });
                snapshots.push(Snapshot {
                    tau: tau_grid,
                    grid_index: j,
                    split: Split::Validation,
                    cloud: ds.cloud_at(j, half..ds.n_paths)?,
                });
            }
        }
    }
    Ok(SnapshotSet { snapshots })
}

/// `n` equispaced rescaled times including both endpoints.
pub fn equispaced_times(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
