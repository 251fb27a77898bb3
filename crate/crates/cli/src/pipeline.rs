//! Field construction and paired (forward and reverse) divergence estimation
//! shared by the subcommands and the test suites.

use anyhow::{bail, ensure, Context, Result};
use fkl_core::fkl::{estimate_fkl, FklConfig, FklEstimate, FunctionSource, PoolSource, TimeSampler};
use fkl_core::measures::{matern_covariance, roughened_empirical_covariance, DiagonalCovariance, GaussianMeasure, RoughenConfig};
use fkl_core::oracles::{gaussian_mean_shift_kl, linear_sde_kl_pair, linear_sde_kl_quadrature, LinearSdeSpec};
use fkl_core::sde::{euler_maruyama, SimConfig, SystemSpec, TrajectoryDataset};
use fkl_core::spectral::{to_spectral_with, Extension, SpectralCoeffs};
use fkl_core::velocity::{
    train_field, EmpiricalSoftmaxField, GaussianVelocityField, TrainConfig, TrainedField, TrainedNetwork, VelocityField,
};
use fkl_core::{rng, Complex64};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Velocity-field realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Closed-form Gaussian field; needs the generating measures.
    Analytic,
    /// Exact posterior-mean field of an empirical sample pool. Reliable only
    /// when the two measures overlap well: far from its atoms the posterior
    /// collapses onto one of them.
    Softmax,
    /// Spectral network trained by conditional flow matching.
    #[default]
    Trained,
}

/// Covariance of the reference noise measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    Matern { sigma2: f64, tau: f64, alpha: f64 },
    /// White noise, `λ ≡ 1`; not trace class.
    Identity,
    /// Per-mode sample variance of the reference pool.
    Empirical {
        #[serde(default = "default_floor")]
        floor_eps: f64,
    },
    /// Empirical variance multiplied by `max(k, 1)^exponent`.
    Roughened {
        #[serde(default = "default_floor")]
        floor_eps: f64,
        #[serde(default = "default_exponent")]
        exponent: u32,
    },
}

fn default_floor() -> f64 {
    1e-8
}

fn default_exponent() -> u32 {
    2
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Empirical { floor_eps: default_floor() }
    }
}

impl NoiseSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "matern" => NoiseSpec::Matern { sigma2: 1.0, tau: 1.0, alpha: 0.75 },
            "identity" => NoiseSpec::Identity,
            "empirical" => NoiseSpec::default(),
            "roughened" => NoiseSpec::Roughened { floor_eps: default_floor(), exponent: default_exponent() },
            other => bail!("unknown noise `{other}` (expected matern, identity, empirical or roughened)"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::Matern { .. } => "matern",
            NoiseSpec::Identity => "identity",
            NoiseSpec::Empirical { .. } => "empirical",
            NoiseSpec::Roughened { .. } => "roughened",
        }
    }

    /// Builds the covariance; the empirical kinds read `reference`.
    pub fn build(&self, n_modes: usize, out_dim: usize, reference: &[SpectralCoeffs]) -> Result<DiagonalCovariance> {
        Ok(match *self {
            NoiseSpec::Matern { sigma2, tau, alpha } => matern_covariance(sigma2, tau, alpha, n_modes, out_dim)?,
            NoiseSpec::Identity => DiagonalCovariance::identity(n_modes, out_dim)?,
            NoiseSpec::Empirical { floor_eps } => {
                roughened_empirical_covariance(reference, RoughenConfig { floor_eps, exponent: 0 })?
            }
            NoiseSpec::Roughened { floor_eps, exponent } => {
                roughened_empirical_covariance(reference, RoughenConfig { floor_eps, exponent })?
            }
        })
    }
}

/// `ν_A = N(m, C)` with `m_d(x) = s·sin(2π f₀ x)` in every output dimension
/// and `ν_B = N(0, C)`, `C` an operator-form Matérn covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianCase {
    pub dims: usize,
    pub f0: usize,
    pub s: f64,
    pub sigma2: f64,
    pub tau: f64,
    pub alpha: f64,
    pub n_modes: usize,
}

impl Default for GaussianCase {
    fn default() -> Self {
        Self {
            dims: 1,
            f0: 1,
            s: 0.5,
            sigma2: 1.0,
            tau: 1.0,
            alpha: 1.0,
            n_modes: 16,
        }
    }
}

impl GaussianCase {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.dims >= 1, "gaussian case needs at least one dimension");
        ensure!(self.f0 < self.n_modes, "frequency {} needs more than {} modes", self.f0, self.n_modes);
        ensure!(self.s.is_finite(), "mean scale must be finite");
        Ok(())
    }

    pub fn mean(&self) -> Result<SpectralCoeffs> {
        self.validate()?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.n_modes * self.dims];
        for d in 0..self.dims {
            // sin(2π f₀ x) carries −i/2 at k = f₀; f₀ = 0 is the zero function
            if self.f0 > 0 {
                coeffs[self.f0 * self.dims + d] = Complex64::new(0.0, -0.5 * self.s);
            }
        }
        Ok(SpectralCoeffs::new(self.n_modes, self.dims, coeffs)?)
    }

    pub fn data_cov(&self) -> Result<DiagonalCovariance> {
        Ok(matern_covariance(self.sigma2, self.tau, self.alpha, self.n_modes, self.dims)?)
    }

    pub fn measures(&self) -> Result<(GaussianMeasure, GaussianMeasure)> {
        let cov = self.data_cov()?;
        Ok((GaussianMeasure::new(self.mean()?, cov.clone())?, GaussianMeasure::centered(cov)))
    }

    /// Closed-form divergence; symmetric in the two measures.
    pub fn oracle(&self) -> Result<f64> {
        Ok(gaussian_mean_shift_kl(&self.mean()?, &self.data_cov()?)?)
    }
}

/// Everything needed to turn two sample pools into a divergence pair.
#[derive(Debug, Clone)]
pub struct PairSetup {
    pub backend: Backend,
    pub noise: NoiseSpec,
    pub fkl: FklConfig,
    /// Hold out half of each pool for the estimator's `x₁` draws.
    pub split: bool,
    pub train: TrainConfig,
    /// Skip training and use this network.
    pub network: Option<Arc<TrainedNetwork>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOutcome {
    pub backend: Backend,
    pub noise: String,
    pub split: bool,
    pub forward: FklEstimate,
    pub reverse: FklEstimate,
    pub training: Option<TrainingSummary>,
    #[serde(skip)]
    pub network: Option<Arc<TrainedNetwork>>,
}

/// Spectral coefficients of every path in `ds`.
pub fn dataset_coeffs(ds: &TrajectoryDataset, n_modes: usize, extension: Extension) -> Result<Vec<SpectralCoeffs>> {
    ds.function_samples()
        .iter()
        .map(|f| to_spectral_with(f, n_modes, extension).map_err(Into::into))
        .collect()
}

/// The four pools `(field A, field B, estimation A, estimation B)`.
/// Puts a pool in a seeded order specific to its slot, so that pool
/// splitting draws different halves for `A` and `B` even when both slots
/// hold the same file.
pub fn shuffle_pool(pool: &mut [SpectralCoeffs], seed: u64, slot: &str) {
    use rand::seq::SliceRandom;
    pool.shuffle(&mut rng::seeded(rng::derive(seed, &format!("order-{slot}"))));
}

fn split_pools<'a>(
    a: &'a [SpectralCoeffs],
    b: &'a [SpectralCoeffs],
    split: bool,
) -> Result<[&'a [SpectralCoeffs]; 4]> {
    if !split {
        return Ok([a, b, a, b]);
    }
    ensure!(a.len() >= 2 && b.len() >= 2, "pool splitting needs at least two samples per dataset");
    let (ha, hb) = (a.len() / 2, b.len() / 2);
    Ok([&a[..ha], &b[..hb], &a[ha..], &b[hb..]])
}

type FieldPair = (Box<dyn VelocityField>, Box<dyn VelocityField>);

fn empirical_fields(
    field_a: &[SpectralCoeffs],
    field_b: &[SpectralCoeffs],
    noise: &GaussianMeasure,
    setup: &PairSetup,
) -> Result<(FieldPair, Option<TrainingSummary>, Option<Arc<TrainedNetwork>>)> {
    match setup.backend {
        Backend::Analytic => bail!("the analytic backend needs the generating Gaussian measures, not sample pools"),
        Backend::Softmax => {
            let fa = EmpiricalSoftmaxField::new(field_a.to_vec(), noise.cov().clone())?;
            let fb = EmpiricalSoftmaxField::new(field_b.to_vec(), noise.cov().clone())?;
            Ok(((Box::new(fa), Box::new(fb)), None, None))
        }
        Backend::Trained => {
            if let Some(net) = &setup.network {
                ensure!(
                    net.n_modes() == noise.n_modes() && net.out_dim() == noise.out_dim(),
                    "loaded network expects {}x{} coefficients, data has {}x{}",
                    net.n_modes(),
                    net.out_dim(),
                    noise.n_modes(),
                    noise.out_dim()
                );
                let fields: FieldPair = (
                    Box::new(TrainedField::new(net.clone(), 0)?),
                    Box::new(TrainedField::new(net.clone(), 1)?),
                );
                return Ok((fields, None, Some(net.clone())));
            }
            let out = train_field(field_a, field_b, noise, &setup.train)?;
            let summary = TrainingSummary {
                iterations: setup.train.iterations,
                initial_eval_loss: out.initial_eval_loss,
                final_eval_loss: out.final_eval_loss,
            };
            let net = out.field_a.network().clone();
            Ok(((Box::new(out.field_a), Box::new(out.field_b)), Some(summary), Some(net)))
        }
    }
}

/// Frozen fields, noise measure and `x₁` sources for both directions.
pub struct BuiltPair<'a> {
    pub field_a: Box<dyn VelocityField>,
    pub field_b: Box<dyn VelocityField>,
    pub noise: GaussianMeasure,
    pub source_a: Box<dyn FunctionSource + 'a>,
    pub source_b: Box<dyn FunctionSource + 'a>,
    pub training: Option<TrainingSummary>,
    pub network: Option<Arc<TrainedNetwork>>,
}

impl BuiltPair<'_> {
    pub fn estimate(&self, cfg: &FklConfig) -> Result<(FklEstimate, FklEstimate)> {
        let forward = estimate_fkl(self.field_a.as_ref(), self.field_b.as_ref(), self.source_a.as_ref(), &self.noise, cfg)?;
        let reverse = estimate_fkl(self.field_b.as_ref(), self.field_a.as_ref(), self.source_b.as_ref(), &self.noise, cfg)?;
        Ok((forward, reverse))
    }

    fn into_outcome(self, setup: &PairSetup, split: bool) -> Result<PairOutcome> {
        let (forward, reverse) = self.estimate(&setup.fkl)?;
        Ok(PairOutcome {
            backend: setup.backend,
            noise: setup.noise.name().into(),
            split,
            forward,
            reverse,
            training: self.training,
            network: self.network,
        })
    }
}

/// Builds fields from sample pools. The noise covariance is derived from
/// the field pool of `A`.
pub fn build_from_pools<'a>(a: &'a [SpectralCoeffs], b: &'a [SpectralCoeffs], setup: &PairSetup) -> Result<BuiltPair<'a>> {
    let first = a.first().context("dataset A is empty")?;
    ensure!(!b.is_empty(), "dataset B is empty");
    let [field_a, field_b, est_a, est_b] = split_pools(a, b, setup.split)?;
    let noise = GaussianMeasure::centered(setup.noise.build(first.n_modes(), first.out_dim(), field_a)?);
    let ((fa, fb), training, network) = empirical_fields(field_a, field_b, &noise, setup)?;
    Ok(BuiltPair {
        field_a: fa,
        field_b: fb,
        noise,
        source_a: Box::new(PoolSource::new(est_a)?),
        source_b: Box::new(PoolSource::new(est_b)?),
        training,
        network,
    })
}

/// Estimates `KL(A‖B)` and `KL(B‖A)` from two sample pools.
pub fn estimate_from_pools(a: &[SpectralCoeffs], b: &[SpectralCoeffs], setup: &PairSetup) -> Result<PairOutcome> {
    build_from_pools(a, b, setup)?.into_outcome(setup, setup.split)
}

/// Builds the Gaussian case. Analytic fields use the true measures; the
/// other backends see `pool_size` fresh samples per measure. The estimator
/// always draws `x₁` from the true measures.
pub fn build_gaussian(case: &GaussianCase, pool_size: usize, setup: &PairSetup) -> Result<BuiltPair<'static>> {
    let (ma, mb) = case.measures()?;
    let mut pool_rng = rng::seeded(rng::derive(setup.fkl.seed, "pool"));
    let pool_a: Vec<SpectralCoeffs> = (0..pool_size).map(|_| ma.sample(&mut pool_rng)).collect();
    let pool_b: Vec<SpectralCoeffs> = (0..pool_size).map(|_| mb.sample(&mut pool_rng)).collect();
    let noise_cov = match setup.noise {
        NoiseSpec::Empirical { .. } | NoiseSpec::Roughened { .. } => {
            ensure!(pool_size >= 2, "empirical noise needs a sample pool of at least two");
            setup.noise.build(case.n_modes, case.dims, &pool_a)?
        }
        _ => setup.noise.build(case.n_modes, case.dims, &[])?,
    };
    let noise = GaussianMeasure::centered(noise_cov.clone());
    let ((field_a, field_b), training, network): (FieldPair, _, _) = match setup.backend {
        Backend::Analytic => (
            (
                Box::new(GaussianVelocityField::new(ma.mean().clone(), ma.cov().clone(), noise_cov.clone())?),
                Box::new(GaussianVelocityField::new(mb.mean().clone(), mb.cov().clone(), noise_cov)?),
            ),
            None,
            None,
        ),
        _ => {
            ensure!(pool_size >= 1, "the {:?} backend needs a sample pool", setup.backend);
            empirical_fields(&pool_a, &pool_b, &noise, setup)?
        }
    };
    Ok(BuiltPair {
        field_a,
        field_b,
        noise,
        source_a: Box::new(ma),
        source_b: Box::new(mb),
        training,
        network,
    })
}

pub fn estimate_gaussian(case: &GaussianCase, pool_size: usize, setup: &PairSetup) -> Result<PairOutcome> {
    build_gaussian(case, pool_size, setup)?.into_outcome(setup, false)
}

/// One row of the linear-SDE comparison: `dY = c Y dt + g dW` in `R^D`
/// from `Y_0 ~ N(2·1, 0.2·I)`, measures A and B differing in `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeCase {
    pub dim: usize,
    pub c_a: f64,
    pub c_b: f64,
    pub g: f64,
    /// Published closed-form values `(forward, reverse)`, two decimals.
    pub reference: (f64, f64),
}

pub const SDE_CASES: [SdeCase; 5] = [
    SdeCase { dim: 1, c_a: 0.01, c_b: 1.5, g: 0.75, reference: (8.93, 54.71) },
    SdeCase { dim: 1, c_a: 0.1, c_b: 2.0, g: 0.75, reference: (15.89, 186.19) },
    SdeCase { dim: 2, c_a: 0.01, c_b: 1.5, g: 0.75, reference: (17.86, 109.43) },
    SdeCase { dim: 3, c_a: 0.01, c_b: 1.5, g: 0.75, reference: (26.79, 164.14) },
    SdeCase { dim: 5, c_a: 0.01, c_b: 1.5, g: 1.0, reference: (26.34, 158.22) },
];

pub const SDE_INIT_MEAN: f64 = 2.0;
pub const SDE_INIT_VAR: f64 = 0.2;

impl SdeCase {
    pub fn spec(&self, drift_coeff: f64) -> LinearSdeSpec {
        LinearSdeSpec {
            drift_coeff,
            diffusion: self.g,
            dim: self.dim,
            init_mean: SDE_INIT_MEAN,
            init_var: SDE_INIT_VAR,
        }
    }

    /// Closed-form `(KL(A‖B), KL(B‖A))`.
    pub fn closed_form(&self) -> Result<(f64, f64)> {
        Ok(linear_sde_kl_pair(&self.spec(self.c_a), self.c_a, self.c_b)?)
    }

    /// `(forward, reverse)` by Simpson quadrature.
    pub fn quadrature(&self, n_nodes: usize) -> Result<(f64, f64)> {
        Ok((
            linear_sde_kl_quadrature(&self.spec(self.c_a), self.c_b, n_nodes)?,
            linear_sde_kl_quadrature(&self.spec(self.c_b), self.c_a, n_nodes)?,
        ))
    }

    /// Simulates `n_paths` paths of each measure on `[0, 1]` with `dt = 0.01`.
    pub fn simulate(&self, n_paths: usize, seed: u64) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
        let run = |c: f64, salt: &str| -> Result<TrajectoryDataset> {
            let system = SystemSpec::linear_sde(self.spec(c)).build()?;
            let cfg = SimConfig { horizon: 1.0, dt: 0.01, n_paths, seed: rng::derive(seed, salt) };
            Ok(euler_maruyama(&system, &cfg)?)
        };
        Ok((run(self.c_a, "sde-a")?, run(self.c_b, "sde-b")?))
    }
}

/// End-to-end settings for the SDE comparison: mirror-extended spectra,
/// a network trained on half of each dataset, empirical-spectrum noise.
#[derive(Debug, Clone)]
pub struct SdeEstimateSettings {
    pub n_paths: usize,
    pub n_modes: usize,
    pub extension: Extension,
    pub setup: PairSetup,
}

impl SdeEstimateSettings {
    pub fn standard(seed: u64) -> Self {
        let train = TrainConfig { iterations: 8000, seed, ..TrainConfig::default() };
        Self {
            n_paths: 5000,
            n_modes: 8,
            extension: Extension::Mirror,
            setup: PairSetup {
                backend: Backend::Trained,
                noise: NoiseSpec::default(),
                fkl: FklConfig {
                    n_function_samples: 2500,
                    n_time_per_function: 4,
                    n_sum_modes: 8,
                    sampler: TimeSampler::default(),
                    seed,
                },
                split: true,
                train,
                network: None,
            },
        }
    }

    pub fn run(&self, case: &SdeCase, seed: u64) -> Result<PairOutcome> {
        let (da, db) = case.simulate(self.n_paths, seed)?;
        let a = dataset_coeffs(&da, self.n_modes, self.extension)?;
        let b = dataset_coeffs(&db, self.n_modes, self.extension)?;
        estimate_from_pools(&a, &b, &self.setup)
    }
}

/// Relative error `|est − truth| / truth`.
pub fn rel_err(est: f64, truth: f64) -> f64 {
    (est - truth).abs() / truth.abs()
}
