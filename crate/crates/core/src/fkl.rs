//! Monte Carlo estimation of the divergence between two path measures from
//! their flow-matching velocity fields:
//!
//! ```text
//! KL(ν_A ‖ ν_B) = ∫₀¹ E_{x ~ μ_t^A} [ t/(1−t) · ‖v_t^A(x) − v_t^B(x)‖²_CM ] dt
//! ```
//!
//! where `μ_t^A` is the law of `t X_1 + (1−t) X_0` with `X_1 ~ ν_A` and `X_0`
//! the Gaussian noise, and `‖·‖_CM` is the noise's Cameron–Martin norm. Every
//! draw is a direct evaluation of both fields; no generative dynamics are
//! integrated.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};
use crate::measures::{cm_norm_sq, GaussianMeasure};
use crate::rng::{self, Rng};
use crate::spectral::SpectralCoeffs;
use crate::velocity::{check_pair, VelocityField};

pub const DEFAULT_T_MIN: f64 = 1e-6;
pub const DEFAULT_T_MAX: f64 = 1.0 - 1e-4;

/// Distribution of the time variable and the matching reweighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TimeSampler {
    /// `t ~ U[0, t_max]`.
    Uniform { t_max: f64 },
    /// `t = sigmoid(mean + std·z)`, truncated to `t < t_max`.
    LogitNormal { mean: f64, std: f64, t_max: f64 },
    /// Density proportional to `t/(1−t)` on `[t_min, t_max]`.
    ImportanceOverOneMinusT { t_min: f64, t_max: f64 },
}

impl Default for TimeSampler {
    fn default() -> Self {
        TimeSampler::ImportanceOverOneMinusT {
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
        }
    }
}

/// Antiderivative of `t/(1−t)`.
fn weight_antiderivative(t: f64) -> f64 {
    -(-t).ln_1p() - t
}

fn logit(t: f64) -> f64 {
    (t / (1.0 - t)).ln()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

impl TimeSampler {
    pub fn validate(&self) -> Result<()> {
        let (t_min, t_max) = self.support();
        if !(t_max < 1.0) {
            return Err(FklError::InvalidParameter(format!(
                "t_max must be below 1 (the t/(1−t) weight diverges), got {t_max}"
            )));
        }
        if !(0.0 <= t_min && t_min < t_max) {
            return Err(FklError::InvalidParameter(format!(
                "need 0 <= t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        if let TimeSampler::LogitNormal { std, mean, .. } = self {
            if !(*std > 0.0) || !mean.is_finite() {
                return Err(FklError::InvalidParameter("logit-normal needs std > 0".into()));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            TimeSampler::Uniform { t_max } => (0.0, t_max),
            TimeSampler::LogitNormal { t_max, .. } => (0.0, t_max),
            TimeSampler::ImportanceOverOneMinusT { t_min, t_max } => (t_min, t_max),
        }
    }

    pub fn with_t_max(&self, t_max: f64) -> Self {
        match *self {
            TimeSampler::Uniform { .. } => TimeSampler::Uniform { t_max },
            TimeSampler::LogitNormal { mean, std, .. } => TimeSampler::LogitNormal { mean, std, t_max },
            TimeSampler::ImportanceOverOneMinusT { t_min, .. } => TimeSampler::ImportanceOverOneMinusT { t_min, t_max },
        }
    }

    /// `Z = ∫ t/(1−t) dt` over the importance sampler's support.
    pub fn importance_normalizer(t_min: f64, t_max: f64) -> f64 {
        weight_antiderivative(t_max) - weight_antiderivative(t_min)
    }

    /// Inverse CDF of the `t/(1−t)` density, by bisection to `1e-12`.
    pub fn importance_quantile(t_min: f64, t_max: f64, u: f64) -> f64 {
        let f_min = weight_antiderivative(t_min);
        let target = f_min + u * Self::importance_normalizer(t_min, t_max);
        let (mut lo, mut hi) = (t_min, t_max);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if weight_antiderivative(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            TimeSampler::Uniform { t_max } => t_max * rng.random::<f64>(),
            TimeSampler::LogitNormal { mean, std, t_max } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let t = 1.0 / (1.0 + (-(mean + std * z)).exp());
                if t < t_max && t > 0.0 {
                    break t;
                }
            },
            TimeSampler::ImportanceOverOneMinusT { t_min, t_max } => {
                Self::importance_quantile(t_min, t_max, rng.random::<f64>())
            }
        }
    }

    /// Unbiased contribution of one draw with squared field mismatch `g`.
    pub fn contribution(&self, t: f64, g: f64) -> f64 {
        match *self {
            TimeSampler::Uniform { t_max } => t / (1.0 - t) * g * t_max,
            TimeSampler::LogitNormal { mean, std, t_max } => {
                let mass = normal_cdf((logit(t_max) - mean) / std);
                let z = (logit(t) - mean) / std;
                let density = (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * std * t * (1.0 - t)) / mass;
                t / (1.0 - t) * g / density
            }
            TimeSampler::ImportanceOverOneMinusT { t_min, t_max } => Self::importance_normalizer(t_min, t_max) * g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FklConfig {
    pub n_function_samples: usize,
    pub n_time_per_function: usize,
    pub n_sum_modes: usize,
    #[serde(default)]
    pub sampler: TimeSampler,
    pub seed: u64,
}

impl FklConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_function_samples == 0 || self.n_time_per_function == 0 || self.n_sum_modes == 0 {
            return Err(FklError::InvalidParameter("sample counts and n_sum_modes must be at least 1".into()));
        }
        self.sampler.validate()
    }

    pub fn n_evals(&self) -> usize {
        self.n_function_samples * self.n_time_per_function
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FklEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_evals: usize,
    pub sampler: TimeSampler,
    pub n_sum_modes: usize,
    pub n_function_samples: usize,
    pub n_time_per_function: usize,
    pub seed: u64,
    pub field_fingerprints: [String; 2],
    /// The standard error treats all draws as independent, ignoring the
    /// correlation among time draws that share a function sample.
    pub std_error_note: String,
}

/// Anything that yields draws of `X_1`.
pub trait FunctionSource: Sync {
    fn n_modes(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn draw(&self, index: usize, rng: &mut Rng) -> SpectralCoeffs;
}

impl FunctionSource for GaussianMeasure {
    fn n_modes(&self) -> usize {
        GaussianMeasure::n_modes(self)
    }
    fn out_dim(&self) -> usize {
        GaussianMeasure::out_dim(self)
    }
    fn draw(&self, _index: usize, rng: &mut Rng) -> SpectralCoeffs {
        self.sample(rng)
    }
}

/// Finite pool, read in order and cycled if more draws are requested.
#[derive(Debug, Clone, Copy)]
pub struct PoolSource<'a> {
    pool: &'a [SpectralCoeffs],
}

impl<'a> PoolSource<'a> {
    pub fn new(pool: &'a [SpectralCoeffs]) -> Result<Self> {
        let first = pool
            .first()
            .ok_or_else(|| FklError::InvalidParameter("empty function pool".into()))?;
        for p in pool {
            first.check_shape(p)?;
        }
        Ok(Self { pool })
    }
}

impl FunctionSource for PoolSource<'_> {
    fn n_modes(&self) -> usize {
        self.pool[0].n_modes()
    }
    fn out_dim(&self) -> usize {
        self.pool[0].out_dim()
    }
    fn draw(&self, index: usize, _rng: &mut Rng) -> SpectralCoeffs {
        self.pool[index % self.pool.len()].clone()
    }
}

/// Per-draw contributions in a fixed order, function-major.
pub fn fkl_contributions(
    field_a: &dyn VelocityField,
    field_b: &dyn VelocityField,
    source: &dyn FunctionSource,
    noise: &GaussianMeasure,
    cfg: &FklConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_pair(field_a, field_b)?;
    let n_modes = field_a.n_modes();
    if source.n_modes() != n_modes || noise.n_modes() != n_modes {
        return Err(FklError::Shape(format!(
            "fields have {n_modes} modes, source {} and noise {}",
            source.n_modes(),
            noise.n_modes()
        )));
    }
    if source.out_dim() != field_a.out_dim() || noise.out_dim() != field_a.out_dim() {
        return Err(FklError::Shape("output dimensions of fields, source and noise differ".into()));
    }
    if cfg.n_sum_modes > n_modes {
        return Err(FklError::Shape(format!(
            "n_sum_modes {} exceeds the fields' {n_modes} modes",
            cfg.n_sum_modes
        )));
    }
    let per_function: Vec<Result<Vec<f64>>> = (0..cfg.n_function_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, i as u64);
            let x1 = source.draw(i, &mut rng);
            let mut out = Vec::with_capacity(cfg.n_time_per_function);
            for _ in 0..cfg.n_time_per_function {
                let t = cfg.sampler.sample(&mut rng);
                let x0 = noise.sample(&mut rng);
                let xt = SpectralCoeffs::interpolate(&x0, &x1, t);
                let va = field_a.eval(&xt, t)?;
                let vb = field_b.eval(&xt, t)?;
                let g = cm_norm_sq(&(&va - &vb), noise.cov(), cfg.n_sum_modes);
                out.push(cfg.sampler.contribution(t, g));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(cfg.n_evals());
    for chunk in per_function {
        all.extend(chunk?);
    }
    Ok(all)
}

pub fn estimate_fkl(
    field_a: &dyn VelocityField,
    field_b: &dyn VelocityField,
    source: &dyn FunctionSource,
    noise: &GaussianMeasure,
    cfg: &FklConfig,
) -> Result<FklEstimate> {
    let contributions = fkl_contributions(field_a, field_b, source, noise, cfg)?;
    let (value, std_error) = mean_and_std_error(&contributions);
    Ok(FklEstimate {
        value,
        std_error,
        n_evals: contributions.len(),
        sampler: cfg.sampler,
        n_sum_modes: cfg.n_sum_modes,
        n_function_samples: cfg.n_function_samples,
        n_time_per_function: cfg.n_time_per_function,
        seed: cfg.seed,
        field_fingerprints: [field_a.fingerprint(), field_b.fingerprint()],
        std_error_note: "draws treated as independent; within-function correlation ignored".into(),
    })
}

pub(crate) fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepAxis {
    SumModes(Vec<usize>),
    FunctionSamples(Vec<usize>),
    TimeDraws(Vec<usize>),
    TMax(Vec<f64>),
    Seeds(Vec<u64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SumModes(_) => "n_sum_modes",
            SweepAxis::FunctionSamples(_) => "n_function_samples",
            SweepAxis::TimeDraws(_) => "n_time_per_function",
            SweepAxis::TMax(_) => "t_max",
            SweepAxis::Seeds(_) => "seed",
        }
    }

    fn configs(&self, base: &FklConfig) -> Vec<(String, FklConfig)> {
        match self {
            SweepAxis::SumModes(v) => v
                .iter()
                .map(|&n| (n.to_string(), FklConfig { n_sum_modes: n, ..*base }))
                .collect(),
            SweepAxis::FunctionSamples(v) => v
                .iter()
                .map(|&n| (n.to_string(), FklConfig { n_function_samples: n, ..*base }))
                .collect(),
            SweepAxis::TimeDraws(v) => v
                .iter()
                .map(|&n| (n.to_string(), FklConfig { n_time_per_function: n, ..*base }))
                .collect(),
            SweepAxis::TMax(v) => v
                .iter()
                .map(|&t| (t.to_string(), FklConfig { sampler: base.sampler.with_t_max(t), ..*base }))
                .collect(),
            SweepAxis::Seeds(v) => v
                .iter()
                .map(|&s| (s.to_string(), FklConfig { seed: s, ..*base }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub estimate: FklEstimate,
}

/// One estimate per point of a configuration axis.
pub fn sweep(
    field_a: &dyn VelocityField,
    field_b: &dyn VelocityField,
    source: &dyn FunctionSource,
    noise: &GaussianMeasure,
    base: &FklConfig,
    axis: &SweepAxis,
) -> Result<Vec<SweepRow>> {
    axis.configs(base)
        .into_iter()
        .map(|(value, cfg)| {
            Ok(SweepRow {
                axis: axis.name().to_string(),
                value,
                estimate: estimate_fkl(field_a, field_b, source, noise, &cfg)?,
            })
        })
        .collect()
}

/// Sweep over setups that need rebuilding per point, such as the noise
/// measure (fields depend on it).
pub fn sweep_with<T: ToString>(
    axis: &str,
    points: &[T],
    mut run: impl FnMut(&T) -> Result<FklEstimate>,
) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|p| {
            Ok(SweepRow {
                axis: axis.to_string(),
                value: p.to_string(),
                estimate: run(p)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "axis,value,estimate,std_error,n_evals,n_sum_modes,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.axis, r.value, r.estimate.value, r.estimate.std_error, r.estimate.n_evals, r.estimate.n_sum_modes, r.estimate.seed
        )?;
    }
    Ok(())
}
