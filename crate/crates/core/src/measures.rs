//! Gaussian measures whose covariance is diagonal in the Fourier basis.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};
use crate::rng::Rng;
use crate::spectral::SpectralCoeffs;

/// Eigenvalues at or below this are rejected outright.
const LAMBDA_FLOOR: f64 = 1e-300;
/// Ratio `min λ / max λ` under which a conditioning warning is logged.
const CONDITIONING_RATIO: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CovarianceKind {
    MaternOperator { sigma2: f64, tau: f64, alpha: f64 },
    RoughenedEmpirical { floor_eps: f64, exponent: u32 },
    Identity,
    Custom,
}

/// Per-mode, per-dimension eigenvalues `λ_{k,d}`, stored `k * out_dim + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCovariance {
    n_modes: usize,
    out_dim: usize,
    lambdas: Vec<f64>,
    kind: CovarianceKind,
}

impl DiagonalCovariance {
    pub fn new(n_modes: usize, out_dim: usize, lambdas: Vec<f64>, kind: CovarianceKind) -> Result<Self> {
        if n_modes == 0 || out_dim == 0 {
            return Err(FklError::InvalidParameter(
                "covariance needs at least one mode and one dimension".into(),
            ));
        }
        if lambdas.len() != n_modes * out_dim {
            return Err(FklError::Shape(format!(
                "expected {} eigenvalues, got {}",
                n_modes * out_dim,
                lambdas.len()
            )));
        }
        if let Some(i) = lambdas.iter().position(|&l| !(l > LAMBDA_FLOOR && l.is_finite())) {
            return Err(FklError::InvalidParameter(format!(
                "eigenvalue {} at flat index {i} is not a usable positive number",
                lambdas[i]
            )));
        }
        let cov = Self {
            n_modes,
            out_dim,
            lambdas,
            kind,
        };
        if !cov.well_conditioned() {
            log::warn!(
                "covariance spectrum spans more than 15 orders of magnitude; Cameron-Martin norms will be ill-conditioned"
            );
        }
        Ok(cov)
    }

    pub fn custom(n_modes: usize, out_dim: usize, lambdas: Vec<f64>) -> Result<Self> {
        Self::new(n_modes, out_dim, lambdas, CovarianceKind::Custom)
    }

    pub fn identity(n_modes: usize, out_dim: usize) -> Result<Self> {
        Self::new(n_modes, out_dim, vec![1.0; n_modes * out_dim], CovarianceKind::Identity)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, k: usize, d: usize) -> f64 {
        self.lambdas[k * self.out_dim + d]
    }

    pub fn well_conditioned(&self) -> bool {
        let max = self.lambdas.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.lambdas.iter().cloned().fold(f64::MAX, f64::min);
        min >= CONDITIONING_RATIO * max
    }

    /// First `n_modes` eigenvalues; the kind is preserved.
    pub fn truncated(&self, n_modes: usize) -> Result<Self> {
        if n_modes == 0 || n_modes > self.n_modes {
            return Err(FklError::Shape(format!(
                "cannot truncate {} modes to {n_modes}",
                self.n_modes
            )));
        }
        Ok(Self {
            n_modes,
            out_dim: self.out_dim,
            lambdas: self.lambdas[..n_modes * self.out_dim].to_vec(),
            kind: self.kind.clone(),
        })
    }

    pub fn check_coeffs(&self, c: &SpectralCoeffs) -> Result<()> {
        if c.n_modes() == self.n_modes && c.out_dim() == self.out_dim {
            Ok(())
        } else {
            Err(FklError::Shape(format!(
                "coefficients {}x{} vs covariance {}x{}",
                c.n_modes(),
                c.out_dim(),
                self.n_modes,
                self.out_dim
            )))
        }
    }

    /// Writes `k,d,lambda` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,d,lambda")?;
        for k in 0..self.n_modes {
            for d in 0..self.out_dim {
                writeln!(w, "{k},{d},{:e}", self.lambda(k, d))?;
            }
        }
        Ok(())
    }

    /// Reads a spectrum written by [`write_csv`](Self::write_csv). Rows may
    /// come in any order but must cover a full `k x d` rectangle.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('k')) {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(FklError::Format(format!("line {}: expected k,d,lambda", lineno + 1)));
            }
            let parse_err = |what: &str| FklError::Format(format!("line {}: bad {what}", lineno + 1));
            let k: usize = parts[0].parse().map_err(|_| parse_err("k"))?;
            let d: usize = parts[1].parse().map_err(|_| parse_err("d"))?;
            let l: f64 = parts[2].parse().map_err(|_| parse_err("lambda"))?;
            rows.push((k, d, l));
        }
        let n_modes = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let out_dim = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
        if rows.len() != n_modes * out_dim || rows.is_empty() {
            return Err(FklError::Format("spectrum rows do not form a full k x d table".into()));
        }
        let mut lambdas = vec![f64::NAN; n_modes * out_dim];
        for (k, d, l) in rows {
            lambdas[k * out_dim + d] = l;
        }
        Self::custom(n_modes, out_dim, lambdas)
    }
}

/// Matérn operator spectrum `λ_k = σ² (4π²k² + τ²)^(-α)`, shared by all dimensions.
pub fn matern_covariance(sigma2: f64, tau: f64, alpha: f64, n_modes: usize, out_dim: usize) -> Result<DiagonalCovariance> {
    for (name, v) in [("sigma2", sigma2), ("tau", tau), ("alpha", alpha)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FklError::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let mut lambdas = Vec::with_capacity(n_modes * out_dim);
    for k in 0..n_modes {
        let kk = k as f64;
        let l = sigma2 * (4.0 * PI * PI * kk * kk + tau * tau).powf(-alpha);
        lambdas.extend(std::iter::repeat_n(l, out_dim));
    }
    DiagonalCovariance::new(
        n_modes,
        out_dim,
        lambdas,
        CovarianceKind::MaternOperator { sigma2, tau, alpha },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughenConfig {
    #[serde(default = "RoughenConfig::default_floor")]
    pub floor_eps: f64,
    /// Variance is multiplied by `max(k, 1)^exponent`; 0 keeps the plain
    /// empirical spectrum.
    #[serde(default = "RoughenConfig::default_exponent")]
    pub exponent: u32,
}

impl RoughenConfig {
    fn default_floor() -> f64 {
        1e-8
    }
    fn default_exponent() -> u32 {
        2
    }
}

impl Default for RoughenConfig {
    fn default() -> Self {
        Self {
            floor_eps: Self::default_floor(),
            exponent: Self::default_exponent(),
        }
    }
}

/// Empirical coefficient spectrum of `samples`, roughened by the wavenumber.
///
/// `v_{k,d}` is the unbiased sample variance of the complex coefficient
/// (squared deviations of real and imaginary parts summed), and
/// `λ_{k,d} = max(k,1)^exponent · max(v_{k,d}, floor_eps)`.
pub fn roughened_empirical_covariance(samples: &[SpectralCoeffs], cfg: RoughenConfig) -> Result<DiagonalCovariance> {
    if samples.len() < 2 {
        return Err(FklError::InvalidParameter(format!(
            "need at least 2 samples for an empirical spectrum, got {}",
            samples.len()
        )));
    }
    if !(cfg.floor_eps > 0.0) || cfg.exponent > 2 {
        return Err(FklError::InvalidParameter(
            "floor_eps must be positive and exponent at most 2".into(),
        ));
    }
    let first = &samples[0];
    for s in samples {
        first.check_shape(s)?;
    }
    let (n_modes, out_dim) = (first.n_modes(), first.out_dim());
    let n = samples.len() as f64;
    let len = n_modes * out_dim;
    let mut mean = vec![Complex64::new(0.0, 0.0); len];
    for s in samples {
        for (m, c) in mean.iter_mut().zip(s.coeffs()) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; len];
    for s in samples {
        for ((v, m), c) in var.iter_mut().zip(&mean).zip(s.coeffs()) {
            *v += (c - m).norm_sqr();
        }
    }
    let lambdas = var
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let k = (i / out_dim).max(1) as f64;
            k.powi(cfg.exponent as i32) * (v / (n - 1.0)).max(cfg.floor_eps)
        })
        .collect();
    DiagonalCovariance::new(
        n_modes,
        out_dim,
        lambdas,
        CovarianceKind::RoughenedEmpirical {
            floor_eps: cfg.floor_eps,
            exponent: cfg.exponent,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: SpectralCoeffs,
    cov: DiagonalCovariance,
}

impl GaussianMeasure {
    pub fn new(mean: SpectralCoeffs, cov: DiagonalCovariance) -> Result<Self> {
        cov.check_coeffs(&mean)?;
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: DiagonalCovariance) -> Self {
        Self {
            mean: SpectralCoeffs::zeros(cov.n_modes(), cov.out_dim()),
            cov,
        }
    }

    pub fn mean(&self) -> &SpectralCoeffs {
        &self.mean
    }

    pub fn cov(&self) -> &DiagonalCovariance {
        &self.cov
    }

    pub fn n_modes(&self) -> usize {
        self.cov.n_modes()
    }

    pub fn out_dim(&self) -> usize {
        self.cov.out_dim()
    }

    /// One draw: real `N(0, λ_0)` at `k = 0`, complex with independent
    /// `N(0, λ_k / 2)` parts for `k ≥ 1`, then the mean is added.
    pub fn sample(&self, rng: &mut Rng) -> SpectralCoeffs {
        let out_dim = self.cov.out_dim();
        let coeffs = self
            .cov
            .lambdas()
            .iter()
            .zip(self.mean.coeffs())
            .enumerate()
            .map(|(i, (&l, m))| {
                if i < out_dim {
                    let z: f64 = rng.sample(StandardNormal);
                    m + Complex64::new(l.sqrt() * z, 0.0)
                } else {
                    let s = (0.5 * l).sqrt();
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    m + Complex64::new(s * re, s * im)
                }
            })
            .collect();
        SpectralCoeffs::new(self.cov.n_modes(), out_dim, coeffs).expect("shape fixed by covariance")
    }
}

/// Squared Cameron–Martin norm over the first `n_sum_modes` wavenumbers:
/// `Σ_d ( |f_0|²/λ_0 + 2 Σ_{1≤k<N} |f_k|²/λ_k )`.
pub fn cm_norm_sq(f: &SpectralCoeffs, noise_cov: &DiagonalCovariance, n_sum_modes: usize) -> f64 {
    assert!(
        n_sum_modes <= f.n_modes() && n_sum_modes <= noise_cov.n_modes(),
        "n_sum_modes {n_sum_modes} exceeds stored modes"
    );
    assert_eq!(f.out_dim(), noise_cov.out_dim(), "dimension mismatch");
    let out_dim = f.out_dim();
    let mut acc = 0.0;
    for k in 0..n_sum_modes {
        let w = if k == 0 { 1.0 } else { 2.0 };
        for d in 0..out_dim {
            acc += w * f.get(k, d).norm_sqr() / noise_cov.lambda(k, d);
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceDiagnostic {
    pub trace_truncated: f64,
    pub tail_decay_exponent: f64,
    pub trace_class_flag: bool,
}

/// Truncated trace and the power-law decay `λ_k ~ k^(-p)` of the upper half
/// of the stored spectrum (least squares in log-log, averaged over dimensions).
pub fn trace_diagnostic(cov: &DiagonalCovariance) -> Result<TraceDiagnostic> {
    let n = cov.n_modes();
    if n < 8 {
        return Err(FklError::InvalidParameter(format!(
            "trace diagnostic needs at least 8 modes, got {n}"
        )));
    }
    let trace_truncated = cov.lambdas().iter().sum();
    let ks: Vec<usize> = (n / 2..n).collect();
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = ks
        .iter()
        .map(|&k| (0..cov.out_dim()).map(|d| cov.lambda(k, d).ln()).sum::<f64>() / cov.out_dim() as f64)
        .collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let p = -sxy / sxx;
    Ok(TraceDiagnostic {
        trace_truncated,
        tail_decay_exponent: p,
        trace_class_flag: p > 1.0,
    })
}
