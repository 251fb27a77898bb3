use num_complex::Complex64;

use crate::error::{FklError, Result};
use crate::measures::DiagonalCovariance;
use crate::spectral::SpectralCoeffs;

use super::{hash_floats, VelocityField};

pub const DEFAULT_T_COLLAPSE: f64 = 1e-3;

/// Exact velocity field of the linear path towards the empirical measure of
/// a sample pool.
///
/// Given `X_t = x`, the posterior over pool atoms `p_i` is a softmax of
/// `−‖x − t p_i‖²_κ / (2(1−t)²)`, and `v(x, t) = (E[X_1 | x] − x) / (1 − t)`.
/// For `t ≥ 1 − t_collapse` the posterior is replaced by its mode.
#[derive(Debug, Clone)]
pub struct EmpiricalSoftmaxField {
    pool: Vec<SpectralCoeffs>,
    noise_cov: DiagonalCovariance,
    t_collapse: f64,
    /// Row `i`: interleaved `(re, im)` of `w_k p_i / κ`.
    scaled: Vec<f64>,
    /// `‖p_i‖²_κ` with one-sided weights.
    pool_norms: Vec<f64>,
    width: usize,
}

impl EmpiricalSoftmaxField {
    pub fn new(pool: Vec<SpectralCoeffs>, noise_cov: DiagonalCovariance) -> Result<Self> {
        Self::with_collapse(pool, noise_cov, DEFAULT_T_COLLAPSE)
    }

    pub fn with_collapse(pool: Vec<SpectralCoeffs>, noise_cov: DiagonalCovariance, t_collapse: f64) -> Result<Self> {
        if pool.is_empty() {
            return Err(FklError::InvalidParameter("softmax field needs a nonempty pool".into()));
        }
        if !(0.0..1.0).contains(&t_collapse) {
            return Err(FklError::InvalidParameter(format!(
                "collapse threshold must lie in [0, 1), got {t_collapse}"
            )));
        }
        for p in &pool {
            noise_cov.check_coeffs(p)?;
        }
        let out_dim = noise_cov.out_dim();
        let width = 2 * pool[0].coeffs().len();
        let weights: Vec<f64> = (0..pool[0].coeffs().len())
            .map(|i| {
                let w = if i < out_dim { 1.0 } else { 2.0 };
                w / noise_cov.lambdas()[i]
            })
            .collect();
        let mut scaled = Vec::with_capacity(pool.len() * width);
        let mut pool_norms = Vec::with_capacity(pool.len());
        for p in &pool {
            let mut norm = 0.0;
            for (c, w) in p.coeffs().iter().zip(&weights) {
                scaled.push(w * c.re);
                scaled.push(w * c.im);
                norm += w * c.norm_sqr();
            }
            pool_norms.push(norm);
        }
        Ok(Self {
            pool,
            noise_cov,
            t_collapse,
            scaled,
            pool_norms,
            width,
        })
    }

    pub fn pool(&self) -> &[SpectralCoeffs] {
        &self.pool
    }

    pub fn t_collapse(&self) -> f64 {
        self.t_collapse
    }

    /// Posterior weights over the pool at `(x, t)`, `0 ≤ t < 1`.
    pub fn weights(&self, x: &SpectralCoeffs, t: f64) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&t) {
            return Err(FklError::TimeOutOfRange(t));
        }
        self.check_input(x)?;
        let xf: Vec<f64> = x.coeffs().iter().flat_map(|c| [c.re, c.im]).collect();
        let denom = 2.0 * (1.0 - t) * (1.0 - t);
        // the ‖x‖² term is common to all atoms and drops out of the softmax
        let logits: Vec<f64> = self
            .scaled
            .chunks_exact(self.width)
            .zip(&self.pool_norms)
            .map(|(row, &pn)| {
                let dot: f64 = row.iter().zip(&xf).map(|(a, b)| a * b).sum();
                -(t * t * pn - 2.0 * t * dot) / denom
            })
            .collect();
        let (argmax, max) = logits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
        if t >= 1.0 - self.t_collapse {
            let mut w = vec![0.0; logits.len()];
            w[argmax] = 1.0;
            return Ok(w);
        }
        let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        Ok(w)
    }
}

impl VelocityField for EmpiricalSoftmaxField {
    fn n_modes(&self) -> usize {
        self.noise_cov.n_modes()
    }

    fn out_dim(&self) -> usize {
        self.noise_cov.out_dim()
    }

    fn eval(&self, x: &SpectralCoeffs, t: f64) -> Result<SpectralCoeffs> {
        let w = self.weights(x, t)?;
        let mut expect = vec![Complex64::new(0.0, 0.0); x.coeffs().len()];
        for (wi, p) in w.iter().zip(&self.pool) {
            if *wi == 0.0 {
                continue;
            }
            for (e, c) in expect.iter_mut().zip(p.coeffs()) {
                *e += c * wi;
            }
        }
        let inv = 1.0 / (1.0 - t);
        let coeffs = expect.iter().zip(x.coeffs()).map(|(e, xv)| (e - xv) * inv).collect();
        SpectralCoeffs::new(self.n_modes(), self.out_dim(), coeffs)
    }

    fn fingerprint(&self) -> String {
        hash_floats(
            "softmax",
            [self.scaled.as_slice(), self.noise_cov.lambdas(), &[self.t_collapse]],
        )
    }
}
