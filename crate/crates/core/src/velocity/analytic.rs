use crate::error::Result;
use crate::measures::DiagonalCovariance;
use crate::spectral::SpectralCoeffs;

use super::{check_time, hash_floats, VelocityField};

/// Exact velocity of the linear path from `N(0, noise)` to `N(mean, data)`
/// when both covariances are diagonal in the Fourier basis.
///
/// Per mode, `v_k(r) = m_k + a_k(t) (r_k − t m_k)` with
/// `a_k(t) = (t c_k − (1−t) κ_k) / ((1−t)² κ_k + t² c_k)`, where `c` is the
/// data eigenvalue and `κ` the noise eigenvalue.
#[derive(Debug, Clone)]
pub struct GaussianVelocityField {
    mean: SpectralCoeffs,
    data_cov: DiagonalCovariance,
    noise_cov: DiagonalCovariance,
}

impl GaussianVelocityField {
    pub fn new(mean: SpectralCoeffs, data_cov: DiagonalCovariance, noise_cov: DiagonalCovariance) -> Result<Self> {
        data_cov.check_coeffs(&mean)?;
        noise_cov.check_coeffs(&mean)?;
        Ok(Self {
            mean,
            data_cov,
            noise_cov,
        })
    }

    pub fn mean(&self) -> &SpectralCoeffs {
        &self.mean
    }

    /// `a_k(t)` for mode `(k, d)`.
    pub fn gain(&self, k: usize, d: usize, t: f64) -> f64 {
        let c = self.data_cov.lambda(k, d);
        let kappa = self.noise_cov.lambda(k, d);
        let s = 1.0 - t;
        (t * c - s * kappa) / (s * s * kappa + t * t * c)
    }
}

impl VelocityField for GaussianVelocityField {
    fn n_modes(&self) -> usize {
        self.mean.n_modes()
    }

    fn out_dim(&self) -> usize {
        self.mean.out_dim()
    }

    fn eval(&self, x: &SpectralCoeffs, t: f64) -> Result<SpectralCoeffs> {
        check_time(t)?;
        self.check_input(x)?;
        let out_dim = self.out_dim();
        let coeffs = x
            .coeffs()
            .iter()
            .zip(self.mean.coeffs())
            .enumerate()
            .map(|(i, (r, m))| {
                let a = self.gain(i / out_dim, i % out_dim, t);
                m + (r - m * t) * a
            })
            .collect();
        SpectralCoeffs::new(self.n_modes(), out_dim, coeffs)
    }

    fn exact_boundary(&self) -> bool {
        // holds analytically; in floating point only to rounding
        false
    }

    fn fingerprint(&self) -> String {
        let mean: Vec<f64> = self.mean.coeffs().iter().flat_map(|c| [c.re, c.im]).collect();
        hash_floats(
            "gaussian",
            [mean.as_slice(), self.data_cov.lambdas(), self.noise_cov.lambdas()],
        )
    }
}
