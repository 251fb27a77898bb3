//! Closed-form divergences for the Gaussian mean-shift and linear-SDE cases.

use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};
use crate::measures::{cm_norm_sq, DiagonalCovariance};
use crate::quad::{adaptive_simpson, simpson};
use crate::spectral::SpectralCoeffs;
use crate::velocity::GaussianVelocityField;

/// `KL(N(m_A, R) ‖ N(m_B, R)) = ½ ‖m_A − m_B‖²` in the Cameron–Martin norm of `R`.
pub fn gaussian_mean_shift_kl(mean_diff: &SpectralCoeffs, data_cov: &DiagonalCovariance) -> Result<f64> {
    data_cov.check_coeffs(mean_diff)?;
    Ok(0.5 * cm_norm_sq(mean_diff, data_cov, data_cov.n_modes()))
}

/// Input-independent difference `v^A − v^B` of the analytic Gaussian fields
/// for `N(mean, R)` and `N(0, R)`: `(1−t)κ_k / ((1−t)²κ_k + t²c_k) · m_k`.
pub fn gaussian_velocity_mismatch(
    mean: &SpectralCoeffs,
    data_cov: &DiagonalCovariance,
    noise_cov: &DiagonalCovariance,
    t: f64,
) -> Result<SpectralCoeffs> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FklError::TimeOutOfRange(t));
    }
    data_cov.check_coeffs(mean)?;
    noise_cov.check_coeffs(mean)?;
    let out_dim = mean.out_dim();
    let s = 1.0 - t;
    let coeffs = mean
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (k, d) = (i / out_dim, i % out_dim);
            let c = data_cov.lambda(k, d);
            let kappa = noise_cov.lambda(k, d);
            m * (s * kappa / (s * s * kappa + t * t * c))
        })
        .collect();
    SpectralCoeffs::new(mean.n_modes(), out_dim, coeffs)
}

/// Velocity field of the linear path towards `N(mean, data_cov)` from `N(0, noise_cov)`.
pub fn gaussian_analytic_field(
    measure_mean: &SpectralCoeffs,
    data_cov: &DiagonalCovariance,
    noise_cov: &DiagonalCovariance,
) -> Result<GaussianVelocityField> {
    GaussianVelocityField::new(measure_mean.clone(), data_cov.clone(), noise_cov.clone())
}

/// `∫₀¹ t/(1−t) · |v^diff(t)|² / κ dt` for one real mode with mean `m`, data
/// variance `c` and noise variance `kappa`, by adaptive quadrature. Equals
/// `m² / (2c)` for every `kappa > 0`.
pub fn single_mode_fkl_integral(m: f64, c: f64, kappa: f64, tol: f64) -> f64 {
    let integrand = |t: f64| {
        let s = 1.0 - t;
        let den = s * s * kappa + t * t * c;
        m * m * t * s * kappa / (den * den)
    };
    adaptive_simpson(integrand, 0.0, 1.0, tol)
}

/// Parameters of `dY = c Y dt + g dW` on `R^D` with `Y_0 ~ N(m0·1, Σ0·I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSdeSpec {
    pub drift_coeff: f64,
    pub diffusion: f64,
    pub dim: usize,
    /// Per-dimension initial mean.
    pub init_mean: f64,
    /// Per-dimension initial variance.
    pub init_var: f64,
}

impl LinearSdeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion > 0.0) {
            return Err(FklError::InvalidParameter(format!(
                "diffusion must be positive, got {}",
                self.diffusion
            )));
        }
        if !(self.init_var >= 0.0) || self.dim == 0 {
            return Err(FklError::InvalidParameter(
                "initial variance must be nonnegative and dim at least 1".into(),
            ));
        }
        if !self.drift_coeff.is_finite() || !self.init_mean.is_finite() {
            return Err(FklError::InvalidParameter("non-finite SDE parameter".into()));
        }
        Ok(())
    }

    /// `M_0 = ‖m_0‖²`.
    pub fn m0_norm_sq(&self) -> f64 {
        self.dim as f64 * self.init_mean * self.init_mean
    }

    /// `S_0 = Tr Σ_0`.
    pub fn s0_trace(&self) -> f64 {
        self.dim as f64 * self.init_var
    }

    /// Same spec with a different drift coefficient.
    pub fn with_drift(&self, drift_coeff: f64) -> Self {
        Self { drift_coeff, ..*self }
    }

    /// `E‖Y_t‖²`, including the `c → 0` limit `(M_0 + S_0) + g²D t`.
    pub fn second_moment(&self, t: f64) -> f64 {
        let c = self.drift_coeff;
        let init = self.m0_norm_sq() + self.s0_trace();
        let g2d = self.diffusion * self.diffusion * self.dim as f64;
        if c == 0.0 {
            init + g2d * t
        } else {
            let e = (2.0 * c * t).exp();
            e * init + g2d / (2.0 * c) * (e - 1.0)
        }
    }

    fn girsanov_prefactor(&self, c_b: f64) -> f64 {
        let dc = self.drift_coeff - c_b;
        dc * dc / (2.0 * self.diffusion * self.diffusion)
    }
}

/// Closed-form `KL(ν_A ‖ ν_B)` for linear SDEs sharing diffusion and initial law.
/// `a` carries `c_A`; the expectation runs under A.
pub fn linear_sde_kl_closed_form(a: &LinearSdeSpec, c_b: f64) -> Result<f64> {
    a.validate()?;
    let c = a.drift_coeff;
    if c == 0.0 {
        return Err(FklError::ClosedFormUnavailable(
            "c_A = 0 has no closed form here; use linear_sde_kl_quadrature".into(),
        ));
    }
    let growth = ((2.0 * c).exp() - 1.0) / (2.0 * c);
    let g2d = a.diffusion * a.diffusion * a.dim as f64;
    let bracket = (a.m0_norm_sq() + a.s0_trace()) * growth + g2d / (2.0 * c) * (growth - 1.0);
    Ok(a.girsanov_prefactor(c_b) * bracket)
}

/// The same divergence by Simpson quadrature of the time-integrated second moment.
pub fn linear_sde_kl_quadrature(a: &LinearSdeSpec, c_b: f64, n_nodes: usize) -> Result<f64> {
    a.validate()?;
    let integral = simpson(|t| a.second_moment(t), 0.0, 1.0, n_nodes)?;
    Ok(a.girsanov_prefactor(c_b) * integral)
}

/// Forward and reverse divergences between the A and B drift coefficients.
pub fn linear_sde_kl_pair(base: &LinearSdeSpec, c_a: f64, c_b: f64) -> Result<(f64, f64)> {
    let fwd = linear_sde_kl_closed_form(&base.with_drift(c_a), c_b)?;
    let rev = linear_sde_kl_closed_form(&base.with_drift(c_b), c_a)?;
    Ok((fwd, rev))
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::measures::matern_covariance;
    use crate::velocity::VelocityField;

    fn case(dim: usize, c_a: f64, g: f64) -> LinearSdeSpec {
        LinearSdeSpec {
            drift_coeff: c_a,
            diffusion: g,
            dim,
            init_mean: 2.0,
            init_var: 0.2,
        }
    }

    #[test]
    fn linear_sde_case_one() {
        let fwd = linear_sde_kl_closed_form(&case(1, 0.01, 0.75), 1.5).unwrap();
        let rev = linear_sde_kl_closed_form(&case(1, 1.5, 0.75), 0.01).unwrap();
        assert!((fwd - 8.93).abs() < 0.005, "{fwd}");
        assert!((rev - 54.71).abs() < 0.005, "{rev}");
        let d2 = linear_sde_kl_closed_form(&case(2, 0.01, 0.75), 1.5).unwrap();
        assert!((d2 - 2.0 * fwd).abs() < 1e-12);
        assert_eq!(linear_sde_kl_closed_form(&case(1, 0.7, 0.75), 0.7).unwrap(), 0.0);
    }

    #[test]
    fn linear_sde_case_two() {
        let (fwd, rev) = linear_sde_kl_pair(&case(1, 0.0, 0.75), 0.1, 2.0).unwrap();
        assert!((fwd - 15.89).abs() < 0.005);
        assert!((rev - 186.19).abs() < 0.005);
    }

    #[test]
    fn zero_drift_needs_quadrature() {
        let spec = LinearSdeSpec {
            drift_coeff: 0.0,
            diffusion: 1.0,
            dim: 1,
            init_mean: 0.0,
            init_var: 1.0,
        };
        assert!(matches!(
            linear_sde_kl_closed_form(&spec, 1.0),
            Err(FklError::ClosedFormUnavailable(_))
        ));
        let q = linear_sde_kl_quadrature(&spec, 1.0, 101).unwrap();
        assert!((q - 0.75).abs() < 1e-13);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let spec = case(1, 0.01, 0.75);
        let q = linear_sde_kl_quadrature(&spec, 1.5, 10_001).unwrap();
        let c = linear_sde_kl_closed_form(&spec, 1.5).unwrap();
        assert!((q - c).abs() < 1e-10 * c);
        assert!((q - 8.9307).abs() < 1e-3);
        assert_eq!(linear_sde_kl_quadrature(&spec, 0.01, 101).unwrap(), 0.0);
        assert!(linear_sde_kl_quadrature(&spec, 1.5, 100).is_err());
    }

    #[test]
    fn mean_shift_kl_of_a_sine() {
        let cov = matern_covariance(0.5, 1.0, 1.0, 8, 1).unwrap();
        let (s, f0) = (1.5, 3);
        // sin(2π f0 x) has coefficient −i s/2 at k = f0
        let m = SpectralCoeffs::single_mode(8, 1, f0, 0, Complex64::new(0.0, -0.5 * s)).unwrap();
        let kl = gaussian_mean_shift_kl(&m, &cov).unwrap();
        assert!((kl - s * s / (4.0 * cov.lambda(f0, 0))).abs() < 1e-12 * kl);
        assert_eq!(gaussian_mean_shift_kl(&SpectralCoeffs::zeros(8, 1), &cov).unwrap(), 0.0);
        // quadratic in the shift, invariant under sign flip
        let kl3 = gaussian_mean_shift_kl(&m.scaled(3.0), &cov).unwrap();
        assert!((kl3 / kl - 9.0).abs() < 1e-12);
        assert_eq!(gaussian_mean_shift_kl(&m.scaled(-1.0), &cov).unwrap(), kl);
    }

    #[test]
    fn mismatch_boundary_values() {
        let data = matern_covariance(0.3, 1.0, 1.5, 4, 1).unwrap();
        let noise = matern_covariance(1.0, 1.0, 0.5, 4, 1).unwrap();
        let m = SpectralCoeffs::single_mode(4, 1, 2, 0, Complex64::new(0.2, -0.7)).unwrap();
        let at1 = gaussian_velocity_mismatch(&m, &data, &noise, 1.0).unwrap();
        assert_eq!(at1.l2_norm_sq(), 0.0);
        let at0 = gaussian_velocity_mismatch(&m, &data, &noise, 0.0).unwrap();
        assert!((&at0 - &m).l2_norm_sq() < 1e-30);
        let half = gaussian_velocity_mismatch(&m, &data, &data, 0.5).unwrap();
        assert!((&half - &m).l2_norm_sq() < 1e-28);
        assert!(gaussian_velocity_mismatch(&m, &data, &noise, 1.5).is_err());
    }

    #[test]
    fn analytic_fields_differ_by_the_mismatch() {
        let data = matern_covariance(0.3, 1.0, 1.5, 5, 2).unwrap();
        let noise = matern_covariance(1.0, 1.0, 0.5, 5, 2).unwrap();
        let m = SpectralCoeffs::single_mode(5, 2, 1, 1, Complex64::new(0.0, -0.75)).unwrap();
        let fa = gaussian_analytic_field(&m, &data, &noise).unwrap();
        let fb = gaussian_analytic_field(&SpectralCoeffs::zeros(5, 2), &data, &noise).unwrap();
        let x = SpectralCoeffs::single_mode(5, 2, 3, 0, Complex64::new(1.1, 0.4)).unwrap();
        for t in [0.0, 0.3, 0.9] {
            let diff = &fa.eval(&x, t).unwrap() - &fb.eval(&x, t).unwrap();
            let want = gaussian_velocity_mismatch(&m, &data, &noise, t).unwrap();
            assert!((&diff - &want).l2_norm_sq() < 1e-28);
        }
        // boundary identity v(x, 1) = x
        let v1 = fa.eval(&x, 1.0).unwrap();
        assert!((&v1 - &x).l2_norm_sq().sqrt() < 1e-12);
        let zero = SpectralCoeffs::zeros(5, 2);
        assert_eq!(fb.eval(&zero, 0.4).unwrap().l2_norm_sq(), 0.0);
        assert!(fa.eval(&x, -0.1).is_err());
    }

    #[test]
    fn single_mode_identity_holds_for_any_noise_level() {
        // κ = c reduces to ∫ t(1−t)/(2t²−2t+1)² dt = 1/2
        let half = adaptive_simpson(|t| t * (1.0 - t) / (2.0 * t * t - 2.0 * t + 1.0).powi(2), 0.0, 1.0, 1e-12);
        assert!((half - 0.5).abs() < 1e-10);
        let (m, c) = (1.0, 0.05);
        for kappa in [c, 4.0 * c, c / 4.0, 10.0, 1e-3] {
            let v = single_mode_fkl_integral(m, c, kappa, 1e-10);
            assert!((v - m * m / (2.0 * c)).abs() < 1e-8, "kappa {kappa}: {v}");
        }
    }

    #[test]
    fn mode_sum_of_mismatch_reproduces_mean_shift_kl() {
        // full identity across several complex modes, by quadrature in t
        let data = matern_covariance(0.2, 2.0, 1.2, 6, 1).unwrap();
        let noise = matern_covariance(1.0, 1.0, 0.6, 6, 1).unwrap();
        let coeffs: Vec<Complex64> = (0..6).map(|k| Complex64::new(0.1 * k as f64, if k == 0 { 0.0 } else { -0.05 })).collect();
        let m = SpectralCoeffs::new(6, 1, coeffs).unwrap();
        let integrand = |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let v = gaussian_velocity_mismatch(&m, &data, &noise, t).unwrap();
            t / (1.0 - t) * cm_norm_sq(&v, &noise, 6)
        };
        let fkl = adaptive_simpson(integrand, 0.0, 1.0, 1e-10);
        let kl = gaussian_mean_shift_kl(&m, &data).unwrap();
        assert!((fkl - kl).abs() < 1e-7 * kl.max(1.0), "{fkl} vs {kl}");
    }
}
