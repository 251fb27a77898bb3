//! Closed-form reference values, frozen before the estimators were written.

use fkl_core::oracles::{
    gaussian_mean_shift_kl, linear_sde_kl_closed_form, linear_sde_kl_pair, linear_sde_kl_quadrature,
    single_mode_fkl_integral, LinearSdeSpec,
};
use fkl_core::quad::adaptive_simpson;
use fkl_core::{matern_covariance, Complex64, DiagonalCovariance, SpectralCoeffs};

fn base(dim: usize, g: f64) -> LinearSdeSpec {
    LinearSdeSpec { drift_coeff: 0.0, diffusion: g, dim, init_mean: 2.0, init_var: 0.2 }
}

/// `(D, c_A, c_B, g, forward, reverse)` rounded to two decimals.
const SDE_TABLE: [(usize, f64, f64, f64, f64, f64); 5] = [
    (1, 0.01, 1.5, 0.75, 8.93, 54.71),
    (1, 0.1, 2.0, 0.75, 15.89, 186.19),
    (2, 0.01, 1.5, 0.75, 17.86, 109.43),
    (3, 0.01, 1.5, 0.75, 26.79, 164.14),
    (5, 0.01, 1.5, 1.0, 26.34, 158.22),
];

#[test]
fn linear_sde_table_to_two_decimals() {
    for (d, ca, cb, g, fwd, rev) in SDE_TABLE {
        let (f, r) = linear_sde_kl_pair(&base(d, g), ca, cb).unwrap();
        assert!((f - fwd).abs() <= 0.01, "D={d}: forward {f} vs {fwd}");
        assert!((r - rev).abs() <= 0.01, "D={d}: reverse {r} vs {rev}");
    }
}

#[test]
fn simpson_matches_closed_form() {
    for (d, ca, cb, g, _, _) in SDE_TABLE {
        for (c, other) in [(ca, cb), (cb, ca)] {
            let spec = base(d, g).with_drift(c);
            let exact = linear_sde_kl_closed_form(&spec, other).unwrap();
            let quad = linear_sde_kl_quadrature(&spec, other, 10_001).unwrap();
            assert!(((quad - exact) / exact).abs() <= 1e-10, "{quad} vs {exact}");
        }
    }
}

#[test]
fn equal_drifts_give_zero() {
    let (f, r) = linear_sde_kl_pair(&base(1, 0.75), 1.0, 1.0).unwrap();
    assert_eq!((f, r), (0.0, 0.0));
}

#[test]
fn second_moment_starts_at_initial_law() {
    let spec = base(3, 0.75).with_drift(1.5);
    // D·(m₀² + v₀)
    assert!((spec.second_moment(0.0) - 3.0 * (4.0 + 0.2)).abs() < 1e-12);
}

#[test]
fn single_mode_identity_matched_noise() {
    // ∫₀¹ t(1−t)/(2t²−2t+1)² dt = 1/2
    let half = adaptive_simpson(|t| t * (1.0 - t) / (2.0 * t * t - 2.0 * t + 1.0).powi(2), 0.0, 1.0, 1e-12);
    assert!((half - 0.5).abs() < 1e-10);
    let v = single_mode_fkl_integral(1.0, 0.05, 0.05, 1e-10);
    assert!((v - 10.0).abs() < 1e-6, "{v}");
}

#[test]
fn single_mode_identity_other_noise() {
    for kappa in [0.2, 0.0125] {
        let v = single_mode_fkl_integral(1.0, 0.05, kappa, 1e-10);
        assert!((v - 10.0).abs() < 1e-6, "kappa={kappa}: {v}");
    }
}

fn sine_mean(dims: usize, f0: usize, s: f64, n_modes: usize) -> SpectralCoeffs {
    let mut c = vec![Complex64::new(0.0, 0.0); n_modes * dims];
    for d in 0..dims {
        c[f0 * dims + d] = Complex64::new(0.0, -s / 2.0);
    }
    SpectralCoeffs::new(n_modes, dims, c).unwrap()
}

#[test]
fn gaussian_scaling_and_additivity() {
    let kl = |dims, f0, s| {
        let cov = matern_covariance(1.0, 1.0, 1.0, 16, dims).unwrap();
        gaussian_mean_shift_kl(&sine_mean(dims, f0, s, 16), &cov).unwrap()
    };
    let one = kl(1, 1, 0.5);
    assert!((kl(1, 1, 1.5) / one - 9.0).abs() < 1e-12);
    for d in [2, 3, 5, 10] {
        assert!((kl(d, 1, 0.5) / one - d as f64).abs() < 1e-12);
    }
    // sin(2πx) has ‖m‖² = 1/2 and c₁ = 1/(1 + 4π²)
    let expected = 0.5 * 0.25 * 0.5 * (1.0 + 4.0 * std::f64::consts::PI.powi(2));
    assert!((one - expected).abs() < 1e-12, "{one} vs {expected}");
}

#[test]
fn zero_shift_is_zero() {
    let cov = DiagonalCovariance::identity(4, 2).unwrap();
    assert_eq!(gaussian_mean_shift_kl(&SpectralCoeffs::zeros(4, 2), &cov).unwrap(), 0.0);
}
