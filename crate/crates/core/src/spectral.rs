//! Discretized functions on the unit interval and their truncated Fourier
//! representation.
//!
//! A function sampled at `M` points is mapped to one-sided coefficients
//! `f_k = (1/M) Σ_j f(x_j) exp(-2πi k j / M)` for `k = 0..K-1`. The negative
//! wavenumbers are implicit (`f_{-k} = conj(f_k)`), so every squared norm
//! counts modes `k ≥ 1` twice.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};

/// Uniform grid on `[0, 1]`; the original horizon is kept as metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    m_points: usize,
    physical_horizon: f64,
}

impl TimeGrid {
    pub fn new(m_points: usize, physical_horizon: f64) -> Result<Self> {
        if m_points < 2 {
            return Err(FklError::InvalidParameter(format!(
                "grid needs at least 2 points, got {m_points}"
            )));
        }
        if !(physical_horizon > 0.0 && physical_horizon.is_finite()) {
            return Err(FklError::InvalidParameter(format!(
                "physical horizon must be positive, got {physical_horizon}"
            )));
        }
        Ok(Self {
            m_points,
            physical_horizon,
        })
    }

    /// Grid on `[0, 1]` with unit horizon.
    pub fn unit(m_points: usize) -> Result<Self> {
        Self::new(m_points, 1.0)
    }

    pub fn m_points(&self) -> usize {
        self.m_points
    }

    pub fn physical_horizon(&self) -> f64 {
        self.physical_horizon
    }

    /// Rescaled time of sample `j`, `j / (M - 1)`.
    pub fn location(&self, j: usize) -> f64 {
        j as f64 / (self.m_points - 1) as f64
    }

    pub fn locations(&self) -> Vec<f64> {
        (0..self.m_points).map(|j| self.location(j)).collect()
    }

    /// Position of sample `j` on the Fourier basis' periodic domain, `j / M`.
    pub fn basis_location(&self, j: usize) -> f64 {
        j as f64 / self.m_points as f64
    }

    /// Largest number of one-sided modes this grid resolves.
    pub fn max_modes(&self) -> usize {
        self.m_points / 2 + 1
    }

    /// Index of the grid point at rescaled time `tau`, if `tau` lies on the grid.
    pub fn index_of(&self, tau: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&tau) {
            return None;
        }
        let pos = tau * (self.m_points - 1) as f64;
        let j = pos.round();
        if (pos - j).abs() <= 1e-9 * (self.m_points as f64) {
            Some(j as usize)
        } else {
            None
        }
    }
}

/// Real samples `values[j * out_dim + d]` of an `R^D`-valued function.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    grid: TimeGrid,
    out_dim: usize,
    values: Vec<f64>,
}

impl FunctionSample {
    pub fn new(grid: TimeGrid, out_dim: usize, values: Vec<f64>) -> Result<Self> {
        if out_dim == 0 {
            return Err(FklError::InvalidParameter("out_dim must be at least 1".into()));
        }
        if values.len() != grid.m_points() * out_dim {
            return Err(FklError::Shape(format!(
                "expected {} values for {} points x {} dims, got {}",
                grid.m_points() * out_dim,
                grid.m_points(),
                out_dim,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(FklError::InvalidParameter(format!(
                "non-finite sample value at flat index {bad}"
            )));
        }
        Ok(Self {
            grid,
            out_dim,
            values,
        })
    }

    /// Samples `f` at the basis locations `j / M`.
    pub fn from_fn(grid: TimeGrid, out_dim: usize, f: impl Fn(f64, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.m_points() * out_dim);
        for j in 0..grid.m_points() {
            let x = grid.basis_location(j);
            for d in 0..out_dim {
                values.push(f(x, d));
            }
        }
        Self::new(grid, out_dim, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, j: usize, d: usize) -> f64 {
        self.values[j * self.out_dim + d]
    }

    /// Time-domain mean of `|f(x_j)|^2`, the discrete L² norm.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.grid.m_points() as f64
    }
}

/// How a non-periodic signal is prepared before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// Transform the samples as they are, treating them as one period.
    #[default]
    None,
    /// Even reflection `f_0..f_{M-1}, f_{M-2}..f_1` (length `2M - 2`), which
    /// removes the jump at the period boundary.
    Mirror,
}

impl Extension {
    fn period(self, m_points: usize) -> usize {
        match self {
            Extension::None => m_points,
            Extension::Mirror => 2 * m_points - 2,
        }
    }
}

/// One-sided Fourier coefficients, stored `coeffs[k * out_dim + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    n_modes: usize,
    out_dim: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn new(n_modes: usize, out_dim: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if n_modes == 0 || out_dim == 0 {
            return Err(FklError::InvalidParameter(
                "n_modes and out_dim must be positive".into(),
            ));
        }
        if coeffs.len() != n_modes * out_dim {
            return Err(FklError::Shape(format!(
                "expected {} coefficients, got {}",
                n_modes * out_dim,
                coeffs.len()
            )));
        }
        if coeffs[..out_dim].iter().any(|c| c.im != 0.0) {
            return Err(FklError::InvalidParameter(
                "k = 0 coefficient of a real signal must have zero imaginary part".into(),
            ));
        }
        Ok(Self {
            n_modes,
            out_dim,
            coeffs,
        })
    }

    pub fn zeros(n_modes: usize, out_dim: usize) -> Self {
        assert!(n_modes > 0 && out_dim > 0, "empty coefficient array");
        Self {
            n_modes,
            out_dim,
            coeffs: vec![Complex64::new(0.0, 0.0); n_modes * out_dim],
        }
    }

    /// Single nonzero entry at `(k, d)`.
    pub fn single_mode(n_modes: usize, out_dim: usize, k: usize, d: usize, value: Complex64) -> Result<Self> {
        let mut c = Self::zeros(n_modes, out_dim);
        if k >= n_modes || d >= out_dim {
            return Err(FklError::Shape(format!("mode ({k}, {d}) out of range")));
        }
        if k == 0 && value.im != 0.0 {
            return Err(FklError::InvalidParameter(
                "k = 0 coefficient must be real".into(),
            ));
        }
        c.coeffs[k * out_dim + d] = value;
        Ok(c)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, k: usize, d: usize) -> Complex64 {
        self.coeffs[k * self.out_dim + d]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_modes == other.n_modes && self.out_dim == other.out_dim
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(FklError::Shape(format!(
                "{}x{} vs {}x{} coefficients",
                self.n_modes, self.out_dim, other.n_modes, other.out_dim
            )))
        }
    }

    /// Keeps the first `n_modes` wavenumbers, zero-padding if more are requested.
    pub fn resized(&self, n_modes: usize) -> Self {
        let mut out = Self::zeros(n_modes, self.out_dim);
        let keep = n_modes.min(self.n_modes) * self.out_dim;
        out.coeffs[..keep].copy_from_slice(&self.coeffs[..keep]);
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            n_modes: self.n_modes,
            out_dim: self.out_dim,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert!(self.same_shape(other), "shape mismatch in linear combination");
        Self {
            n_modes: self.n_modes,
            out_dim: self.out_dim,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x * a + y * b)
                .collect(),
        }
    }

    /// The linear path `t * x1 + (1 - t) * x0`.
    pub fn interpolate(x0: &Self, x1: &Self, t: f64) -> Self {
        x1.lin_comb(t, x0, 1.0 - t)
    }

    /// Squared L² norm with one-sided Hermitian accounting.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = if i < self.out_dim { 1.0 } else { 2.0 };
                w * c.norm_sqr()
            })
            .sum()
    }

    /// Real feature vector of length `(2K - 1) * D`: for each dimension the
    /// real `k = 0` coefficient followed by `(re, im)` pairs for `k ≥ 1`.
    pub fn to_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.feature_len());
        for d in 0..self.out_dim {
            out.push(self.get(0, d).re);
            for k in 1..self.n_modes {
                let c = self.get(k, d);
                out.push(c.re);
                out.push(c.im);
            }
        }
        out
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.n_modes, self.out_dim)
    }

    pub fn from_features(n_modes: usize, out_dim: usize, features: &[f64]) -> Result<Self> {
        if features.len() != feature_len(n_modes, out_dim) {
            return Err(FklError::Shape(format!(
                "expected {} features, got {}",
                feature_len(n_modes, out_dim),
                features.len()
            )));
        }
        let mut out = Self::zeros(n_modes, out_dim);
        let per_dim = 2 * n_modes - 1;
        for d in 0..out_dim {
            let f = &features[d * per_dim..(d + 1) * per_dim];
            out.coeffs[d] = Complex64::new(f[0], 0.0);
            for k in 1..n_modes {
                out.coeffs[k * out_dim + d] = Complex64::new(f[2 * k - 1], f[2 * k]);
            }
        }
        Ok(out)
    }
}

pub fn feature_len(n_modes: usize, out_dim: usize) -> usize {
    (2 * n_modes - 1) * out_dim
}

impl Add for &SpectralCoeffs {
    type Output = SpectralCoeffs;
    fn add(self, rhs: Self) -> SpectralCoeffs {
        self.lin_comb(1.0, rhs, 1.0)
    }
}

impl Sub for &SpectralCoeffs {
    type Output = SpectralCoeffs;
    fn sub(self, rhs: Self) -> SpectralCoeffs {
        self.lin_comb(1.0, rhs, -1.0)
    }
}

impl Mul<f64> for &SpectralCoeffs {
    type Output = SpectralCoeffs;
    fn mul(self, rhs: f64) -> SpectralCoeffs {
        self.scaled(rhs)
    }
}

/// Truncated transform without boundary extension.
pub fn to_spectral(f: &FunctionSample, n_modes: usize) -> Result<SpectralCoeffs> {
    to_spectral_with(f, n_modes, Extension::None)
}

pub fn to_spectral_with(f: &FunctionSample, n_modes: usize, extension: Extension) -> Result<SpectralCoeffs> {
    let m = f.grid.m_points();
    let period = extension.period(m);
    let max_modes = period / 2 + 1;
    if n_modes == 0 || n_modes > max_modes {
        return Err(FklError::Resolution {
            n_modes,
            m_points: period,
            max_modes,
        });
    }
    let out_dim = f.out_dim;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(period);
    let mut buf = vec![Complex64::new(0.0, 0.0); period];
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n_modes * out_dim];
    let scale = 1.0 / period as f64;
    for d in 0..out_dim {
        for (j, slot) in buf.iter_mut().enumerate() {
            let src = if j < m { j } else { period - j };
            *slot = Complex64::new(f.value(src, d), 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_modes {
            coeffs[k * out_dim + d] = buf[k] * scale;
        }
        coeffs[d].im = 0.0;
    }
    SpectralCoeffs::new(n_modes, out_dim, coeffs)
}

/// Evaluates the truncated series at the grid's basis locations.
pub fn from_spectral(c: &SpectralCoeffs, grid: &TimeGrid) -> FunctionSample {
    from_spectral_with(c, grid, Extension::None)
}

pub fn from_spectral_with(c: &SpectralCoeffs, grid: &TimeGrid, extension: Extension) -> FunctionSample {
    let m = grid.m_points();
    let period = extension.period(m);
    let out_dim = c.out_dim();
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(period);
    let mut buf = vec![Complex64::new(0.0, 0.0); period];
    let mut values = vec![0.0; m * out_dim];
    // modes beyond the Nyquist index alias and are dropped
    let usable = c.n_modes().min(period / 2 + 1);
    for d in 0..out_dim {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        buf[0] = c.get(0, d);
        for k in 1..usable {
            let v = c.get(k, d);
            if 2 * k == period {
                buf[k] = Complex64::new(v.re, 0.0);
            } else {
                buf[k] = v;
                buf[period - k] = v.conj();
            }
        }
        fft.process(&mut buf);
        for j in 0..m {
            values[j * out_dim + d] = buf[j].re;
        }
    }
    FunctionSample {
        grid: *grid,
        out_dim,
        values,
    }
}

/// Squared L² norm of a coefficient array.
pub fn l2_norm_sq(c: &SpectralCoeffs) -> f64 {
    c.l2_norm_sq()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    /// Direct O(MK) evaluation of the coefficient definition.
    fn dft_oracle(f: &FunctionSample, n_modes: usize) -> Vec<Complex64> {
        let m = f.grid().m_points();
        let mut out = vec![Complex64::new(0.0, 0.0); n_modes * f.out_dim()];
        for k in 0..n_modes {
            for d in 0..f.out_dim() {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    let ang = -2.0 * PI * (k * j) as f64 / m as f64;
                    acc += Complex64::from_polar(f.value(j, d), ang);
                }
                out[k * f.out_dim() + d] = acc / m as f64;
            }
        }
        out
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let grid = TimeGrid::unit(37).unwrap();
        let f = FunctionSample::from_fn(grid, 2, |_, d| 1.5 + d as f64).unwrap();
        let c = to_spectral(&f, 10).unwrap();
        assert!((c.get(0, 0).re - 1.5).abs() < 1e-14);
        assert!((c.get(0, 1).re - 2.5).abs() < 1e-14);
        for k in 1..10 {
            for d in 0..2 {
                assert!(c.get(k, d).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn sine_has_single_imaginary_mode() {
        let grid = TimeGrid::unit(256).unwrap();
        let f = FunctionSample::from_fn(grid, 1, |x, _| (2.0 * PI * x).sin()).unwrap();
        let c = to_spectral(&f, 129).unwrap();
        let oracle = dft_oracle(&f, 129);
        for (a, b) in c.coeffs().iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((c.get(1, 0) - Complex64::new(0.0, -0.5)).norm() < 1e-10);
        for k in (0..129).filter(|&k| k != 1) {
            assert!(c.get(k, 0).norm() < 1e-10, "mode {k}");
        }
    }

    #[test]
    fn cosine_energy_sits_on_mode_three() {
        let grid = TimeGrid::unit(128).unwrap();
        let f = FunctionSample::from_fn(grid, 1, |x, _| (2.0 * PI * 3.0 * x).cos()).unwrap();
        let c = to_spectral(&f, 65).unwrap();
        assert!((c.get(3, 0).norm() - 0.5).abs() < 1e-12);
        let rest: f64 = (0..65).filter(|&k| k != 3).map(|k| c.get(k, 0).norm_sqr()).sum();
        assert!(rest < 1e-20);
    }

    #[test]
    fn too_many_modes_is_a_resolution_error() {
        let grid = TimeGrid::unit(16).unwrap();
        let f = FunctionSample::from_fn(grid, 1, |x, _| x).unwrap();
        assert!(to_spectral(&f, 9).is_ok());
        assert!(matches!(to_spectral(&f, 10), Err(FklError::Resolution { .. })));
        assert!(to_spectral_with(&f, 16, Extension::Mirror).is_ok());
    }

    #[test]
    fn single_mode_reconstructs_sine() {
        let grid = TimeGrid::unit(200).unwrap();
        let c = SpectralCoeffs::single_mode(8, 1, 1, 0, Complex64::new(0.0, -0.5)).unwrap();
        let f = from_spectral(&c, &grid);
        for j in 0..200 {
            let want = (2.0 * PI * grid.basis_location(j)).sin();
            assert!((f.value(j, 0) - want).abs() < 1e-10);
        }
        let z = from_spectral(&SpectralCoeffs::zeros(8, 3), &grid);
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_norm_examples() {
        let grid = TimeGrid::unit(64).unwrap();
        let s = FunctionSample::from_fn(grid, 1, |x, _| (2.0 * PI * x).sin()).unwrap();
        assert!((to_spectral(&s, 20).unwrap().l2_norm_sq() - 0.5).abs() < 1e-12);
        let c = FunctionSample::from_fn(grid, 1, |_, _| -3.0).unwrap();
        assert!((to_spectral(&c, 20).unwrap().l2_norm_sq() - 9.0).abs() < 1e-12);
        assert_eq!(SpectralCoeffs::zeros(5, 2).l2_norm_sq(), 0.0);
    }

    #[test]
    fn mirror_extension_round_trips_non_periodic_ramp() {
        let grid = TimeGrid::unit(33).unwrap();
        let f = FunctionSample::from_fn(grid, 1, |x, _| 2.0 * x - 0.3).unwrap();
        let c = to_spectral_with(&f, 33, Extension::Mirror).unwrap();
        let back = from_spectral_with(&c, &grid, Extension::Mirror);
        for j in 0..33 {
            assert!((back.value(j, 0) - f.value(j, 0)).abs() < 1e-12);
        }
        // reflected ramp is continuous, so its spectrum decays like k^-2
        assert!(c.get(31, 0).norm() < 1e-3 * c.get(1, 0).norm() * 31.0);
    }

    #[test]
    fn grid_index_lookup() {
        let grid = TimeGrid::new(401, 8.0).unwrap();
        assert_eq!(grid.index_of(0.0), Some(0));
        assert_eq!(grid.index_of(0.125), Some(50));
        assert_eq!(grid.index_of(1.0), Some(400));
        assert_eq!(grid.index_of(0.1251), None);
        assert!(TimeGrid::new(1, 1.0).is_err());
        assert!(TimeGrid::new(4, 0.0).is_err());
    }

    fn random_coeffs(n_modes: usize, out_dim: usize, raw: &[f64]) -> SpectralCoeffs {
        let feats: Vec<f64> = raw.iter().take(feature_len(n_modes, out_dim)).copied().collect();
        SpectralCoeffs::from_features(n_modes, out_dim, &feats).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            m in 8usize..80,
            out_dim in 1usize..3,
            raw in proptest::collection::vec(-2.0f64..2.0, 200),
        ) {
            // keep strictly below Nyquist so every stored mode has a partner
            let n_modes = (m - 1) / 2 + 1;
            prop_assume!(feature_len(n_modes, out_dim) <= raw.len());
            let c = random_coeffs(n_modes, out_dim, &raw);
            let grid = TimeGrid::unit(m).unwrap();
            let back = to_spectral(&from_spectral(&c, &grid), n_modes).unwrap();
            for (a, b) in back.coeffs().iter().zip(c.coeffs()) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }

        #[test]
        fn parseval_for_band_limited_signals(
            raw in proptest::collection::vec(-1.0f64..1.0, 64),
            out_dim in 1usize..3,
        ) {
            let n_modes = 10;
            let c = random_coeffs(n_modes, out_dim, &raw);
            let grid = TimeGrid::unit(64).unwrap();
            let f = from_spectral(&c, &grid);
            let energy = to_spectral(&f, 33).unwrap().l2_norm_sq();
            prop_assert!((energy - f.mean_square()).abs() < 1e-8);
        }

        #[test]
        fn transform_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            raw in proptest::collection::vec(-1.0f64..1.0, 96),
        ) {
            let grid = TimeGrid::unit(48).unwrap();
            let f = FunctionSample::new(grid, 1, raw[..48].to_vec()).unwrap();
            let g = FunctionSample::new(grid, 1, raw[48..].to_vec()).unwrap();
            let mix: Vec<f64> = f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect();
            let h = FunctionSample::new(grid, 1, mix).unwrap();
            let lhs = to_spectral(&h, 20).unwrap();
            let rhs = to_spectral(&f, 20).unwrap().lin_comb(a, &to_spectral(&g, 20).unwrap(), b);
            for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn energy_grows_with_retained_modes(raw in proptest::collection::vec(-1.0f64..1.0, 40)) {
            let grid = TimeGrid::unit(40).unwrap();
            let f = FunctionSample::new(grid, 1, raw).unwrap();
            let mut prev = 0.0;
            for n in 1..=21 {
                let e = to_spectral(&f, n).unwrap().l2_norm_sq();
                prop_assert!(e + 1e-15 >= prev);
                prev = e;
            }
        }
    }
}
