//! Divergences between path measures estimated from flow-matching velocity
//! fields, with the supporting spectral machinery, closed-form references,
//! stochastic simulators and snapshot metrics.
//!
//! Functions on `[0, 1]` are represented by truncated one-sided Fourier
//! coefficients ([`spectral`]); Gaussian reference measures are diagonal in
//! that basis ([`measures`]); velocity fields come in analytic, empirical and
//! trained flavors ([`velocity`]); [`fkl`] turns a pair of fields into a
//! Monte Carlo divergence estimate.

pub mod error;
pub mod fkl;
pub mod io;
pub mod metrics;
pub mod measures;
pub mod oracles;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod spectral;
pub mod velocity;

pub use error::{FklError, Result};
pub use num_complex::Complex64;
pub use fkl::{estimate_fkl, FklConfig, FklEstimate, FunctionSource, PoolSource, TimeSampler};
pub use measures::{cm_norm_sq, matern_covariance, DiagonalCovariance, GaussianMeasure};
pub use spectral::{from_spectral, to_spectral, FunctionSample, SpectralCoeffs, TimeGrid};
pub use velocity::{EmpiricalSoftmaxField, GaussianVelocityField, TrainedField, VelocityField};
