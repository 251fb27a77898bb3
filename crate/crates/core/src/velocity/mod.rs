//! Velocity fields `v: H x [0, 1] -> H` of the linear flow-matching path.
//!
//! Three realizations are provided: the closed-form Gaussian field, the exact
//! velocity of an empirical sample pool, and a trained spectral network.

mod analytic;
mod network;
mod softmax;
mod train;
mod weights;

pub use analytic::GaussianVelocityField;
pub use network::{time_embedding, Activation, Mlp, Tape, TIME_FEATURES, TIME_FREQUENCIES};
pub use softmax::{EmpiricalSoftmaxField, DEFAULT_T_COLLAPSE};
pub use train::{train_field, TrainConfig, TrainOutcome, TrainTimeSchedule, TrainedField, TrainedNetwork};
pub use weights::{read_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use sha2::{Digest, Sha256};

use crate::error::{FklError, Result};
use crate::measures::{cm_norm_sq, DiagonalCovariance};
use crate::spectral::SpectralCoeffs;

pub trait VelocityField: Send + Sync {
    fn n_modes(&self) -> usize;

    fn out_dim(&self) -> usize;

    /// Velocity at `(x, t)`. Deterministic for a frozen field.
    fn eval(&self, x: &SpectralCoeffs, t: f64) -> Result<SpectralCoeffs>;

    /// Whether `eval(x, 1) == x` holds by construction.
    fn exact_boundary(&self) -> bool {
        false
    }

    /// Short content hash identifying the field's frozen state.
    fn fingerprint(&self) -> String;

    fn check_input(&self, x: &SpectralCoeffs) -> Result<()> {
        if x.n_modes() != self.n_modes() || x.out_dim() != self.out_dim() {
            return Err(FklError::Shape(format!(
                "field expects {}x{} coefficients, got {}x{}",
                self.n_modes(),
                self.out_dim(),
                x.n_modes(),
                x.out_dim()
            )));
        }
        Ok(())
    }
}

/// `‖v_a(x,t) − v_b(x,t)‖²` in the Cameron–Martin norm of the noise, summed
/// over the first `n_sum_modes` wavenumbers.
pub fn field_difference_cm(
    field_a: &dyn VelocityField,
    field_b: &dyn VelocityField,
    x: &SpectralCoeffs,
    t: f64,
    noise_cov: &DiagonalCovariance,
    n_sum_modes: usize,
) -> Result<f64> {
    check_pair(field_a, field_b)?;
    if n_sum_modes == 0 || n_sum_modes > field_a.n_modes() || n_sum_modes > noise_cov.n_modes() {
        return Err(FklError::Shape(format!(
            "cannot sum {n_sum_modes} modes of a {}-mode field",
            field_a.n_modes()
        )));
    }
    let va = field_a.eval(x, t)?;
    let vb = field_b.eval(x, t)?;
    let diff = &va - &vb;
    let diff = if noise_cov.n_modes() == diff.n_modes() {
        diff
    } else {
        diff.resized(noise_cov.n_modes())
    };
    Ok(cm_norm_sq(&diff, noise_cov, n_sum_modes))
}

pub(crate) fn check_pair(a: &dyn VelocityField, b: &dyn VelocityField) -> Result<()> {
    if a.n_modes() != b.n_modes() || a.out_dim() != b.out_dim() {
        return Err(FklError::Shape(format!(
            "fields disagree on shape: {}x{} vs {}x{}",
            a.n_modes(),
            a.out_dim(),
            b.n_modes(),
            b.out_dim()
        )));
    }
    Ok(())
}

pub(crate) fn hash_floats<'a>(tag: &str, chunks: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    for chunk in chunks {
        for v in chunk {
            h.update(v.to_le_bytes());
        }
    }
    let digest = h.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{tag}:{hex}")
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(FklError::TimeOutOfRange(t))
    }
}
