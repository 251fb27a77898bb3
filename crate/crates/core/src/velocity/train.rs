//! Conditional flow-matching training of a two-field spectral network.
//!
//! One network serves both measures through a one-hot condition input. The
//! raw output `m(x, t, c)` is wrapped as `v(x, t) = x + m(x, t, c) − m(x, 1, c)`
//! so that `v(x, 1) = x` holds exactly for every weight state.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FklError, Result};
use crate::fkl::TimeSampler;
use crate::measures::{DiagonalCovariance, GaussianMeasure};
use crate::rng::{self, Rng};
use crate::spectral::{feature_len, SpectralCoeffs};

use super::network::{time_embedding, Activation, Mlp, Tape, TIME_FEATURES};
use super::{check_time, hash_floats, VelocityField};

const N_CONDITIONS: usize = 2;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Samples per gradient chunk; chunks are reduced in index order.
const GRAD_CHUNK: usize = 8;

/// How training times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TrainTimeSchedule {
    /// Logit-normal for the first `fraction` of iterations, uniform afterwards.
    Curriculum { mean: f64, std: f64, fraction: f64 },
    Uniform,
    /// Density proportional to `t/(1−t)`, emphasizing the times the
    /// divergence integrand weights most.
    Importance { t_min: f64, t_max: f64 },
}

impl Default for TrainTimeSchedule {
    fn default() -> Self {
        TrainTimeSchedule::Curriculum {
            mean: 0.8,
            std: 1.0,
            fraction: 0.4,
        }
    }
}

impl TrainTimeSchedule {
    fn sample(&self, iteration: usize, iterations: usize, rng: &mut Rng) -> f64 {
        match *self {
            TrainTimeSchedule::Curriculum { mean, std, fraction } => {
                if (iteration as f64) < fraction * iterations as f64 {
                    let z: f64 = rng.sample(StandardNormal);
                    1.0 / (1.0 + (-(mean + std * z)).exp())
                } else {
                    rng.random::<f64>()
                }
            }
            TrainTimeSchedule::Uniform => rng.random::<f64>(),
            TrainTimeSchedule::Importance { t_min, t_max } => {
                TimeSampler::importance_quantile(t_min, t_max, rng.random::<f64>())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TrainTimeSchedule::Curriculum { std, fraction, mean } => {
                if !(std > 0.0) || !(0.0..=1.0).contains(&fraction) || !mean.is_finite() {
                    return Err(FklError::InvalidParameter("curriculum needs std > 0 and fraction in [0, 1]".into()));
                }
            }
            TrainTimeSchedule::Uniform => {}
            TrainTimeSchedule::Importance { t_min, t_max } => {
                TimeSampler::ImportanceOverOneMinusT { t_min, t_max }.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the L² term at the first iteration; the CM term gets `1 − w`.
    pub w_start: f64,
    /// Weight of the L² term at the last iteration; interpolated linearly.
    pub w_end: f64,
    pub schedule: TrainTimeSchedule,
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub activation: Activation,
    pub ema_rate: f64,
    /// Size of the fixed held-out batch used for the reported losses.
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 64,
            learning_rate: 1e-3,
            w_start: 1.0,
            w_end: 0.0,
            schedule: TrainTimeSchedule::default(),
            width: 128,
            depth: 3,
            activation: Activation::Gelu,
            ema_rate: 0.999,
            eval_size: 512,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.width == 0 || self.depth == 0 || self.eval_size == 0 {
            return Err(FklError::InvalidParameter("batch size, width, depth and eval size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(FklError::InvalidParameter("learning rate must be positive".into()));
        }
        for w in [self.w_start, self.w_end] {
            if !(0.0..=1.0).contains(&w) {
                return Err(FklError::InvalidParameter(format!("loss weight {w} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.ema_rate) {
            return Err(FklError::InvalidParameter("ema rate must lie in [0, 1)".into()));
        }
        self.schedule.validate()
    }

    fn l2_weight(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return self.w_start;
        }
        let frac = iteration as f64 / (self.iterations - 1) as f64;
        self.w_start + (self.w_end - self.w_start) * frac
    }
}

/// Network weights, EMA weights and the per-feature input/output scales.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    n_modes: usize,
    out_dim: usize,
    scales: Vec<f64>,
    net: Mlp,
    ema: Mlp,
}

impl TrainedNetwork {
    pub fn new(n_modes: usize, out_dim: usize, scales: Vec<f64>, net: Mlp, ema: Mlp) -> Result<Self> {
        let f = feature_len(n_modes, out_dim);
        if scales.len() != f || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(FklError::Shape(format!("need {f} positive finite scales")));
        }
        let in_dim = f + TIME_FEATURES + N_CONDITIONS;
        for m in [&net, &ema] {
            if m.input_dim() != in_dim || m.output_dim() != f {
                return Err(FklError::Shape(format!(
                    "network maps {} -> {}, expected {in_dim} -> {f}",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
        }
        if net.dims() != ema.dims() || net.activation() != ema.activation() {
            return Err(FklError::Shape("EMA network differs in architecture".into()));
        }
        Ok(Self {
            n_modes,
            out_dim,
            scales,
            net,
            ema,
        })
    }

    pub fn initialize(n_modes: usize, out_dim: usize, scales: Vec<f64>, width: usize, depth: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        let f = feature_len(n_modes, out_dim);
        let mut dims = vec![f + TIME_FEATURES + N_CONDITIONS];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(f);
        let net = Mlp::new(dims, activation, rng);
        let ema = net.clone();
        Self::new(n_modes, out_dim, scales, net, ema)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn ema(&self) -> &Mlp {
        &self.ema
    }

    fn input(&self, x: &[f64], t: f64, condition: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.net.input_dim());
        input.extend(x.iter().zip(&self.scales).map(|(v, s)| v / s));
        input.extend_from_slice(&time_embedding(t));
        for c in 0..N_CONDITIONS {
            input.push(if c == condition { 1.0 } else { 0.0 });
        }
        input
    }

    /// Wrapped velocity in feature space.
    fn velocity(&self, mlp: &Mlp, x: &[f64], t: f64, condition: usize) -> Vec<f64> {
        let m_t = mlp.forward(&self.input(x, t, condition));
        let m_1 = mlp.forward(&self.input(x, 1.0, condition));
        wrap(x, &m_t, &m_1, &self.scales)
    }
}

/// `x + s ⊙ (m_t − m_1)`. Where the difference vanishes the input is returned
/// untouched, so the boundary identity holds bitwise (including signed zeros).
fn wrap(x: &[f64], m_t: &[f64], m_1: &[f64], scales: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(m_t.iter().zip(m_1))
        .zip(scales)
        .map(|((&xv, (&a, &b)), &s)| {
            let diff = a - b;
            if diff == 0.0 {
                xv
            } else {
                xv + s * diff
            }
        })
        .collect()
}

/// One of the two conditioned fields of a [`TrainedNetwork`].
#[derive(Debug, Clone)]
pub struct TrainedField {
    network: Arc<TrainedNetwork>,
    condition: usize,
    use_ema: bool,
}

impl TrainedField {
    /// Field for `condition` (0 or 1), evaluated with the EMA weights.
    pub fn new(network: Arc<TrainedNetwork>, condition: usize) -> Result<Self> {
        if condition >= N_CONDITIONS {
            return Err(FklError::InvalidParameter(format!("condition must be 0 or 1, got {condition}")));
        }
        Ok(Self {
            network,
            condition,
            use_ema: true,
        })
    }

    /// Same field evaluated with the raw (non-averaged) weights.
    pub fn with_raw_weights(mut self) -> Self {
        self.use_ema = false;
        self
    }

    pub fn network(&self) -> &Arc<TrainedNetwork> {
        &self.network
    }

    pub fn condition(&self) -> usize {
        self.condition
    }

    fn mlp(&self) -> &Mlp {
        if self.use_ema {
            &self.network.ema
        } else {
            &self.network.net
        }
    }
}

impl VelocityField for TrainedField {
    fn n_modes(&self) -> usize {
        self.network.n_modes
    }

    fn out_dim(&self) -> usize {
        self.network.out_dim
    }

    fn eval(&self, x: &SpectralCoeffs, t: f64) -> Result<SpectralCoeffs> {
        check_time(t)?;
        self.check_input(x)?;
        let v = self.network.velocity(self.mlp(), &x.to_features(), t, self.condition);
        SpectralCoeffs::from_features(self.n_modes(), self.out_dim(), &v)
    }

    fn exact_boundary(&self) -> bool {
        true
    }

    fn fingerprint(&self) -> String {
        let cond = [self.condition as f64, f64::from(u8::from(self.use_ema))];
        hash_floats("trained", [&cond[..], self.network.scales.as_slice(), self.mlp().params()])
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field_a: TrainedField,
    pub field_b: TrainedField,
    /// Mixed-loss value of every training batch.
    pub loss_history: Vec<f64>,
    /// Pure L² loss of the EMA weights on the fixed held-out batch.
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
}

/// Per-feature `k` index and Hermitian weight.
fn feature_modes(n_modes: usize, out_dim: usize) -> Vec<usize> {
    let per_dim = 2 * n_modes - 1;
    (0..out_dim * per_dim)
        .map(|i| {
            let p = i % per_dim;
            (p + 1) / 2
        })
        .collect()
}

struct LossWeights {
    hermitian: Vec<f64>,
    inv_lambda: Vec<f64>,
}

impl LossWeights {
    fn new(noise: &DiagonalCovariance) -> Self {
        let (n_modes, out_dim) = (noise.n_modes(), noise.out_dim());
        let per_dim = 2 * n_modes - 1;
        let modes = feature_modes(n_modes, out_dim);
        let hermitian = modes.iter().map(|&k| if k == 0 { 1.0 } else { 2.0 }).collect();
        let inv_lambda = modes
            .iter()
            .enumerate()
            .map(|(i, &k)| 1.0 / noise.lambda(k, i / per_dim))
            .collect();
        Self { hermitian, inv_lambda }
    }

    /// Per-feature weights of `w·‖·‖²_L2 + (1−w)·‖·‖²_CM`.
    fn combined(&self, w: f64) -> Vec<f64> {
        self.hermitian
            .iter()
            .zip(&self.inv_lambda)
            .map(|(h, il)| h * (w + (1.0 - w) * il))
            .collect()
    }
}

/// Per-feature scale: RMS of the data plus the noise variance in that feature.
fn feature_scales(pool_a: &[SpectralCoeffs], pool_b: &[SpectralCoeffs], noise: &DiagonalCovariance) -> Vec<f64> {
    let (n_modes, out_dim) = (noise.n_modes(), noise.out_dim());
    let per_dim = 2 * n_modes - 1;
    let modes = feature_modes(n_modes, out_dim);
    let mut sums = vec![0.0; modes.len()];
    let n = (pool_a.len() + pool_b.len()) as f64;
    for p in pool_a.iter().chain(pool_b) {
        for (s, v) in sums.iter_mut().zip(p.to_features()) {
            *s += v * v;
        }
    }
    modes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let lambda = noise.lambda(k, i / per_dim);
            let noise_var = if k == 0 { lambda } else { 0.5 * lambda };
            (sums[i] / n + noise_var).sqrt().max(1e-12)
        })
        .collect()
}

struct Example {
    x_t: Vec<f64>,
    target: Vec<f64>,
    t: f64,
    condition: usize,
}

fn make_example(x1: &SpectralCoeffs, condition: usize, t: f64, noise: &GaussianMeasure, rng: &mut Rng) -> Example {
    let x0 = noise.sample(rng);
    let x_t = SpectralCoeffs::interpolate(&x0, x1, t).to_features();
    let target = (x1 - &x0).to_features();
    Example { x_t, target, t, condition }
}

/// Loss of one example and, if requested, its gradient accumulated into `grads`.
fn example_loss(network: &TrainedNetwork, mlp: &Mlp, ex: &Example, weights: &[f64], grads: Option<(&mut [f64], &mut Tape, &mut Tape)>) -> f64 {
    let in_t = network.input(&ex.x_t, ex.t, ex.condition);
    let in_1 = network.input(&ex.x_t, 1.0, ex.condition);
    match grads {
        None => {
            let v = wrap(&ex.x_t, &mlp.forward(&in_t), &mlp.forward(&in_1), &network.scales);
            v.iter().zip(&ex.target).zip(weights).map(|((v, u), w)| w * (v - u).powi(2)).sum()
        }
        Some((g, tape_t, tape_1)) => {
            let m_t = mlp.forward_taped(&in_t, tape_t);
            let m_1 = mlp.forward_taped(&in_1, tape_1);
            let v = wrap(&ex.x_t, &m_t, &m_1, &network.scales);
            let mut loss = 0.0;
            let mut grad_out = Vec::with_capacity(v.len());
            for (((v, u), w), s) in v.iter().zip(&ex.target).zip(weights).zip(&network.scales) {
                let r = v - u;
                loss += w * r * r;
                grad_out.push(2.0 * w * r * s);
            }
            mlp.backward(tape_t, &grad_out, g);
            grad_out.iter_mut().for_each(|x| *x = -*x);
            mlp.backward(tape_1, &grad_out, g);
            loss
        }
    }
}

/// Mean loss and gradient over a batch, with a fixed reduction order.
fn batch_gradient(network: &TrainedNetwork, batch: &[Example], weights: &[f64]) -> (f64, Vec<f64>) {
    let n_params = network.net.params().len();
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n_params];
            let (mut tape_t, mut tape_1) = (Tape::default(), Tape::default());
            let mut loss = 0.0;
            for ex in chunk {
                loss += example_loss(network, &network.net, ex, weights, Some((&mut g, &mut tape_t, &mut tape_1)));
            }
            (loss, g)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    (loss * inv, grad)
}

fn eval_loss(network: &TrainedNetwork, mlp: &Mlp, set: &[Example], weights: &[f64]) -> f64 {
    let total: f64 = set
        .par_iter()
        .map(|ex| example_loss(network, mlp, ex, weights, None))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / set.len() as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Trains one conditioned network on both pools. Condition 0 is measure A.
pub fn train_field(pool_a: &[SpectralCoeffs], pool_b: &[SpectralCoeffs], noise: &GaussianMeasure, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = pool_a
        .first()
        .or(pool_b.first())
        .ok_or_else(|| FklError::InvalidParameter("training pools are empty".into()))?;
    if pool_a.is_empty() || pool_b.is_empty() {
        return Err(FklError::InvalidParameter("both training pools must be nonempty".into()));
    }
    for p in pool_a.iter().chain(pool_b) {
        first.check_shape(p)?;
        noise.cov().check_coeffs(p)?;
    }
    let (n_modes, out_dim) = (first.n_modes(), first.out_dim());
    let scales = feature_scales(pool_a, pool_b, noise.cov());
    let mut init_rng = rng::seeded(rng::derive(cfg.seed, "init"));
    let mut network = TrainedNetwork::initialize(n_modes, out_dim, scales, cfg.width, cfg.depth, cfg.activation, &mut init_rng)?;
    let loss_weights = LossWeights::new(noise.cov());
    let l2_only = loss_weights.combined(1.0);

    let union: Vec<(&SpectralCoeffs, usize)> = pool_a.iter().map(|p| (p, 0)).chain(pool_b.iter().map(|p| (p, 1))).collect();

    let mut eval_rng = rng::seeded(rng::derive(cfg.seed, "eval"));
    let eval_set: Vec<Example> = (0..cfg.eval_size)
        .map(|i| {
            let (x1, c) = union[(i * 7919) % union.len()];
            let t = eval_rng.random::<f64>();
            make_example(x1, c, t, noise, &mut eval_rng)
        })
        .collect();
    let initial_eval_loss = eval_loss(&network, &network.ema, &eval_set, &l2_only);

    let mut order: Vec<usize> = (0..union.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive(cfg.seed, "shuffle"));
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0;
    let batch_base = rng::derive(cfg.seed, "batch");
    let mut adam = Adam::new(network.net.params().len());
    let mut loss_history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let mut batch_rng = rng::stream(batch_base, it as u64);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            let (x1, c) = union[order[cursor]];
            cursor += 1;
            let t = cfg.schedule.sample(it, cfg.iterations, &mut batch_rng);
            batch.push(make_example(x1, c, t, noise, &mut batch_rng));
        }
        let weights = loss_weights.combined(cfg.l2_weight(it));
        let (loss, grad) = batch_gradient(&network, &batch, &weights);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(FklError::NonFiniteLoss {
                iteration: it,
                batch_seed: batch_base,
            });
        }
        loss_history.push(loss);
        adam.update(network.net.params_mut(), &grad, cfg.learning_rate);
        let decay = cfg.ema_rate.min((1.0 + it as f64) / (10.0 + it as f64));
        let TrainedNetwork { net, ema, .. } = &mut network;
        for (e, p) in ema.params_mut().iter_mut().zip(net.params()) {
            *e = decay * *e + (1.0 - decay) * p;
        }
    }

    let final_eval_loss = eval_loss(&network, &network.ema, &eval_set, &l2_only);
    log::info!(
        "training finished: eval loss {initial_eval_loss:.4e} -> {final_eval_loss:.4e} over {} iterations",
        cfg.iterations
    );
    let network = Arc::new(network);
    Ok(TrainOutcome {
        field_a: TrainedField::new(Arc::clone(&network), 0)?,
        field_b: TrainedField::new(network, 1)?,
        loss_history,
        initial_eval_loss,
        final_eval_loss,
    })
}
