//! Fully connected network with hand-written reverse-mode gradients.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Number of sinusoidal frequencies in the time embedding.
pub const TIME_FREQUENCIES: usize = 8;

/// Length of [`time_embedding`]: raw `t` plus a sine/cosine pair per frequency.
pub const TIME_FEATURES: usize = 1 + 2 * TIME_FREQUENCIES;

/// `[t, sin(π 2^j t), cos(π 2^j t)]` for `j < TIME_FREQUENCIES`. The lowest
/// frequency has a half period on `[0, 1]`, so `t = 0` and `t = 1` embed
/// differently.
pub fn time_embedding(t: f64) -> [f64; TIME_FEATURES] {
    let mut out = [0.0; TIME_FEATURES];
    out[0] = t;
    for j in 0..TIME_FREQUENCIES {
        let w = std::f64::consts::PI * (1u64 << j) as f64;
        out[1 + 2 * j] = (w * t).sin();
        out[2 + 2 * j] = (w * t).cos();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Gelu,
    Tanh,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl Activation {
    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Gelu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Gelu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            // tanh approximation
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
            Activation::Tanh => x.tanh(),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let inner = GELU_C * (x + 0.044715 * x * x * x);
                let th = inner.tanh();
                0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
            }
            Activation::Tanh => {
                let th = x.tanh();
                1.0 - th * th
            }
        }
    }
}

/// Dense layers `dims[0] -> dims[1] -> ... -> dims[L]`, activation on every
/// hidden layer, linear output. Parameters are stored flat, per layer the
/// row-major weight matrix (out x in) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(dims: Vec<usize>, activation: Activation, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "invalid layer dims");
        let n_params = Self::count_params(&dims);
        let mut params = Vec::with_capacity(n_params);
        let n_layers = dims.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            // LeCun-normal, with a damped output layer so the initial field is near x
            let gain = if l + 1 == n_layers { 0.1 } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(std * z);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            dims,
            activation,
            params,
        }
    }

    pub fn from_params(dims: Vec<usize>, activation: Activation, params: Vec<f64>) -> Option<Self> {
        if dims.len() < 2 || params.len() != Self::count_params(&dims) {
            return None;
        }
        Some(Self {
            dims,
            activation,
            params,
        })
    }

    pub fn count_params(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.run(input, None)
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_taped(&self, input: &[f64], tape: &mut Tape) -> Vec<f64> {
        tape.inputs.clear();
        tape.pre.clear();
        self.run(input, Some(tape))
    }

    fn run(&self, input: &[f64], mut tape: Option<&mut Tape>) -> Vec<f64> {
        assert_eq!(input.len(), self.dims[0], "input width");
        let n_layers = self.dims.len() - 1;
        let mut act = input.to_vec();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *zo += row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
            }
            let next = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(std::mem::take(&mut act));
                t.pre.push(z);
            }
            act = next;
        }
        act
    }

    /// Accumulates `∂(grad_out · output)/∂params` into `grads`.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grads: &mut [f64]) {
        let n_layers = self.dims.len() - 1;
        assert_eq!(tape.pre.len(), n_layers, "tape does not match network");
        assert_eq!(grads.len(), self.params.len());
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.dims[l] * self.dims[l + 1] + self.dims[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            if l + 1 != n_layers {
                for (d, &z) in delta.iter_mut().zip(&tape.pre[l]) {
                    *d *= self.activation.derivative(z);
                }
            }
            let input = &tape.inputs[l];
            let base = offsets[l];
            for o in 0..fan_out {
                let g = delta[o];
                if g == 0.0 {
                    continue;
                }
                let row = &mut grads[base + o * fan_in..base + (o + 1) * fan_in];
                for (r, x) in row.iter_mut().zip(input) {
                    *r += g * x;
                }
                grads[base + fan_in * fan_out + o] += g;
            }
            if l > 0 {
                let w = &self.params[base..base + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let g = delta[o];
                    if g == 0.0 {
                        continue;
                    }
                    for (p, wv) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *p += g * wv;
                    }
                }
                delta = prev;
            }
        }
    }
}
