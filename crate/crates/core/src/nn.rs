//! Layer building blocks shared by the encoder, graph pathway and heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Component, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Forward-pass context: train/eval mode plus the owned dropout stream.
pub struct Ctx {
    pub mode: Mode,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn dropout(&mut self, tape: &mut Tape, x: Var, rate: f64) -> Result<Var> {
        let train = self.is_train();
        tape.dropout(x, rate, train, &mut self.rng)
    }
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape matches")
}

/// Low-rank update `scaling · B(A(dropout(x)))` attached to a [`Linear`].
///
/// `down` is stored input-major as `[d_in × r]` and `up` as `[r × d_out]`,
/// the transposes of the usual `A (r×d_in)`, `B (d_out×r)` so that rows of
/// `x` multiply on the left like the base weight.
#[derive(Clone, Debug)]
pub struct LoraAdapter {
    pub down: ParamId,
    pub up: ParamId,
    pub rank: usize,
    pub scaling: f64,
    pub dropout: f64,
}

/// Affine map `y = x·W + b` with `W: [d_in × d_out]`, optionally carrying a
/// LoRA adapter.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
    pub lora: Option<LoraAdapter>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        component: Component,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), normal_tensor(rng, &[d_in, d_out], std), component);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]), component);
        Self {
            weight,
            bias,
            d_in,
            d_out,
            lora: None,
        }
    }

    /// Scalars in the base map, bias included.
    pub fn param_count(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.weight, self.bias];
        if let Some(l) = &self.lora {
            p.extend([l.down, l.up]);
        }
        p
    }

    /// Applies the map to a matrix `[n × d_in]` or a vector `[d_in]`.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let (x2, vector) = match shape.as_slice() {
            [n] if *n == self.d_in => (tape.reshape(x, &[1, self.d_in])?, true),
            [_, n] if *n == self.d_in => (x, false),
            _ => return Err(Error::dim("linear", &shape, &[self.d_in, self.d_out])),
        };
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul(x2, w)?;
        let mut y = tape.add_row_bias(xw, b)?;
        if let Some(l) = &self.lora {
            let xd = ctx.dropout(tape, x2, l.dropout)?;
            let a = tape.param(store, l.down);
            let bb = tape.param(store, l.up);
            let low = tape.matmul(xd, a)?;
            let delta = tape.matmul(low, bb)?;
            let delta = tape.mul_scalar(delta, l.scaling)?;
            y = tape.add(y, delta)?;
        }
        if vector {
            y = tape.reshape(y, &[self.d_out])?;
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, component: Component) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0), component);
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[width]), component);
        Self { gamma, beta, eps: 1e-12 }
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b, self.eps)
    }
}
