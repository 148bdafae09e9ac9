//! Task heads over encoder and graph outputs.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::INIT_STD;
use crate::error::{Error, Result};
use crate::nn::{Ctx, Linear};
use crate::tensor::{Component, ParamId, ParamStore, Tape, Var};

/// Affine `fused_dim → 3`; logits ordered entailment, contradiction, neutral.
#[derive(Clone, Debug)]
pub struct NliHead {
    pub linear: Linear,
}

impl NliHead {
    pub fn new(store: &mut ParamStore, fused_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            linear: Linear::new(store, "nli_head", fused_dim, 3, Component::NliHead, INIT_STD, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.linear.param_count()
    }

    /// `[fused_dim] → [3]` or `[B × fused_dim] → [B × 3]`.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, fused: Var, ctx: &mut Ctx) -> Result<Var> {
        self.linear.forward(store, tape, fused, ctx)
    }
}

/// Dropout followed by an affine map to one logit.
#[derive(Clone, Debug)]
pub struct RelevanceHead {
    pub linear: Linear,
    pub dropout: f64,
}

impl RelevanceHead {
    pub fn new(store: &mut ParamStore, d_in: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            linear: Linear::new(store, "relevance_head", d_in, 1, Component::RelevanceHead, INIT_STD, rng),
            dropout,
        }
    }

    pub fn param_count(&self) -> usize {
        self.linear.param_count()
    }

    /// `[d_in]` → scalar logit, or `[B × d_in]` → `[B]`.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let x = ctx.dropout(tape, x, self.dropout)?;
        let y = self.linear.forward(store, tape, x, ctx)?;
        match shape.as_slice() {
            [_] => tape.reshape(y, &[]),
            [b, _] => tape.reshape(y, &[*b]),
            _ => Err(Error::dim("relevance_forward", &shape, &[self.linear.d_in])),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanHeadConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub dropout_rate: f64,
}

impl SpanHeadConfig {
    pub fn desk(d_model: usize, dropout_rate: f64) -> Self {
        Self {
            d_in: d_model,
            d_hidden: 2 * d_model,
            dropout_rate,
        }
    }
}

/// Start/end/no-span extraction head.
///
/// `H' = dropout(ReLU(H·W1 + b1))`, start and end logits are per-token
/// affine maps of `H'`, and the no-span logit reads the `[CLS]` row of the
/// pre-MLP `H`.
#[derive(Clone, Debug)]
pub struct SpanHead {
    pub config: SpanHeadConfig,
    pub mlp: Linear,
    pub start: Linear,
    pub end: Linear,
    pub no_span: Linear,
}

pub struct SpanLogits {
    pub start: Var,
    pub end: Var,
    pub no_span: Var,
}

impl SpanHead {
    pub fn new(store: &mut ParamStore, config: SpanHeadConfig, rng: &mut ChaCha8Rng) -> Self {
        let SpanHeadConfig { d_in, d_hidden, .. } = config;
        Self {
            config,
            mlp: Linear::new(store, "span.mlp", d_in, d_hidden, Component::SpanMlp, INIT_STD, rng),
            start: Linear::new(store, "span.start", d_hidden, 1, Component::SpanClassifiers, INIT_STD, rng),
            end: Linear::new(store, "span.end", d_hidden, 1, Component::SpanClassifiers, INIT_STD, rng),
            no_span: Linear::new(store, "span.no_span", d_in, 1, Component::SpanClassifiers, INIT_STD, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        [&self.mlp, &self.start, &self.end, &self.no_span].iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.mlp, &self.start, &self.end, &self.no_span].iter().flat_map(|l| l.params()).collect()
    }

    /// `h: [L × d_in]` with the `[CLS]` state in row 0.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, h: Var, ctx: &mut Ctx) -> Result<SpanLogits> {
        let shape = tape.shape(h).to_vec();
        let l = match shape.as_slice() {
            [l, d] if *l >= 1 && *d == self.config.d_in => *l,
            _ => return Err(Error::dim("span_forward", &shape, &[0, self.config.d_in])),
        };
        let hidden = self.mlp.forward(store, tape, h, ctx)?;
        let hidden = tape.relu(hidden)?;
        let hidden = ctx.dropout(tape, hidden, self.config.dropout_rate)?;
        let start = self.start.forward(store, tape, hidden, ctx)?;
        let start = tape.reshape(start, &[l])?;
        let end = self.end.forward(store, tape, hidden, ctx)?;
        let end = tape.reshape(end, &[l])?;
        let cls = tape.row(h, 0)?;
        let no_span = self.no_span.forward(store, tape, cls, ctx)?;
        let no_span = tape.reshape(no_span, &[])?;
        Ok(SpanLogits { start, end, no_span })
    }
}
