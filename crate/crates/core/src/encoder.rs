//! BERT-shaped micro transformer encoder with optional LoRA adapters on the
//! attention projections.
//!
//! Post-layer-norm blocks: `x = LN(x + Drop(MHA(x)))`, then
//! `x = LN(x + Drop(FFN(x)))`, with learned absolute position embeddings and
//! ReLU in the feed-forward block.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::vocab::CLS_ID;
use crate::error::{Error, Result};
use crate::nn::{normal_tensor, Ctx, LayerNorm, Linear, LoraAdapter};
use crate::tensor::{Component, ParamId, ParamStore, Tape, Tensor, Var};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// Desk-scale shape used for training runs.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            max_seq_len: 128,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Validation(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Validation("max_seq_len must be at least 2".into()));
        }
        if self.vocab_size <= CLS_ID {
            return Err(Error::Validation("vocabulary must contain the special tokens".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Validation(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Query,
    Key,
    Value,
    Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout_rate: f64,
    pub targets: Vec<Projection>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            alpha: 32.0,
            dropout_rate: 0.1,
            targets: vec![Projection::Query, Projection::Value],
        }
    }
}

impl LoraConfig {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Validation("LoRA rank must be at least 1".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Validation("LoRA alpha must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Validation("LoRA dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attn_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNorm,
}

impl EncoderLayer {
    fn projection_mut(&mut self, p: Projection) -> &mut Linear {
        match p {
            Projection::Query => &mut self.query,
            Projection::Key => &mut self.key,
            Projection::Value => &mut self.value,
            Projection::Output => &mut self.output,
        }
    }
}

/// Handle to one attached adapter.
#[derive(Clone, Debug)]
pub struct AdapterHandle {
    pub layer: usize,
    pub projection: Projection,
    pub down: ParamId,
    pub up: ParamId,
}

pub struct EncoderOutput {
    /// `[L × d_model]`
    pub hidden: Var,
    /// `[d_model]`, row 0 of `hidden`.
    pub cls: Var,
    /// Post-softmax attention weights, one `[L × L]` per layer and head.
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub embedding_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
    pub lora: Option<LoraConfig>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let c = Component::Encoder;
        let d = config.d_model;
        let token_embedding = store.add(
            "encoder.token_embedding",
            normal_tensor(rng, &[config.vocab_size, d], INIT_STD),
            c,
        );
        let position_embedding = store.add(
            "encoder.position_embedding",
            normal_tensor(rng, &[config.max_seq_len, d], INIT_STD),
            c,
        );
        let embedding_norm = LayerNorm::new(store, "encoder.embedding_norm", d, c);
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let p = format!("encoder.layer{i}");
            layers.push(EncoderLayer {
                query: Linear::new(store, &format!("{p}.attn.query"), d, d, c, INIT_STD, rng),
                key: Linear::new(store, &format!("{p}.attn.key"), d, d, c, INIT_STD, rng),
                value: Linear::new(store, &format!("{p}.attn.value"), d, d, c, INIT_STD, rng),
                output: Linear::new(store, &format!("{p}.attn.output"), d, d, c, INIT_STD, rng),
                attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), d, c),
                ff_in: Linear::new(store, &format!("{p}.ff.in"), d, config.d_ff, c, INIT_STD, rng),
                ff_out: Linear::new(store, &format!("{p}.ff.out"), config.d_ff, d, c, INIT_STD, rng),
                ff_norm: LayerNorm::new(store, &format!("{p}.ff_norm"), d, c),
            });
        }
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            embedding_norm,
            layers,
            lora: None,
        })
    }

    /// Replaces the configured projections with LoRA-adapted ones: `A` from
    /// N(0, 0.02²), `B` zero, and every base encoder weight frozen.
    pub fn attach_lora(
        &mut self,
        store: &mut ParamStore,
        config: LoraConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<AdapterHandle>> {
        if self.lora.is_some() {
            return Err(Error::State("LoRA adapters are already attached".into()));
        }
        config.validate()?;
        let mut handles = Vec::new();
        for (li, layer) in self.layers.iter_mut().enumerate() {
            for &proj in &config.targets {
                let lin = layer.projection_mut(proj);
                let name = format!("encoder.layer{li}.lora.{}", serde_json::to_value(proj)?.as_str().unwrap_or("proj"));
                let down = store.add(
                    format!("{name}.down"),
                    normal_tensor(rng, &[lin.d_in, config.rank], INIT_STD),
                    Component::Lora,
                );
                let up = store.add(format!("{name}.up"), Tensor::zeros(&[config.rank, lin.d_out]), Component::Lora);
                lin.lora = Some(LoraAdapter {
                    down,
                    up,
                    rank: config.rank,
                    scaling: config.scaling(),
                    dropout: config.dropout_rate,
                });
                handles.push(AdapterHandle {
                    layer: li,
                    projection: proj,
                    down,
                    up,
                });
            }
        }
        for id in store.ids().collect::<Vec<_>>() {
            if store.entry(id).component == Component::Encoder {
                store.set_trainable(id, false);
            }
        }
        self.lora = Some(config);
        Ok(handles)
    }

    pub fn adapters(&self) -> Vec<AdapterHandle> {
        let mut out = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            for (proj, lin) in [
                (Projection::Query, &layer.query),
                (Projection::Key, &layer.key),
                (Projection::Value, &layer.value),
                (Projection::Output, &layer.output),
            ] {
                if let Some(l) = &lin.lora {
                    out.push(AdapterHandle {
                        layer: li,
                        projection: proj,
                        down: l.down,
                        up: l.up,
                    });
                }
            }
        }
        out
    }

    pub fn encode(&self, store: &ParamStore, tape: &mut Tape, ids: &[usize], ctx: &mut Ctx) -> Result<EncoderOutput> {
        let cfg = &self.config;
        if ids.is_empty() || ids.len() > cfg.max_seq_len {
            return Err(Error::Validation(format!(
                "sequence length {} outside 1..={}",
                ids.len(),
                cfg.max_seq_len
            )));
        }
        if ids[0] != CLS_ID {
            return Err(Error::Validation("sequence must begin with [CLS]".into()));
        }
        let len = ids.len();
        let table = tape.param(store, self.token_embedding);
        let tok = tape.embedding(table, ids)?;
        let pos_table = tape.param(store, self.position_embedding);
        let positions: Vec<usize> = (0..len).collect();
        let pos = tape.embedding(pos_table, &positions)?;
        let x = tape.add(tok, pos)?;
        let x = self.embedding_norm.forward(store, tape, x)?;
        let mut x = ctx.dropout(tape, x, cfg.dropout_rate)?;

        let heads = cfg.n_heads;
        let dh = cfg.d_model / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attention = Vec::with_capacity(cfg.n_layers * heads);
        for layer in &self.layers {
            let q = layer.query.forward(store, tape, x, ctx)?;
            let k = layer.key.forward(store, tape, x, ctx)?;
            let v = layer.value.forward(store, tape, x, ctx)?;
            let mut head_out = Vec::with_capacity(heads);
            for h in 0..heads {
                let (lo, hi) = (h * dh, (h + 1) * dh);
                let qh = tape.slice(q, 1, lo, hi)?;
                let kh = tape.slice(k, 1, lo, hi)?;
                let vh = tape.slice(v, 1, lo, hi)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scores = tape.mul_scalar(scores, scale)?;
                let probs = tape.softmax(scores, 1)?;
                attention.push(probs);
                let probs = ctx.dropout(tape, probs, cfg.dropout_rate)?;
                head_out.push(tape.matmul(probs, vh)?);
            }
            let merged = if heads == 1 { head_out[0] } else { tape.concat(&head_out, 1)? };
            let attn = layer.output.forward(store, tape, merged, ctx)?;
            let attn = ctx.dropout(tape, attn, cfg.dropout_rate)?;
            let res = tape.add(x, attn)?;
            x = layer.attn_norm.forward(store, tape, res)?;

            let ff = layer.ff_in.forward(store, tape, x, ctx)?;
            let ff = tape.relu(ff)?;
            let ff = layer.ff_out.forward(store, tape, ff, ctx)?;
            let ff = ctx.dropout(tape, ff, cfg.dropout_rate)?;
            let res = tape.add(x, ff)?;
            x = layer.ff_norm.forward(store, tape, res)?;
        }
        let cls = tape.row(x, 0)?;
        Ok(EncoderOutput {
            hidden: x,
            cls,
            attention,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::tensor::gradcheck::check_params;

    fn small(vocab: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size: vocab,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 12,
            max_seq_len: 16,
            dropout_rate: 0.1,
        }
    }

    fn build(seed: u64) -> (ParamStore, Encoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, small(20), &mut rng).unwrap();
        (store, enc)
    }

    fn run(store: &ParamStore, enc: &Encoder, ids: &[usize]) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let out = enc.encode(store, &mut tape, ids, &mut Ctx::eval()).unwrap();
        (tape.value(out.hidden).clone(), tape.value(out.cls).clone())
    }

    #[test]
    fn config_invariants() {
        let mut c = small(20);
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = small(20);
        c.max_seq_len = 1;
        assert!(c.validate().is_err());
        assert!(small(20).validate().is_ok());
    }

    #[test]
    fn shapes_and_cls_row() {
        let (store, enc) = build(1);
        let (h, cls) = run(&store, &enc, &[CLS_ID, 5, 6, 7]);
        assert_eq!(h.shape(), &[4, 8]);
        assert_eq!(cls.shape(), &[8]);
        assert_eq!(h.row(0), cls.data());
    }

    #[test]
    fn eval_is_deterministic_and_train_is_seeded() {
        let (store, enc) = build(2);
        let ids = [CLS_ID, 4, 9, 11];
        assert_eq!(run(&store, &enc, &ids), run(&store, &enc, &ids));
        let train = |seed| {
            let mut tape = Tape::new();
            let out = enc.encode(&store, &mut tape, &ids, &mut Ctx::train(seed)).unwrap();
            tape.value(out.hidden).clone()
        };
        assert_eq!(train(3), train(3));
        assert_ne!(train(3), train(4));
    }

    #[test]
    fn position_embeddings_break_permutation_symmetry() {
        let (store, enc) = build(3);
        let (a, _) = run(&store, &enc, &[CLS_ID, 5, 6, 7]);
        let (b, _) = run(&store, &enc, &[CLS_ID, 6, 5, 7]);
        assert!(a.max_abs_diff(&b) > 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (store, enc) = build(4);
        let mut tape = Tape::new();
        assert!(enc.encode(&store, &mut tape, &[CLS_ID, 20], &mut Ctx::eval()).is_err());
        assert!(enc.encode(&store, &mut tape, &[], &mut Ctx::eval()).is_err());
        assert!(enc.encode(&store, &mut tape, &[5, 6], &mut Ctx::eval()).is_err());
        let long = vec![CLS_ID; 17];
        assert!(enc.encode(&store, &mut tape, &long, &mut Ctx::eval()).is_err());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (store, enc) = build(5);
        let mut tape = Tape::new();
        let out = enc.encode(&store, &mut tape, &[CLS_ID, 3, 4, 5, 6], &mut Ctx::eval()).unwrap();
        assert_eq!(out.attention.len(), 4);
        for a in out.attention {
            let t = tape.value(a);
            for r in 0..t.shape()[0] {
                assert!((t.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lora_attach_is_identity_and_freezes_base() {
        let (mut store, mut enc) = build(6);
        let ids = [CLS_ID, 7, 8, 9, 10];
        let before = run(&store, &enc, &ids);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let handles = enc.attach_lora(&mut store, LoraConfig::default(), &mut rng).unwrap();
        assert_eq!(handles.len(), 2 * 2);
        assert_eq!(run(&store, &enc, &ids), before);
        assert!(enc.attach_lora(&mut store, LoraConfig::default(), &mut rng).is_err());
        for id in store.ids() {
            let e = store.entry(id);
            assert_eq!(e.trainable, e.component == Component::Lora, "{}", e.name);
        }
        assert_eq!(LoraConfig::default().scaling(), 4.0);
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let (mut store, mut enc) = build(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Exercise the adapter path with non-zero B as well.
        enc.attach_lora(&mut store, LoraConfig { rank: 2, ..LoraConfig::default() }, &mut rng)
            .unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.set_trainable(id, true);
            if store.entry(id).component == Component::Lora {
                let v = store.value_mut(id);
                for x in v.data_mut() {
                    *x = rng.random_range(-0.3..0.3);
                }
            }
        }
        let ids = [CLS_ID, 3, 14, 5, 9];
        let target = normal_tensor(&mut rng, &[5, 8], 1.0);
        let rep = check_params(&mut store, 200, &mut rng, |s, tape| {
            let out = enc.encode(s, tape, &ids, &mut Ctx::train(21))?;
            let t = tape.input(target.clone());
            let p = tape.mul(out.hidden, t)?;
            tape.sum(p)
        })
        .unwrap();
        assert_eq!(rep.checked, 200);
        assert!(rep.max_rel_err < 1e-4, "{rep:?}");
    }
}
