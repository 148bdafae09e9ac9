use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Confusion, EpochMetrics, RelevanceData};
use super::optim::{lr_schedule, AdamW, AdamWConfig};
use super::sampler::WeightedSampler;
use crate::error::{Error, Result};
use crate::inference::ThresholdStrategy;
use crate::model::{FinExModel, ParamGroups, TrainScope};
use crate::nn::Ctx;
use crate::tensor::{stable_sigmoid, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_frozen: f64,
    pub lr_head_unfrozen: f64,
    pub lr_encoder_unfrozen: f64,
    pub epochs: usize,
    pub unfreeze_after_epoch: usize,
    pub warmup_fraction: f64,
    pub max_seq_len: usize,
    pub seed: u64,
    pub adamw: AdamWConfig,
    /// Draws per epoch; defaults to the number of training sentences.
    pub samples_per_epoch: Option<usize>,
    /// Secondary validation strategy reported next to the fixed 0.5 cut.
    pub dynamic: ThresholdStrategy,
}

fn default_dynamic() -> ThresholdStrategy {
    ThresholdStrategy::median(crate::inference::threshold::DEFAULT_DELTA)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr_frozen: 2e-5,
            lr_head_unfrozen: 1e-3,
            lr_encoder_unfrozen: 1e-5,
            epochs: 10,
            unfreeze_after_epoch: 4,
            warmup_fraction: 0.10,
            max_seq_len: 128,
            seed: 42,
            adamw: AdamWConfig::default(),
            samples_per_epoch: None,
            dynamic: default_dynamic(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.unfreeze_after_epoch >= self.epochs {
            return Err(Error::Validation(format!(
                "unfreeze_after_epoch {} must be below epochs {}",
                self.unfreeze_after_epoch, self.epochs
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Validation(format!("warmup fraction {} not in [0, 1)", self.warmup_fraction)));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        self.dynamic.validate()
    }

    pub fn is_frozen(&self, epoch: usize) -> bool {
        epoch <= self.unfreeze_after_epoch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub frozen: bool,
    pub lr_head: f64,
    pub lr_encoder: f64,
    /// L2 norm of all base-side gradients accumulated over the epoch.
    pub encoder_grad_norm: f64,
    pub train: EpochMetrics,
    pub validation: EpochMetrics,
    pub validation_dynamic: EpochMetrics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// One optimizer phase: the frozen epochs or the unfrozen ones. Warmup
/// restarts at each phase.
struct Phase {
    groups: ParamGroups,
    step: usize,
    total: usize,
}

/// Relevance logits `[B]` for a batch on one tape.
fn batch_logits(model: &FinExModel, tape: &mut Tape, data: &RelevanceData, batch: &[usize], ctx: &mut Ctx) -> Result<Var> {
    let mut parts = Vec::with_capacity(batch.len());
    for &i in batch {
        let l = model.relevance_logit(tape, &data.items[i].input, ctx)?;
        parts.push(tape.reshape(l, &[1])?);
    }
    tape.concat(&parts, 0)
}

/// Two-stage relevance training. Epochs up to `unfreeze_after_epoch` train
/// the heads alone at `lr_frozen`; later epochs also train the base side
/// with separate head and encoder learning rates. The model ends holding
/// the parameters of the best validation-F1 epoch.
pub fn train(
    model: &mut FinExModel,
    train_data: &RelevanceData,
    val_data: &RelevanceData,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_data.items.is_empty() || val_data.items.is_empty() {
        return Err(Error::Validation("training and validation splits must be non-empty".into()));
    }
    let targets = train_data.targets();
    let sampler = WeightedSampler::new(&targets)?;
    let per_epoch = config.samples_per_epoch.unwrap_or(train_data.items.len());
    let steps_per_epoch = per_epoch.div_ceil(config.batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ctx = Ctx::train(config.seed.wrapping_add(1));
    let mut opt = AdamW::new(config.adamw);
    let fixed = ThresholdStrategy::fixed(0.5);

    let mut phase = Phase {
        groups: model.set_trainable(TrainScope::HeadOnly, config.lr_frozen, 0.0),
        step: 0,
        total: steps_per_epoch * config.unfreeze_after_epoch,
    };
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;

    for epoch in 1..=config.epochs {
        if epoch == config.unfreeze_after_epoch + 1 {
            phase = Phase {
                groups: model.set_trainable(TrainScope::All, config.lr_head_unfrozen, config.lr_encoder_unfrozen),
                step: 0,
                total: steps_per_epoch * (config.epochs - config.unfreeze_after_epoch),
            };
        }
        let order = sampler.sample(per_epoch, &mut rng);
        let mut conf = Confusion::default();
        let mut loss_sum = 0.0;
        let mut enc_sq = 0.0;
        let (mut lr_h, mut lr_e) = (0.0, 0.0);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let logits = batch_logits(model, &mut tape, train_data, batch, &mut ctx)?;
            let y: Vec<f64> = batch.iter().map(|&i| f64::from(u8::from(targets[i]))).collect();
            let loss = tape.bce_with_logits(logits, &Tensor::vector(y), None)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch, step, loss: lv });
            }
            for (k, &z) in tape.value(logits).data().iter().enumerate() {
                conf.add(stable_sigmoid(z) >= 0.5, targets[batch[k]]);
            }
            loss_sum += lv * batch.len() as f64;
            let grads = tape.backward(loss)?;
            for (id, g) in grads.params() {
                if model.store.entry(id).component.is_base() {
                    enc_sq += g.data().iter().map(|v| v * v).sum::<f64>();
                }
            }
            lr_h = lr_schedule(phase.step, phase.total, phase.groups.lr_head, config.warmup_fraction);
            lr_e = lr_schedule(phase.step, phase.total, phase.groups.lr_encoder, config.warmup_fraction);
            let groups = &phase.groups;
            opt.step(&mut model.store, grads.params(), |id| {
                if groups.head.contains(&id) {
                    Some(lr_h)
                } else if groups.encoder.contains(&id) {
                    Some(lr_e)
                } else {
                    None
                }
            })?;
            phase.step += 1;
        }
        let train_m = EpochMetrics::from_confusion(&conf, loss_sum / per_epoch as f64);
        let validation = evaluate(model, val_data, &fixed)?;
        let validation_dynamic = evaluate(model, val_data, &config.dynamic)?;
        let rec = EpochRecord {
            epoch,
            frozen: config.is_frozen(epoch),
            lr_head: lr_h,
            lr_encoder: lr_e,
            encoder_grad_norm: enc_sq.sqrt(),
            train: train_m,
            validation,
            validation_dynamic,
        };
        on_epoch(&rec);
        if best.as_ref().is_none_or(|b| validation.f1 > b.1) {
            best = Some((epoch, validation.f1, model.store.snapshot()));
        }
        history.push(rec);
    }
    let (best_epoch, best_f1, snap) = best.expect("at least one epoch");
    model.store.restore(snap);
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_f1,
    })
}

pub const CSV_HEADER: &str = "epoch,phase,loss,accuracy,precision,recall,f1,lr_head,lr_encoder,frozen_flag";

/// Three rows per epoch: `train`, `validation` (fixed 0.5) and
/// `validation_dynamic`.
pub fn write_metrics_csv(history: &[EpochRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in history {
        for (phase, m) in [
            ("train", &r.train),
            ("validation", &r.validation),
            ("validation_dynamic", &r.validation_dynamic),
        ] {
            writeln!(
                w,
                "{},{phase},{},{},{},{},{},{},{},{}",
                r.epoch,
                m.loss,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                r.lr_head,
                r.lr_encoder,
                u8::from(r.frozen)
            )?;
        }
    }
    Ok(())
}

pub fn save_metrics_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_metrics_csv(history, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
