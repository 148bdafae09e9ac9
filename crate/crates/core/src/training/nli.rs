use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use crate::dataset::nli::NliPair;
use crate::error::{Error, Result};
use crate::model::{FinExModel, SentenceInput, TrainScope};
use crate::nn::Ctx;
use crate::tensor::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NliTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for NliTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            seed: 42,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NliEpoch {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's minibatches.
    pub loss: f64,
    /// Eval-mode accuracy after the epoch.
    pub accuracy: f64,
}

/// Trains the whole model (encoder, both graph modules, NLI head) on
/// premise/hypothesis pairs with cross-entropy.
pub fn train_nli_toy(model: &mut FinExModel, pairs: &[NliPair], config: &NliTrainConfig) -> Result<Vec<NliEpoch>> {
    if pairs.is_empty() {
        return Err(Error::Validation("NLI training needs at least one pair".into()));
    }
    let inputs: Vec<(SentenceInput, SentenceInput, usize)> = pairs
        .iter()
        .map(|p| Ok((model.prepare(&p.premise, None)?, model.prepare(&p.hypothesis, None)?, p.label.index())))
        .collect::<Result<_>>()?;
    let groups = model.set_trainable(TrainScope::All, config.lr, config.lr);
    let mut opt = AdamW::new(AdamWConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ctx = Ctx::train(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut out = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut tape = Tape::new();
            let mut rows = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let (p, h, y) = &inputs[i];
                let l = model.nli_logits(&mut tape, p, h, &mut ctx)?;
                rows.push(tape.reshape(l, &[1, 3])?);
                labels.push(*y);
            }
            let logits = tape.concat(&rows, 0)?;
            let loss = tape.cross_entropy(logits, &labels)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch, step: 0, loss: lv });
            }
            loss_sum += lv * batch.len() as f64;
            let grads = tape.backward(loss)?;
            opt.step(&mut model.store, grads.params(), |id| groups.lr_for(id))?;
        }
        out.push(NliEpoch {
            epoch,
            loss: loss_sum / inputs.len() as f64,
            accuracy: nli_accuracy(model, &inputs)?,
        });
    }
    Ok(out)
}

fn nli_accuracy(model: &FinExModel, inputs: &[(SentenceInput, SentenceInput, usize)]) -> Result<f64> {
    let mut correct = 0;
    for (p, h, y) in inputs {
        let mut tape = Tape::new();
        let l = model.nli_logits(&mut tape, p, h, &mut Ctx::eval())?;
        let d = tape.value(l).data();
        let pred = (0..3).fold(0, |b, k| if d[k] > d[b] { k } else { b });
        correct += usize::from(pred == *y);
    }
    Ok(correct as f64 / inputs.len() as f64)
}
