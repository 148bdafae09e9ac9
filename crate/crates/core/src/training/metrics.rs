use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::segment::normalize;
use crate::dataset::transcript::TranscriptExample;
use crate::depgraph::ParseBank;
use crate::error::Result;
use crate::inference::{prepare_transcript, ThresholdStrategy};
use crate::model::{FinExModel, SentenceInput};
use crate::nn::Ctx;
use crate::tensor::{stable_sigmoid, Tape};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl EpochMetrics {
    /// Precision and recall are 0 when their denominators are; so is F1
    /// when `P + R = 0`.
    pub fn from_confusion(c: &Confusion, loss: f64) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            loss,
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1,
        }
    }
}

/// A scored unit: one customer sentence of one transcript.
#[derive(Clone, Debug)]
pub struct SentenceItem {
    pub input: SentenceInput,
    pub text: String,
    pub target: bool,
    pub transcript: usize,
}

/// A split prepared for relevance training and evaluation.
#[derive(Clone, Debug, Default)]
pub struct RelevanceData {
    pub items: Vec<SentenceItem>,
    /// Normalized labels per transcript.
    pub labels: Vec<HashSet<String>>,
    /// Item index range per transcript.
    pub ranges: Vec<std::ops::Range<usize>>,
}

impl RelevanceData {
    pub fn build(model: &FinExModel, examples: &[TranscriptExample], bank: &ParseBank) -> Result<Self> {
        let mut data = Self::default();
        for (t, ex) in examples.iter().enumerate() {
            let labels: HashSet<String> = ex.labels.iter().map(|l| normalize(l)).collect();
            let start = data.items.len();
            for (sentence, input) in prepare_transcript(model, ex, bank)? {
                if let Some(input) = input {
                    data.items.push(SentenceItem {
                        target: labels.contains(&normalize(&sentence.text)),
                        text: sentence.text,
                        input,
                        transcript: t,
                    });
                }
            }
            data.ranges.push(start..data.items.len());
            data.labels.push(labels);
        }
        Ok(data)
    }

    pub fn targets(&self) -> Vec<bool> {
        self.items.iter().map(|i| i.target).collect()
    }

    pub fn positive_fraction(&self) -> f64 {
        ratio(self.items.iter().filter(|i| i.target).count(), self.items.len())
    }
}

/// Eval-mode logits for every item. Identical inputs are scored once.
pub fn score_logits(model: &FinExModel, data: &RelevanceData) -> Result<Vec<f64>> {
    type Key<'a> = (&'a [usize], Vec<(usize, usize)>);
    let mut unique: HashMap<Key, usize> = HashMap::new();
    let mut firsts = Vec::new();
    let slot: Vec<usize> = data
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let key = (
                it.input.ids.as_slice(),
                it.input.graph.edges.iter().map(|e| (e.head, e.dependent)).collect(),
            );
            *unique.entry(key).or_insert_with(|| {
                firsts.push(i);
                firsts.len() - 1
            })
        })
        .collect();
    let logits: Vec<f64> = firsts
        .par_iter()
        .map(|&i| {
            let mut tape = Tape::new();
            let l = model.relevance_logit(&mut tape, &data.items[i].input, &mut Ctx::eval())?;
            Ok(tape.value(l).item())
        })
        .collect::<Result<_>>()?;
    Ok(slot.into_iter().map(|s| logits[s]).collect())
}

/// Mean binary cross-entropy of logits against item targets.
pub fn bce_mean(logits: &[f64], data: &RelevanceData) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let total: f64 = logits
        .iter()
        .zip(&data.items)
        .map(|(&z, it)| z.max(0.0) - z * f64::from(u8::from(it.target)) + (-z.abs()).exp().ln_1p())
        .sum();
    total / logits.len() as f64
}

/// Sentence-level micro metrics: a selected sentence is a true positive
/// when its normalized text is one of its transcript's labels; labels no
/// selection matched are false negatives.
pub fn metrics_from_scores(data: &RelevanceData, probs: &[f64], strategy: &ThresholdStrategy, loss: f64) -> Result<EpochMetrics> {
    let mut c = Confusion::default();
    for (t, range) in data.ranges.iter().enumerate() {
        let chosen: HashSet<usize> = strategy.select(&probs[range.clone()])?.into_iter().collect();
        let mut matched = HashSet::new();
        for (k, idx) in range.clone().enumerate() {
            let norm = normalize(&data.items[idx].text);
            let is_label = data.labels[t].contains(&norm);
            if chosen.contains(&k) {
                if is_label && matched.insert(norm) {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            } else if !is_label {
                c.tn += 1;
            }
        }
        c.fn_ += data.labels[t].len() - matched.len();
    }
    Ok(EpochMetrics::from_confusion(&c, loss))
}

/// Scores `data` in eval mode and reports metrics under `strategy`.
pub fn evaluate(model: &FinExModel, data: &RelevanceData, strategy: &ThresholdStrategy) -> Result<EpochMetrics> {
    let logits = score_logits(model, data)?;
    let probs: Vec<f64> = logits.iter().map(|&z| stable_sigmoid(z)).collect();
    metrics_from_scores(data, &probs, strategy, bce_mean(&logits, data))
}
