use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.15;
pub const DEFAULT_TAU: f64 = 0.5;

/// Median of a non-empty list; even lengths average the two middle values.
pub fn median(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Validation("median of an empty score list".into()));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

/// Indices with `s_i ≥ median(S) + delta`.
pub fn dynamic_threshold_median(scores: &[f64], delta: f64) -> Result<Vec<usize>> {
    let cut = median(scores)? + delta;
    Ok((0..scores.len()).filter(|&i| scores[i] >= cut).collect())
}

/// Elbow of the descending score curve: the interior position `k` with the
/// largest second difference `s[k−1] − 2s[k] + s[k+1]` (smallest `k` on
/// ties). The `k` scores before the elbow are kept, i.e. every index with a
/// score of at least `sorted[k−1]`. Fewer than three scores fall back to the
/// median rule with `fallback_delta`.
pub fn dynamic_threshold_elbow(scores: &[f64], fallback_delta: f64) -> Result<Vec<usize>> {
    if scores.len() < 3 {
        return dynamic_threshold_median(scores, fallback_delta);
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut best_k = 1;
    let mut best_d = f64::NEG_INFINITY;
    for k in 1..s.len() - 1 {
        let d = s[k - 1] - 2.0 * s[k] + s[k + 1];
        if d > best_d {
            best_d = d;
            best_k = k;
        }
    }
    let cut = s[best_k - 1];
    Ok((0..scores.len()).filter(|&i| scores[i] >= cut).collect())
}

/// Indices with `s_i ≥ tau`.
pub fn fixed_threshold(scores: &[f64], tau: f64) -> Vec<usize> {
    (0..scores.len()).filter(|&i| scores[i] >= tau).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Fixed,
    MedianOffset,
    Elbow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStrategy {
    pub kind: ThresholdKind,
    pub fixed_tau: f64,
    pub delta: f64,
}

impl Default for ThresholdStrategy {
    fn default() -> Self {
        Self::fixed(DEFAULT_TAU)
    }
}

impl ThresholdStrategy {
    pub fn fixed(tau: f64) -> Self {
        Self {
            kind: ThresholdKind::Fixed,
            fixed_tau: tau,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn median(delta: f64) -> Self {
        Self {
            kind: ThresholdKind::MedianOffset,
            fixed_tau: DEFAULT_TAU,
            delta,
        }
    }

    pub fn elbow() -> Self {
        Self {
            kind: ThresholdKind::Elbow,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fixed_tau) {
            return Err(Error::Validation(format!("tau {} not in [0, 1]", self.fixed_tau)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Validation(format!("delta {} must be non-negative", self.delta)));
        }
        Ok(())
    }

    /// Selected indices; an empty score list selects nothing.
    pub fn select(&self, scores: &[f64]) -> Result<Vec<usize>> {
        self.validate()?;
        if scores.is_empty() {
            return Ok(Vec::new());
        }
        match self.kind {
            ThresholdKind::Fixed => Ok(fixed_threshold(scores, self.fixed_tau)),
            ThresholdKind::MedianOffset => dynamic_threshold_median(scores, self.delta),
            ThresholdKind::Elbow => dynamic_threshold_elbow(scores, self.delta),
        }
    }
}

impl fmt::Display for ThresholdStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ThresholdKind::Fixed => write!(f, "fixed(tau={})", self.fixed_tau),
            ThresholdKind::MedianOffset => write!(f, "median(delta={})", self.delta),
            ThresholdKind::Elbow => write!(f, "elbow"),
        }
    }
}
