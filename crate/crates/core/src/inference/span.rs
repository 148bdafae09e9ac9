use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::vocab::split_words;
use crate::error::{Error, Result};
use crate::model::FinExModel;
use crate::nn::Ctx;
use crate::tensor::{sigmoid, softmax, Tape};

/// Independent softmax over start and end logits.
pub fn span_probs(start_logits: &[f64], end_logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (softmax(start_logits), softmax(end_logits))
}

/// Best `(i, j, P_start(i)·P_end(j))` over `i ≤ j`, ranked by the joint
/// probability times `multiplier(i, j)`. Ties go to the smaller `i`, then
/// the smaller `j`. Returns `None` for empty or mismatched inputs.
pub fn select_span(
    p_start: &[f64],
    p_end: &[f64],
    multiplier: Option<&dyn Fn(usize, usize) -> f64>,
) -> Option<(usize, usize, f64)> {
    if p_start.is_empty() || p_start.len() != p_end.len() {
        return None;
    }
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for (i, &ps) in p_start.iter().enumerate() {
        for (j, &pe) in p_end.iter().enumerate().skip(i) {
            let joint = ps * pe;
            let score = multiplier.map_or(joint, |m| joint * m(i, j));
            if best.is_none_or(|b| score > b.3) {
                best = Some((i, j, joint, score));
            }
        }
    }
    best.map(|(i, j, joint, _)| (i, j, joint))
}

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 1.2;

/// `char_len^(−gamma)`; 1 when `gamma` is 0.
pub fn length_norm(char_len: usize, gamma: f64) -> f64 {
    (char_len.max(1) as f64).powf(-gamma)
}

/// Terms matched case-insensitively on whole words.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    terms: BTreeSet<Vec<String>>,
}

impl Lexicon {
    pub fn new<'a>(terms: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            terms: terms
                .into_iter()
                .map(split_words)
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    /// One term per line; blank lines ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn matches(&self, text: &str) -> bool {
        let words = split_words(text);
        self.terms
            .iter()
            .any(|t| words.windows(t.len()).any(|w| w == t.as_slice()))
    }
}

/// `beta` when any lexicon term occurs in the span, else 1.
pub fn entity_boost(span_text: &str, lexicon: &Lexicon, beta: f64) -> f64 {
    if lexicon.matches(span_text) {
        beta
    } else {
        1.0
    }
}

/// Abstain iff `sigmoid(logit) > tau`.
pub fn no_span_gate(no_span_logit: f64, tau: f64) -> bool {
    sigmoid(no_span_logit) > tau
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    /// Word indices, `None` when abstained.
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub joint_prob: f64,
    pub abstained: bool,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct SpanOptions {
    pub tau: f64,
    /// Length penalty exponent; `None` disables.
    pub gamma: Option<f64>,
    pub lexicon: Option<Lexicon>,
    pub beta: f64,
}

impl Default for SpanOptions {
    fn default() -> Self {
        Self {
            tau: 0.5,
            gamma: None,
            lexicon: None,
            beta: DEFAULT_BETA,
        }
    }
}

/// Runs the span head over `text` and selects a word span, or abstains.
pub fn predict_span(model: &FinExModel, text: &str, opts: &SpanOptions) -> Result<SpanPrediction> {
    let input = model.prepare(text, None)?;
    let words: Vec<String> = input.graph.tokens.clone();
    let mut tape = Tape::new();
    let out = model.span_logits(&mut tape, &input.ids, &mut Ctx::eval())?;
    if no_span_gate(tape.value(out.no_span).item(), opts.tau) {
        return Ok(SpanPrediction {
            start: None,
            end: None,
            joint_prob: 0.0,
            abstained: true,
            text: String::new(),
        });
    }
    // Row 0 is [CLS]; spans range over the words.
    let (ps, pe) = span_probs(&tape.value(out.start).data()[1..], &tape.value(out.end).data()[1..]);
    let span_text = |i: usize, j: usize| words[i..=j].join(" ");
    let mult = |i: usize, j: usize| {
        let t = span_text(i, j);
        let mut m = 1.0;
        if let Some(g) = opts.gamma {
            m *= length_norm(t.chars().count(), g);
        }
        if let Some(lex) = &opts.lexicon {
            m *= entity_boost(&t, lex, opts.beta);
        }
        m
    };
    let use_mult = opts.gamma.is_some() || opts.lexicon.is_some();
    let (i, j, joint) = select_span(&ps, &pe, use_mult.then_some(&mult as &dyn Fn(usize, usize) -> f64))
        .ok_or_else(|| Error::Validation("span selection over an empty sentence".into()))?;
    Ok(SpanPrediction {
        start: Some(i),
        end: Some(j),
        joint_prob: joint,
        abstained: false,
        text: span_text(i, j),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn probs_examples() {
        let (s, e) = span_probs(&[0.0; 4], &[2.0; 4]);
        assert_eq!(s, vec![0.25; 4]);
        assert_eq!(e, vec![0.25; 4]);
        let (s, _) = span_probs(&[1f64.ln(), 2f64.ln(), 3f64.ln()], &[0.0]);
        for (a, b) in s.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn select_examples() {
        let (i, j, p) = select_span(&[0.1, 0.6, 0.3], &[0.2, 0.3, 0.5], None).unwrap();
        assert_eq!((i, j), (1, 2));
        assert!((p - 0.30).abs() < 1e-12);
        assert_eq!(select_span(&[1.0], &[1.0], None), Some((0, 0, 1.0)));
        assert_eq!(select_span(&[], &[], None), None);
        // All pairs tie: smallest i, then smallest j.
        assert_eq!(select_span(&[0.5, 0.5], &[0.5, 0.5], None).map(|t| (t.0, t.1)), Some((0, 0)));
        // A multiplier can move the argmax.
        let m = |i: usize, j: usize| if (i, j) == (0, 0) { 100.0 } else { 1.0 };
        assert_eq!(select_span(&[0.1, 0.6, 0.3], &[0.2, 0.3, 0.5], Some(&m)).map(|t| (t.0, t.1)), Some((0, 0)));
    }

    #[test]
    fn select_matches_sorted_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let l = rng.random_range(1..=16);
            let ps = softmax(&(0..l).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>());
            let pe = softmax(&(0..l).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>());
            let mut all: Vec<(f64, usize, usize)> =
                (0..l).flat_map(|i| (i..l).map(move |j| (i, j))).map(|(i, j)| (ps[i] * pe[j], i, j)).collect();
            all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let (i, j, p) = select_span(&ps, &pe, None).unwrap();
            assert_eq!((p, i, j), all[0]);
        }
    }

    #[test]
    fn length_norm_examples() {
        assert_eq!(length_norm(57, 0.0), 1.0);
        assert_eq!(length_norm(1, 0.1), 1.0);
        assert!((length_norm(100, 0.1) - 0.630_957_344_480_193).abs() < 1e-12);
    }

    #[test]
    fn entity_boost_rules() {
        let empty = Lexicon::default();
        assert_eq!(entity_boost("my 401k balance", &empty, 1.2), 1.0);
        let lex = Lexicon::new(["401k", "529", "credit limit"]);
        assert_eq!(entity_boost("my 401K balance", &lex, 1.2), 1.2);
        assert_eq!(entity_boost("401k and 529 and credit limit", &lex, 1.2), 1.2);
        assert_eq!(entity_boost("my 401kx plan", &lex, 1.2), 1.0);
        assert_eq!(entity_boost("raise my credit limit", &lex, 1.2), 1.2);
        assert_eq!(entity_boost("credit is limited", &lex, 1.2), 1.0);
    }

    #[test]
    fn lexicon_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("terms.txt");
        fs::write(&p, "401k\n\n529\n").unwrap();
        assert_eq!(Lexicon::load(&p).unwrap().len(), 2);
        assert!(Lexicon::load(dir.path().join("missing.txt")).is_err());
    }

    #[test]
    fn gate_boundaries() {
        assert!(!no_span_gate(0.0, 0.5));
        assert!(no_span_gate(10.0, 0.5));
        assert!(!no_span_gate(-10.0, 0.01));
    }
}
