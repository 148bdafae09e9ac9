use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::threshold::ThresholdStrategy;
use crate::dataset::segment::{segment_transcript, Sentence};
use crate::dataset::transcript::TranscriptExample;
use crate::depgraph::ParseBank;
use crate::error::{Error, Result};
use crate::model::{FinExModel, SentenceInput};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSentence {
    pub sentence: Sentence,
    /// Relevance probability; `None` for sentences that are not scored
    /// (non-customer turns).
    pub score: Option<f64>,
    pub selected: bool,
}

/// Segmented sentences of `transcript` with model inputs for the customer
/// ones, in transcript order.
pub fn prepare_transcript(
    model: &FinExModel,
    transcript: &TranscriptExample,
    bank: &ParseBank,
) -> Result<Vec<(Sentence, Option<SentenceInput>)>> {
    let sentences = segment_transcript(&transcript.call_transcript);
    if sentences.is_empty() {
        return Err(Error::Validation(format!("{}: transcript is empty", transcript.id)));
    }
    sentences
        .into_iter()
        .enumerate()
        .map(|(idx, s)| {
            let input = if s.is_customer() {
                let words = crate::dataset::vocab::split_words(&s.text);
                let graph = if words.is_empty() {
                    None
                } else {
                    Some(bank.graph_for(&transcript.id, idx, &words)?)
                };
                Some(model.prepare(&s.text, graph.as_ref())?)
            } else {
                None
            };
            Ok((s, input))
        })
        .collect()
}

/// Scores every customer sentence and applies `strategy` to those scores.
pub fn extract_sentences(
    transcript: &TranscriptExample,
    model: &FinExModel,
    strategy: &ThresholdStrategy,
    bank: &ParseBank,
) -> Result<Vec<ScoredSentence>> {
    let prepared = prepare_transcript(model, transcript, bank)?;
    let inputs: Vec<SentenceInput> = prepared.iter().filter_map(|(_, i)| i.clone()).collect();
    let scores = model.score(&inputs)?;
    let chosen = strategy.select(&scores)?;
    let mut out = Vec::with_capacity(prepared.len());
    let mut k = 0;
    for (sentence, input) in prepared {
        let (score, selected) = if input.is_some() {
            let r = (Some(scores[k]), chosen.binary_search(&k).is_ok());
            k += 1;
            r
        } else {
            (None, false)
        };
        out.push(ScoredSentence {
            sentence,
            score,
            selected,
        });
    }
    Ok(out)
}

/// One line of the extraction export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractRecord {
    pub id: String,
    pub selected: Vec<String>,
    /// Customer-sentence scores in transcript order.
    pub scores: Vec<f64>,
    pub strategy: String,
}

/// Extracts every transcript, in parallel over `jobs` threads, returning
/// records in dataset order.
pub fn extract_records(
    data: &[TranscriptExample],
    model: &FinExModel,
    strategy: &ThresholdStrategy,
    bank: &ParseBank,
    jobs: usize,
) -> Result<Vec<ExtractRecord>> {
    let run = |ex: &TranscriptExample| -> Result<ExtractRecord> {
        let scored = extract_sentences(ex, model, strategy, bank)?;
        Ok(ExtractRecord {
            id: ex.id.clone(),
            selected: scored
                .iter()
                .filter(|s| s.selected)
                .map(|s| s.sentence.text.clone())
                .collect(),
            scores: scored.iter().filter_map(|s| s.score).collect(),
            strategy: strategy.to_string(),
        })
    };
    if jobs <= 1 {
        return data.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    pool.install(|| data.par_iter().map(run).collect())
}

/// Writes one JSONL record per transcript to `out`.
pub fn batch_extract(
    data: &[TranscriptExample],
    model: &FinExModel,
    strategy: &ThresholdStrategy,
    bank: &ParseBank,
    jobs: usize,
    out: impl AsRef<Path>,
) -> Result<Vec<ExtractRecord>> {
    let path = out.as_ref();
    let records = extract_records(data, model, strategy, bank, jobs)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &records {
        let line = serde_json::to_string(r)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(records)
}
