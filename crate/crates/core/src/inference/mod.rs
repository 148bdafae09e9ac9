//! Decision layer: span selection and abstention, sentence thresholds and
//! transcript-level extraction.

pub mod extract;
pub mod span;
pub mod threshold;

pub use extract::{batch_extract, extract_records, extract_sentences, prepare_transcript, ExtractRecord, ScoredSentence};
pub use span::{
    entity_boost, length_norm, no_span_gate, predict_span, select_span, span_probs, Lexicon, SpanOptions,
    SpanPrediction,
};
pub use threshold::{
    dynamic_threshold_elbow, dynamic_threshold_median, fixed_threshold, median, ThresholdKind, ThresholdStrategy,
};
