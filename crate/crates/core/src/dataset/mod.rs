//! Synthetic data, tokenization and transcript I/O.

pub mod generator;
pub mod nli;
pub mod pool;
pub mod segment;
pub mod transcript;
pub mod vocab;

pub use generator::{generate_corpus, proportional_sizes, split_dataset, Splits, DEFAULT_SPLIT};
pub use nli::{make_nli_toy_set, NliLabel, NliPair};
pub use pool::{Utterance, UtterancePool};
pub use segment::{normalize, segment_transcript, Sentence};
pub use transcript::{read_jsonl, write_jsonl, TranscriptExample};
pub use vocab::{tokenize, Vocab};
