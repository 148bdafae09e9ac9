//! Generates a corpus, trains the sentence-relevance classifier with the
//! default two-stage schedule and prints per-epoch metrics.
//!
//!     cargo run --example train_relevance -- [n_transcripts] [epochs]

use std::time::Instant;

use finex::dataset::{generate_corpus, proportional_sizes, split_dataset, UtterancePool, Vocab, DEFAULT_SPLIT};
use finex::depgraph::ParseBank;
use finex::model::{FinExModel, ModelConfig};
use finex::training::{train, RelevanceData, TrainConfig};

fn main() -> finex::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(1200, |a| a.parse().expect("n_transcripts"));
    let epochs: usize = args.next().map_or(10, |a| a.parse().expect("epochs"));

    let corpus = generate_corpus(&UtterancePool::builtin(), n, 42)?;
    let splits = split_dataset(&corpus, proportional_sizes(n, DEFAULT_SPLIT), 42)?;
    let vocab = Vocab::build(splits.train.iter().map(|e| e.call_transcript.as_str()));
    let mut model = FinExModel::new(ModelConfig::desk(vocab.len()), vocab, 42)?;

    let bank = ParseBank::new();
    let train_data = RelevanceData::build(&model, &splits.train, &bank)?;
    let val_data = RelevanceData::build(&model, &splits.validation, &bank)?;
    println!(
        "{} train sentences ({:.1}% relevant), {} validation sentences",
        train_data.items.len(),
        100.0 * train_data.positive_fraction(),
        val_data.items.len()
    );

    let config = TrainConfig {
        epochs,
        unfreeze_after_epoch: TrainConfig::default().unfreeze_after_epoch.min(epochs - 1),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train(&mut model, &train_data, &val_data, &config, |r| {
        println!(
            "epoch {:>2} {:<8} loss {:.4}  train f1 {:.3}  val f1 {:.3} (dynamic {:.3})  enc |g| {:.3e}  {:.0?}",
            r.epoch,
            if r.frozen { "frozen" } else { "unfrozen" },
            r.train.loss,
            r.train.f1,
            r.validation.f1,
            r.validation_dynamic.f1,
            r.encoder_grad_norm,
            start.elapsed()
        );
    })?;
    println!("best validation F1 {:.3} at epoch {}", outcome.best_f1, outcome.best_epoch);
    Ok(())
}
