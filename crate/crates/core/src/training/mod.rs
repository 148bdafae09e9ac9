//! Relevance training with oversampling, warmup and progressive unfreezing,
//! plus the small NLI training loop.

pub mod metrics;
pub mod nli;
pub mod optim;
pub mod sampler;
pub mod trainer;

pub use metrics::{evaluate, Confusion, EpochMetrics, RelevanceData};
pub use nli::{train_nli_toy, NliEpoch, NliTrainConfig};
pub use optim::{lr_schedule, AdamW, AdamWConfig};
pub use sampler::WeightedSampler;
pub use trainer::{save_metrics_csv, train, write_metrics_csv, EpochRecord, TrainConfig, TrainOutcome, CSV_HEADER};
