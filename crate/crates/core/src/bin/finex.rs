use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use finex::checkpoint;
use finex::dataset::{
    generate_corpus, proportional_sizes, read_jsonl, split_dataset, write_jsonl, TranscriptExample, UtterancePool,
    Vocab, DEFAULT_SPLIT,
};
use finex::depgraph::{parse_conllu, ParseBank};
use finex::encoder::LoraConfig;
use finex::inference::{batch_extract, ThresholdStrategy};
use finex::model::{FinExModel, ModelConfig};
use finex::training::{evaluate, save_metrics_csv, train, RelevanceData, TrainConfig};

#[derive(Parser)]
#[command(name = "finex", version, about = "Relevant-sentence extraction for call transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic transcript corpus and its splits.
    GenData(GenDataArgs),
    /// Train the relevance classifier and save the best checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a JSONL split.
    Eval(EvalArgs),
    /// Score transcripts and export the selected sentences as JSONL.
    Extract(ExtractArgs),
    /// Compare component parameter counts with the published table.
    AuditParams(AuditArgs),
}

#[derive(Args)]
struct SeedArg {
    /// RNG seed.
    #[arg(long, env = "FINEX_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory for corpus.jsonl and the train/validation/test splits.
    #[arg(long, default_value = "data")]
    out: PathBuf,
    /// Number of transcripts (multiple of 3).
    #[arg(long, default_value_t = 1200)]
    n: usize,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding train.jsonl and validation.jsonl.
    #[arg(long, required_unless_present = "show_config")]
    data: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long, required_unless_present = "show_config")]
    out: Option<PathBuf>,
    /// JSON training config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    /// Attach LoRA adapters to the encoder.
    #[arg(long)]
    lora: bool,
    /// Graph pathway on or off.
    #[arg(long, value_enum, default_value = "on")]
    gnn: Toggle,
    /// Override the number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Optional CoNLL-U parses for the training and validation sentences.
    #[arg(long)]
    parses: Option<PathBuf>,
    /// Metrics CSV path (default: next to the checkpoint).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    show_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyKind {
    Fixed,
    Median,
    Elbow,
}

#[derive(Args)]
struct StrategyArgs {
    #[arg(long, value_enum, default_value = "median")]
    strategy: StrategyKind,
    /// Margin above the median for the median strategy.
    #[arg(long, default_value_t = 0.15)]
    delta: f64,
    /// Cut-off for the fixed strategy.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
}

impl StrategyArgs {
    fn resolve(&self) -> ThresholdStrategy {
        let mut s = match self.strategy {
            StrategyKind::Fixed => ThresholdStrategy::fixed(self.tau),
            StrategyKind::Median => ThresholdStrategy::median(self.delta),
            StrategyKind::Elbow => ThresholdStrategy::elbow(),
        };
        s.fixed_tau = self.tau;
        s.delta = self.delta;
        s
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// JSONL split to evaluate.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long)]
    parses: Option<PathBuf>,
    /// Metrics JSON path (default: next to the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long)]
    parses: Option<PathBuf>,
    /// Worker threads; output order does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value = "table3")]
    profile: String,
    /// JSON report path.
    #[arg(long, default_value = "audit-params.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wall_time_secs: f64,
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn paths(ps: &[&Path]) -> Vec<String> {
    ps.iter().map(|p| p.display().to_string()).collect()
}

fn load_bank(parses: Option<&Path>) -> anyhow::Result<ParseBank> {
    let Some(p) = parses else { return Ok(ParseBank::new()) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let graphs = parse_conllu(&text).with_context(|| format!("parsing {}", p.display()))?;
    Ok(ParseBank::from_graphs(graphs))
}

fn load_split(path: &Path) -> anyhow::Result<Vec<TranscriptExample>> {
    if !path.exists() {
        bail!("missing split file {}", path.display());
    }
    let report = read_jsonl(path)?;
    for r in &report.rejected {
        eprintln!("{}: line {}: rejected: {}", path.display(), r.line, r.reason);
    }
    Ok(report.examples)
}

fn gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let seed = args.seed.seed;
    let corpus = generate_corpus(&UtterancePool::builtin(), args.n, seed)?;
    let splits = split_dataset(&corpus, proportional_sizes(args.n, DEFAULT_SPLIT), seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let files = [
        ("corpus.jsonl", &corpus),
        ("train.jsonl", &splits.train),
        ("validation.jsonl", &splits.validation),
        ("test.jsonl", &splits.test),
    ];
    let mut outputs = Vec::new();
    for (name, data) in files {
        let p = args.out.join(name);
        write_jsonl(&p, data)?;
        outputs.push(p);
    }
    eprintln!(
        "wrote {} transcripts ({} / {} / {}) to {} (seed {seed})",
        corpus.len(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        args.out.display()
    );
    write_manifest(
        &args.out.join("gen-data.manifest.json"),
        &RunManifest {
            command: "gen-data",
            config: json!({ "n": args.n, "split": proportional_sizes(args.n, DEFAULT_SPLIT) }),
            seed: Some(seed),
            inputs: vec![],
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    )
}

fn resolve_train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = args.seed.seed;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_config(args: &TrainArgs, cfg: &TrainConfig, vocab_size: usize) -> ModelConfig {
    let mut m = ModelConfig::desk(vocab_size);
    m.encoder.max_seq_len = cfg.max_seq_len;
    m.use_gnn = matches!(args.gnn, Toggle::On);
    m.lora = args.lora.then(LoraConfig::default);
    m
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let cfg = resolve_train_config(args)?;
    let lora = LoraConfig::default();
    if args.show_config {
        let m = model_config(args, &cfg, 0);
        let shown = json!({
            "train": cfg,
            "lora": { "enabled": args.lora, "rank": lora.rank, "alpha": lora.alpha,
                      "dropout_rate": lora.dropout_rate, "scaling": lora.scaling(), "targets": lora.targets },
            "encoder": { "d_model": m.encoder.d_model, "n_heads": m.encoder.n_heads, "n_layers": m.encoder.n_layers,
                         "d_ff": m.encoder.d_ff, "max_seq_len": m.encoder.max_seq_len,
                         "dropout_rate": m.encoder.dropout_rate },
            "gnn": { "enabled": m.use_gnn, "config": m.gnn },
            "span": m.span,
        });
        println!("{}", serde_json::to_string_pretty(&shown)?);
        return Ok(());
    }
    let (data_dir, out) = (args.data.as_ref().expect("clap"), args.out.as_ref().expect("clap"));
    let train_path = data_dir.join("train.jsonl");
    let val_path = data_dir.join("validation.jsonl");
    let train_ex = load_split(&train_path)?;
    let val_ex = load_split(&val_path)?;
    if train_ex.is_empty() || val_ex.is_empty() {
        bail!("train and validation splits must be non-empty");
    }
    let vocab = Vocab::build(train_ex.iter().map(|e| e.call_transcript.as_str()));
    let mut model = FinExModel::new(model_config(args, &cfg, vocab.len()), vocab, cfg.seed)?;
    let bank = load_bank(args.parses.as_deref())?;
    let train_data = RelevanceData::build(&model, &train_ex, &bank)?;
    let val_data = RelevanceData::build(&model, &val_ex, &bank)?;
    eprintln!(
        "seed {}: {} training sentences ({:.1}% relevant), {} validation sentences",
        cfg.seed,
        train_data.items.len(),
        100.0 * train_data.positive_fraction(),
        val_data.items.len()
    );
    let outcome = train(&mut model, &train_data, &val_data, &cfg, |r| {
        eprintln!(
            "epoch {:>2} [{}] loss {:.4} train f1 {:.3} | val loss {:.4} f1 {:.3} dynamic f1 {:.3}",
            r.epoch,
            if r.frozen { "frozen" } else { "unfrozen" },
            r.train.loss,
            r.train.f1,
            r.validation.loss,
            r.validation.f1,
            r.validation_dynamic.f1
        );
    })?;
    checkpoint::save(&model, cfg.seed, outcome.best_epoch, out)?;
    let metrics = args.metrics.clone().unwrap_or_else(|| out.with_extension("metrics.csv"));
    save_metrics_csv(&outcome.history, &metrics)?;
    eprintln!("best validation f1 {:.4} at epoch {}; saved {}", outcome.best_f1, outcome.best_epoch, out.display());
    let mut inputs = vec![train_path.as_path(), val_path.as_path()];
    if let Some(p) = &args.parses {
        inputs.push(p);
    }
    write_manifest(
        &manifest_path(out),
        &RunManifest {
            command: "train",
            config: json!({ "train": cfg, "model": model.config, "best_epoch": outcome.best_epoch,
                            "best_f1": outcome.best_f1 }),
            seed: Some(cfg.seed),
            inputs: paths(&inputs),
            outputs: paths(&[out, &metrics]),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    )
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let strategy = args.strategy.resolve();
    strategy.validate()?;
    let (model, header) = checkpoint::load(&args.ckpt)?;
    let data = load_split(&args.data)?;
    let bank = load_bank(args.parses.as_deref())?;
    let rel = RelevanceData::build(&model, &data, &bank)?;
    let metrics = evaluate(&model, &rel, &strategy)?;
    let report = json!({ "strategy": strategy.to_string(), "transcripts": data.len(),
                         "sentences": rel.items.len(), "metrics": metrics });
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    let out = args.out.clone().unwrap_or_else(|| args.ckpt.with_extension("eval.json"));
    std::fs::write(&out, text + "\n").with_context(|| format!("writing {}", out.display()))?;
    write_manifest(
        &manifest_path(&out),
        &RunManifest {
            command: "eval",
            config: json!({ "strategy": strategy }),
            seed: Some(header.seed),
            inputs: paths(&[&args.ckpt, &args.data]),
            outputs: paths(&[&out]),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    )
}

fn cmd_extract(args: &ExtractArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let strategy = args.strategy.resolve();
    strategy.validate()?;
    let (model, header) = checkpoint::load(&args.ckpt)?;
    let data = load_split(&args.input)?;
    let bank = load_bank(args.parses.as_deref())?;
    let records = batch_extract(&data, &model, &strategy, &bank, args.jobs.max(1), &args.out)?;
    eprintln!("extracted {} transcripts to {}", records.len(), args.out.display());
    write_manifest(
        &manifest_path(&args.out),
        &RunManifest {
            command: "extract",
            config: json!({ "strategy": strategy, "jobs": args.jobs }),
            seed: Some(header.seed),
            inputs: paths(&[&args.ckpt, &args.input]),
            outputs: paths(&[&args.out]),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    )
}

fn cmd_audit(args: &AuditArgs) -> anyhow::Result<bool> {
    let start = Instant::now();
    let Some(report) = finex::audit::run_profile(&args.profile) else {
        bail!("unknown audit profile {:?} (known: {:?})", args.profile, finex::audit::PROFILES);
    };
    let report = report?;
    print!("{report}");
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    write_manifest(
        &manifest_path(&args.out),
        &RunManifest {
            command: "audit-params",
            config: json!({ "profile": args.profile }),
            seed: None,
            inputs: vec![],
            outputs: paths(&[&args.out]),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Extract(a) => cmd_extract(a).map(|_| true),
        Command::AuditParams(a) => cmd_audit(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: parameter audit found mismatches");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
