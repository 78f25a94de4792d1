use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand, ValueEnum};
use san_core::data::{write_cache, LabelSet, SyntheticTask, SyntheticTaskSpec, TsvSchema};
use san_core::model::Head;
use san_core::train::{
    compare_single_vs_multi, dump_step_predictions, evaluate, index_split, load_checkpoint, run_training, sweep_steps,
    write_jsonl, DataConfig, Datasets, FileFormat, RunConfig,
};
use san_core::SanError;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "san",
    version,
    about = "Train and analyse stochastic answer networks for sentence-pair inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes config.json, metrics.jsonl and best.ckpt under --out.
    Train(RunArgs),
    /// Evaluate a checkpoint on a dev file or the synthetic dev split.
    Eval(CheckpointArgs),
    /// Train the one-shot and multi-step heads from identical initial parameters.
    Compare(RunArgs),
    /// Train once per answer-step count from 1 to --steps (default 10).
    Sweep(RunArgs),
    /// Write per-step predictions of a checkpoint, one JSON object per example.
    DumpSteps(CheckpointArgs),
    /// Write synthetic train and dev splits in the cache format.
    SynthGen(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Snli,
    Quora,
    Scitail,
    /// The internal tab-separated cache written by synth-gen.
    Cache,
}

#[derive(Args)]
struct DataArgs {
    /// Train then dev file (train subcommands) or a single dev file (eval, dump-steps).
    #[arg(long, num_args = 1..=2, value_name = "PATH")]
    data: Vec<PathBuf>,
    /// Corpus format; inferred for .jsonl (snli) and .cache files.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Use the synthetic task instead of files.
    #[arg(long, conflicts_with = "data")]
    synthetic: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; unset fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Whitespace-separated word vectors.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train the one-shot head instead of the multi-step head.
    #[arg(long)]
    single_step: bool,
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Task seed; fixes the pseudo-word vocabulary and the examples.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[arg(long, default_value_t = 1000)]
    dev: usize,
}

fn file_format(format: Option<Format>, path: &Path) -> anyhow::Result<FileFormat> {
    Ok(match format {
        Some(Format::Snli) => FileFormat::SnliJsonl,
        Some(Format::Quora) => FileFormat::Tsv {
            schema: TsvSchema::quora(),
        },
        Some(Format::Scitail) => FileFormat::Tsv {
            schema: TsvSchema::scitail(),
        },
        Some(Format::Cache) => FileFormat::Cache {
            labels: LabelSet::three_way(),
        },
        None if path.extension().is_some_and(|e| e == "jsonl") => FileFormat::SnliJsonl,
        None if path.extension().is_some_and(|e| e == "cache") => FileFormat::Cache {
            labels: LabelSet::three_way(),
        },
        None => bail!(SanError::Config(format!(
            "cannot infer the format of {}; pass --format",
            path.display()
        ))),
    })
}

fn run_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None if args.data.synthetic => RunConfig::desk(),
        None => RunConfig::default(),
    };
    if args.data.synthetic {
        if !matches!(config.data, DataConfig::Synthetic { .. }) {
            config.data = DataConfig::default();
        }
    } else if !args.data.data.is_empty() {
        let [train, dev] = args.data.data.as_slice() else {
            bail!(SanError::Config("--data takes a train file and a dev file".into()));
        };
        config.data = DataConfig::Files {
            format: file_format(args.data.format, train)?,
            train: train.clone(),
            dev: dev.clone(),
            embeddings: args.embeddings.clone(),
        };
    } else if args.config.is_none() {
        bail!(SanError::Config(
            "pass --config, --data TRAIN DEV or --synthetic".into()
        ));
    }
    if let (Some(path), DataConfig::Files { embeddings, .. }) = (&args.embeddings, &mut config.data) {
        *embeddings = Some(path.clone());
    }
    if let Some(t) = args.steps {
        config.model.steps = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if args.single_step {
        config.head = Head::Single;
    }
    config.validate()?;
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_report(out: Option<&Path>, name: &str, value: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    }
    print_json(value)
}

/// Dev pairs for a checkpoint: a file read with the checkpoint's label set, or
/// the synthetic dev split of the checkpoint's own task.
fn checkpoint_data(
    args: &CheckpointArgs,
    config: &RunConfig,
    labels: &LabelSet,
) -> anyhow::Result<Vec<san_core::data::TokenizedPair>> {
    let mut run = config.clone();
    if args.data.synthetic {
        if !matches!(run.data, DataConfig::Synthetic { .. }) {
            run.data = DataConfig::default();
        }
    } else {
        let [dev] = args.data.data.as_slice() else {
            bail!(SanError::Config("pass one --data dev file or --synthetic".into()));
        };
        run.data = DataConfig::Files {
            format: file_format(args.data.format, dev)?,
            train: dev.clone(),
            dev: dev.clone(),
            embeddings: None,
        };
    }
    let data = Datasets::load(&run)?;
    if &data.vocab.labels != labels {
        bail!(SanError::LabelSetMismatch {
            model: labels.0.clone(),
            data: data.vocab.labels.0.clone(),
        });
    }
    Ok(data.dev)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => {
            let config = run_config(&args)?;
            let data = Datasets::load(&config)?;
            let outcome = run_training(&config, &data, args.out.as_deref())?;
            for r in &outcome.history {
                eprintln!(
                    "epoch {:>3} {:<5} acc {:.4} loss {:.4} lr {}",
                    r.epoch, r.split, r.accuracy, r.mean_loss, r.learning_rate
                );
            }
            println!(
                "best dev accuracy {:.4} at epoch {}",
                outcome.best_dev_accuracy, outcome.best_epoch
            );
        }
        Command::Eval(args) => {
            let ck = load_checkpoint(&args.checkpoint)?;
            let pairs = checkpoint_data(&args, &ck.config, &ck.vocab.labels)?;
            let (inputs, labels) = index_split(&ck.vocab, &pairs);
            let tally = evaluate(&ck.model, ck.config.head, &inputs, &labels)?;
            write_report(args.out.as_deref(), "eval.json", &tally.record(0, "eval", 0.0, 0.0))?;
        }
        Command::Compare(args) => {
            let config = run_config(&args)?;
            let data = Datasets::load(&config)?;
            let report = compare_single_vs_multi(&config, &data)?;
            write_report(args.out.as_deref(), "compare.json", &report)?;
        }
        Command::Sweep(args) => {
            let max = args.steps.unwrap_or(10);
            let out = args.out.clone();
            let mut config = run_config(&RunArgs { steps: None, ..args })?;
            config.model.steps = max;
            config.validate()?;
            let data = Datasets::load(&config)?;
            let steps: Vec<usize> = (1..=max).collect();
            let report = sweep_steps(&config, &data, &steps)?;
            write_report(out.as_deref(), "sweep.json", &report)?;
        }
        Command::DumpSteps(args) => {
            let ck = load_checkpoint(&args.checkpoint)?;
            let pairs = checkpoint_data(&args, &ck.config, &ck.vocab.labels)?;
            let traces = dump_step_predictions(&ck.model, &ck.vocab, &pairs)?;
            match &args.out {
                Some(path) => write_jsonl(path, &traces)?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    for t in &traces {
                        writeln!(stdout, "{}", serde_json::to_string(t)?)?;
                    }
                }
            }
        }
        Command::SynthGen(args) => {
            let mut spec = SyntheticTaskSpec::default();
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let task = SyntheticTask::new(spec)?;
            fs::create_dir_all(&args.out)?;
            for (name, count, stream) in [("train", args.train, 0), ("dev", args.dev, 1)] {
                write_cache(&args.out.join(format!("{name}.cache")), &task.generate(count, stream))?;
            }
            eprintln!("wrote {} and {} pairs to {}", args.train, args.dev, args.out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<SanError>() {
        Some(SanError::Divergence(_)) => EXIT_DIVERGENCE,
        Some(e) if e.is_data_error() || matches!(e, SanError::Empty(_)) => EXIT_DATA,
        Some(_) => EXIT_USAGE,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_DATA,
        None => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
