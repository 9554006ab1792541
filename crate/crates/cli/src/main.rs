//! `scm`: preprocessing, training, evaluation and cross-validation of the
//! sentiment convolutional model from the command line.
//!
//! Exit status is 0 on success, 1 when the data or model is at fault and 2
//! when the invocation itself is wrong.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::RunConfig;

/// An error in how the tool was invoked rather than in the data.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "scm", version, about = "Dialectal Arabic sentiment classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random choice (splits, initialization, shuffling, dropout).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for reports and artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log progress to standard error (-vv for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Labeled CSV (`text,label`) or judged CSV (`text,judge1,judge2,judge3`).
    #[arg(long, value_name = "CSV")]
    dataset: Option<PathBuf>,
    /// 2 (positive/negative) or 3 (adds neutral).
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    classes: Option<u8>,
    /// Stopword list, one word per line. Defaults to the built-in list.
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_parser = ["max", "avg", "min", "mma"])]
    pooling: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Word vectors in text format, one `word v1 .. vN` per line.
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelFiles {
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize the `text` column of a CSV, keeping every row and column.
    Normalize {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        stopwords: Option<PathBuf>,
    },
    /// Fit the vocabulary on a whole dataset and write `vocab.tsv`.
    BuildVocab {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train on an 80/10/10 split and score the test part.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score a saved model on a labeled dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        files: ModelFiles,
    },
    /// k-fold cross-validation with a fresh model per fold.
    Crossval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Classify raw texts with a saved model.
    Predict {
        #[command(flatten)]
        files: ModelFiles,
        /// Text to classify; repeatable.
        #[arg(long)]
        text: Vec<String>,
        /// CSV with a `text` column.
        #[arg(long = "in", value_name = "CSV")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        stopwords: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Random points per layer family.
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = scm_core::nn::gradcheck::DEFAULT_EPS)]
        eps: f64,
        /// Number of whole-model checks on the tiny model.
        #[arg(long, default_value_t = 5)]
        model_seeds: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Normalize { .. } => "normalize",
            Command::BuildVocab { .. } => "build-vocab",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Crossval { .. } => "crossval",
            Command::Predict { .. } => "predict",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }

    /// Flags that stand in for configuration keys.
    fn assignments(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let path = |p: &PathBuf| p.display().to_string();
        let data = |out: &mut Vec<_>, d: &DataArgs| {
            if let Some(p) = &d.dataset {
                out.push(("dataset", path(p)));
            }
            if let Some(c) = d.classes {
                out.push(("num_classes", c.to_string()));
            }
            if let Some(p) = &d.stopwords {
                out.push(("stopwords", path(p)));
            }
        };
        let model = |out: &mut Vec<_>, m: &ModelArgs| {
            if let Some(p) = &m.pooling {
                out.push(("pooling", p.clone()));
            }
            if let Some(e) = m.epochs {
                out.push(("epochs", e.to_string()));
            }
            if let Some(b) = m.batch_size {
                out.push(("batch_size", b.to_string()));
            }
            if let Some(p) = &m.embeddings {
                out.push(("embeddings", path(p)));
            }
        };
        let files = |out: &mut Vec<_>, f: &ModelFiles| {
            if let Some(p) = &f.checkpoint {
                out.push(("checkpoint", path(p)));
            }
            if let Some(p) = &f.vocab {
                out.push(("vocab", path(p)));
            }
        };
        match self {
            Command::Normalize { stopwords, .. } | Command::Predict { stopwords, .. } => {
                if let Some(p) = stopwords {
                    out.push(("stopwords", path(p)));
                }
                if let Command::Predict { files: f, .. } = self {
                    files(&mut out, f);
                }
            }
            Command::BuildVocab { data: d } => data(&mut out, d),
            Command::Train { data: d, model: m } | Command::Crossval { data: d, model: m, .. } => {
                data(&mut out, d);
                model(&mut out, m);
            }
            Command::Evaluate { data: d, files: f } => {
                data(&mut out, d);
                files(&mut out, f);
            }
            Command::Gradcheck { .. } => {}
        }
        out
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_assignments(&cli.common.set)?;
    if let Some(seed) = cli.common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    for (key, value) in cli.command.assignments() {
        cfg.set(key, &value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli)?;
    let ctx = commands::Run::new(cli.command.name(), cfg, cli.common.out_dir.clone())?;
    match cli.command {
        Command::Normalize { input, out, .. } => commands::normalize(ctx, &input, &out),
        Command::BuildVocab { .. } => commands::build_vocab(ctx),
        Command::Train { .. } => commands::train(ctx),
        Command::Evaluate { .. } => commands::evaluate(ctx),
        Command::Crossval { k, .. } => commands::crossval(ctx, k),
        Command::Predict { text, input, .. } => commands::predict(ctx, text, input.as_deref()),
        Command::Gradcheck {
            points,
            eps,
            model_seeds,
        } => commands::gradcheck(ctx, points, eps, model_seeds),
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<Usage>().is_some() || matches!(e.downcast_ref::<scm_core::Error>(), Some(scm_core::Error::Config(_)))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage(&err) { 2 } else { 1 })
        }
    }
}
