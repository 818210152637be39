//! Command-line front end: `deepmr prepare|train|evaluate|ablate|gridsearch`.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_ablate, cmd_evaluate, cmd_gridsearch, cmd_prepare, cmd_train, load_prepared, resolve_split,
    train_and_write, LoadedData, TrainOutcome, ABLATION_EPOCHS_FILE, ABLATION_FILE, ABLATION_HEADER,
    BETA_TRAJECTORY_FILE, BLOB_FILE, EPOCHS_FILE, EPOCHS_HEADER, EVAL_FILE, GRID_BEST_DIR, GRID_FILE,
    GRID_HEADER, MANIFEST_FILE, REPORT_FILE, TEST_FILE, TRAIN_FILE, VAL_FILE, VOCAB_FILE,
};
pub use config::{
    threads_from_env, BetaName, BetaSetting, BranchSetting, GridPoint, RunConfig, DEFAULT_GRID_DROPOUT,
    DEFAULT_GRID_EMBEDDING_DIM, DEFAULT_GRID_L2_LAMBDA, DEFAULT_GRID_LEARNING_RATE,
};

use crate::Result;

#[derive(Debug, Parser)]
#[command(name = "deepmr", version, about = "DeepMR click-through-rate model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary, sample negatives and write the 8:1:1 splits.
    Prepare(CommonArgs),
    /// Train every configured seed; write checkpoints, epochs.csv and report.csv.
    Train(TrainArgs),
    /// Score a split with a checkpoint.
    Evaluate(EvaluateArgs),
    /// Train a family of variants and compare them.
    Ablate(AblateArgs),
    /// Exhaustive grid over embedding size, learning rate, L2 and dropout.
    Gridsearch(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Data seed for `prepare`; replaces the seed list otherwise.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Manifest path; defaults to model.manifest.json under the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `train`, `val`, `test` or a canonical file path.
    #[arg(long, default_value = "val")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub mode: AblationMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblationMode {
    Rezero,
    ResidualStyle,
    Beta,
    BetaLearn,
    Arch,
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Rezero => "rezero",
            AblationMode::ResidualStyle => "residual-style",
            AblationMode::Beta => "beta",
            AblationMode::BetaLearn => "beta-learn",
            AblationMode::Arch => "arch",
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Loads the config (relative paths resolve against its directory) and
/// applies command-line overrides.
fn load_config(args: &CommonArgs, prepare: bool) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("")).to_path_buf();
    if let Some(p) = cfg.input.as_mut() {
        resolve(&base, p);
    }
    if let Some(p) = cfg.data_dir.as_mut() {
        resolve(&base, p);
    }
    resolve(&base, &mut cfg.out);
    if !prepare && cfg.data_dir.is_none() {
        // prepared data stays where the config put it when --out redirects results
        cfg.data_dir = Some(cfg.out.clone());
    }

    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        if prepare {
            cfg.data_seed = seed;
        } else {
            cfg.seeds = vec![seed];
        }
    }
    if args.deterministic {
        cfg.deterministic = true;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&load_config(&a, true)?),
        Command::Train(a) => {
            let mut cfg = load_config(&a.common, false)?;
            if let Some(lr) = a.lr {
                cfg.learning_rate = lr;
            }
            cmd_train(&cfg)
        }
        Command::Evaluate(a) => cmd_evaluate(&load_config(&a.common, false)?, a.checkpoint.as_deref(), &a.split),
        Command::Ablate(a) => cmd_ablate(&load_config(&a.common, false)?, a.mode),
        Command::Gridsearch(a) => cmd_gridsearch(&load_config(&a, false)?),
    }
}

/// Parses `args` and runs the command; returns the process exit code
/// (0 success, 2 usage or validation error, 1 runtime failure).
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
