use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use boundfix::features::FeatureSchema;
use boundfix::label::parse_phoneset;
use boundfix::sim::{default_phoneset, SimConfig};
use boundfix_cli::{cmd_compare, cmd_correct, cmd_evaluate, cmd_simulate, cmd_train, Outcome, Overrides, RunConfig, Workspace};

/// Learn and apply context-dependent corrections to phone boundaries.
#[derive(Parser)]
#[command(name = "boundfix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with injected boundary error.
    Simulate {
        /// Simulator config (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory to write the corpus into.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of utterances.
        #[arg(long)]
        utterances: Option<usize>,
        /// Phone-set file; the built-in inventory when omitted.
        #[arg(long)]
        phoneset: Option<PathBuf>,
        /// Feature schema file; the default schema when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Pair reference and hypothesis alignments and write error records.
    Compare(RunArgs),
    /// Split utterances, build feature data and train a tree.
    Train(RunArgs),
    /// Apply a tree to every hypothesis alignment.
    Correct {
        #[command(flatten)]
        run: RunArgs,
        /// Tree file; defaults to cor.S<stop-size>.tree in the output directory.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Compare uncorrected and corrected alignments against the reference.
    Evaluate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed of the train/test split.
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum number of examples per tree leaf (presets: 5, 10, 25, 100).
    #[arg(long)]
    stop_size: Option<usize>,
    /// Minimum segment duration kept by corrections, seconds.
    #[arg(long)]
    min_dur: Option<f64>,
    /// Fraction of utterances used for training.
    #[arg(long)]
    split: Option<f64>,
}

impl RunArgs {
    fn workspace(&self) -> Result<Workspace> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides { seed: self.seed, stop_size: self.stop_size, min_dur: self.min_dur, split: self.split });
        Workspace::open(cfg)
    }
}

fn simulate(
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    utterances: Option<usize>,
    phoneset: Option<&Path>,
    schema: Option<&Path>,
) -> Result<Outcome> {
    let mut cfg = match config {
        Some(p) => SimConfig::from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = utterances {
        cfg.utterance_count = n;
    }
    let phoneset = match phoneset {
        Some(p) => parse_phoneset(&std::fs::read_to_string(p)?)?,
        None => default_phoneset(),
    };
    let schema = match schema {
        Some(p) => FeatureSchema::parse(&std::fs::read_to_string(p)?)?,
        None => FeatureSchema::default_for(&phoneset),
    };
    cmd_simulate(&cfg, &phoneset, &Arc::new(schema), out)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { config, out, seed, utterances, phoneset, schema } => {
            simulate(config.as_deref(), &out, seed, utterances, phoneset.as_deref(), schema.as_deref())
        }
        Command::Compare(args) => cmd_compare(&args.workspace()?),
        Command::Train(args) => cmd_train(&args.workspace()?),
        Command::Correct { run, tree } => cmd_correct(&run.workspace()?, tree.as_deref()),
        Command::Evaluate(args) => cmd_evaluate(&args.workspace()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            for (key, value) in &outcome.summary {
                println!("{key}\t{value}");
            }
            for f in &outcome.failures {
                eprintln!("error: {}: {}", f.utterance_id, f.message);
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
