//! Command-line harness: runs the dataset, LM, embedding, probe and report
//! stages of an experiment from one TOML config.

pub mod config;
pub mod experiment;
pub mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use experiment::{Experiment, Outcome, Stage};

#[derive(Debug, Parser)]
#[command(name = "vlab", version, about = "Truth-probe laboratory on a toy language model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate statement datasets and the LM corpus.
    Gen(RunArgs),
    /// Train the toy language model.
    TrainLm(RunArgs),
    /// Extract per-layer embedding stores.
    Embed(RunArgs),
    /// Train the supervised and chance probes.
    TrainProbe(RunArgs),
    /// Train the unsupervised contrast-consistent probes.
    TrainCcs(RunArgs),
    /// Score every probe and write reports/report.jsonl.
    Eval(RunArgs),
    /// Render text tables and calibration CSVs from the report.
    Report(RunArgs),
    /// Run every stage in order.
    All(RunArgs),
    /// Check a config and list every problem.
    Validate(Overrides),
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Replace the config's root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the config's layer selectors; repeatable.
    #[arg(long = "layer", value_name = "L", allow_negative_numbers = true)]
    pub layers: Vec<i32>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output root; the experiment lives in <out>/<id>.
    #[arg(long, env = "VLAB_OUT", default_value = "runs")]
    pub out: PathBuf,
    /// Rerun stages that already completed.
    #[arg(long)]
    pub force: bool,
    /// Worker threads for parallel sections.
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub const EXIT_STAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Loads the config and applies command-line overrides before checking it.
pub fn load_config(o: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(&o.config).map_err(ConfigError::Io)?;
    let mut cfg = config::parse(&text).map_err(ConfigError::Invalid)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if !o.layers.is_empty() {
        cfg.layers = o.layers.clone();
    }
    let diags = config::check(&cfg);
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(diags))
    }
}

fn run_stages(args: &RunArgs, plan: &[Stage]) -> ExitCode {
    let cfg = match load_config(&args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(j) = args.jobs {
        // A pool can only be installed once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let exp = match Experiment::open(&args.out, cfg) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_STAGE);
        }
    };
    for &stage in plan {
        match exp.run(stage, args.force, |e| stages::run_stage(e, stage)) {
            Ok(Outcome::Skipped) => eprintln!("{stage}: already complete, skipped"),
            Ok(Outcome::Ran) => {}
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_STAGE);
            }
        }
    }
    ExitCode::SUCCESS
}

pub fn run(cli: Cli) -> ExitCode {
    let one = |a: &RunArgs, s: Stage| run_stages(a, &[s]);
    match &cli.command {
        Command::Gen(a) => one(a, Stage::Gen),
        Command::TrainLm(a) => one(a, Stage::TrainLm),
        Command::Embed(a) => one(a, Stage::Embed),
        Command::TrainProbe(a) => one(a, Stage::TrainProbe),
        Command::TrainCcs(a) => one(a, Stage::TrainCcs),
        Command::Eval(a) => one(a, Stage::Eval),
        Command::Report(a) => one(a, Stage::Report),
        Command::All(a) => run_stages(a, &Stage::ALL),
        Command::Validate(o) => match load_config(o) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(ConfigError::Io(e)) => {
                eprintln!("cannot read {}: {e}", o.config.display());
                ExitCode::from(EXIT_STAGE)
            }
            Err(ConfigError::Invalid(d)) => {
                for x in &d {
                    println!("{x}");
                }
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
