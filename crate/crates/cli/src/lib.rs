//! The `camcond` command line.
//!
//! Every subcommand resolves a [`RunConfig`] from an optional `--config`
//! file overlaid by flags, writes its artifacts atomically with that
//! configuration embedded, and prints one summary line (JSON with `--json`).
//! Exit codes: 0 success, 2 configuration error, 3 data error.

pub mod commands;
pub mod config;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use camcond::experiments::RECIPES;
use camcond::mtf::MtfReading;
use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

use config::{parse_file, parse_recipe, BLUR_IDS, NOISE_IDS};

#[derive(Debug, Parser)]
#[command(name = "camcond", version, about = "Camera condition experiments: corrupt, estimate, evaluate, control")]
pub struct Cli {
    /// TOML or JSON file with run settings; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the summary line as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a corruption recipe to every image of a directory.
    Corrupt(CorruptArgs),
    /// Run estimators patch-wise and write JSON lines.
    Estimate(EstimateArgs),
    /// Score estimators on a corrupted set against its sidecars.
    Evaluate(EstimateArgs),
    /// Build a performance curve with the synthetic detector.
    BuildIopc(BuildArgs),
    /// Choose the exposure/gain trade-off for a measured condition.
    Control(ControlArgs),
    /// Regenerate a figure or table bundle.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct Estimators {
    /// Noise estimators, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = PossibleValuesParser::new(NOISE_IDS))]
    pub noise: Option<Vec<String>>,
    /// Blur estimators, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = PossibleValuesParser::new(BLUR_IDS))]
    pub blur: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Inline JSON recipe, or a TOML/JSON recipe file.
    #[arg(long)]
    pub recipe: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Image file or directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub estimators: Estimators,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Reading {
    Mean,
    Worst,
}

impl From<Reading> for MtfReading {
    fn from(r: Reading) -> Self {
        match r {
            Reading::Mean => MtfReading::Mean,
            Reading::Worst => MtfReading::Worst,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Annotated frames; synthetic scenes when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Ground-truth boxes for `--input`, JSON lines.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of synthetic scenes.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// MTF axis frequency in lines/px.
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long, value_enum)]
    pub reading: Option<Reading>,
    #[command(flatten)]
    pub estimators: Estimators,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[arg(long)]
    pub iopc: Option<PathBuf>,
    /// Camera constants (bounds, calibration), TOML or JSON.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub exposure_s: Option<f64>,
    #[arg(long)]
    pub iso: Option<f64>,
    #[arg(long)]
    pub sigma_hat: Option<f64>,
    #[arg(long)]
    pub mtf_hat: Option<f64>,
    /// Measure the condition from this image instead.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Write the decision as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub estimators: Estimators,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_parser = PossibleValuesParser::new(RECIPES))]
    pub figure: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub patches: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Corrupt(_) => "corrupt",
            Command::Estimate(_) => "estimate",
            Command::Evaluate(_) => "evaluate",
            Command::BuildIopc(_) => "build-iopc",
            Command::Control(_) => "control",
            Command::Reproduce(_) => "reproduce",
        }
    }

    /// The settings given as flags.
    pub fn flags(&self) -> CliResult<RunConfig> {
        let mut c = RunConfig {
            subcommand: self.name().into(),
            ..RunConfig::default()
        };
        match self {
            Command::Corrupt(a) => {
                c.input = a.input.clone();
                c.output = a.output.clone();
                c.recipe = a.recipe.as_deref().map(parse_recipe).transpose()?;
                c.seed = a.seed;
            }
            Command::Estimate(a) | Command::Evaluate(a) => {
                c.input = a.input.clone();
                c.output = a.output.clone();
                c.noise = a.estimators.noise.clone();
                c.blur = a.estimators.blur.clone();
            }
            Command::BuildIopc(a) => {
                c.input = a.input.clone();
                c.truth = a.truth.clone();
                c.output = a.output.clone();
                c.seed = a.seed;
                c.scenes = a.scenes;
                c.frequency = a.frequency;
                c.reading = a.reading.map(Into::into);
                c.noise = a.estimators.noise.clone();
                c.blur = a.estimators.blur.clone();
            }
            Command::Control(a) => {
                c.iopc = a.iopc.clone();
                c.camera = a.camera.clone();
                c.exposure_s = a.exposure_s;
                c.iso = a.iso;
                c.sigma_hat = a.sigma_hat;
                c.mtf_hat = a.mtf_hat;
                c.input = a.input.clone();
                c.output = a.output.clone();
                c.noise = a.estimators.noise.clone();
                c.blur = a.estimators.blur.clone();
            }
            Command::Reproduce(a) => {
                c.figure = a.figure.clone();
                c.output = a.output.clone();
                c.seed = a.seed;
                c.scenes = a.scenes;
                c.patches = a.patches;
            }
        }
        Ok(c)
    }
}

/// What a successful run reports.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub details: Value,
    #[serde(skip)]
    pub message: String,
}

impl Summary {
    pub fn new(cfg: &RunConfig, outputs: Vec<PathBuf>, details: Value, message: String) -> Self {
        Self {
            command: cfg.subcommand.clone(),
            status: "ok",
            seed: cfg.seed,
            outputs,
            details,
            message,
        }
    }
}

/// Resolve the configuration of `cli`: file values, then flags.
pub fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let file: RunConfig = match &cli.config {
        Some(p) => parse_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(r) = &file.recipe {
        r.validate().map_err(|e| error::config(format!("recipe: {e}")))?;
    }
    let cfg = file.overlay(cli.command.flags()?);
    cfg.check_ids()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> CliResult<Summary> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Corrupt(_) => commands::corrupt(&cfg),
        Command::Estimate(_) => commands::estimate(&cfg),
        Command::Evaluate(_) => commands::evaluate(&cfg),
        Command::BuildIopc(_) => commands::build(&cfg),
        Command::Control(_) => commands::control(&cfg),
        Command::Reproduce(_) => commands::reproduce(&cfg),
    }
}

/// Parse `args`, run, print the summary and return the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if args.iter().any(|a| a == "--json") {
                let v = serde_json::json!({
                    "status": "error",
                    "kind": "config",
                    "message": e.kind().to_string(),
                    "exit_code": 2,
                });
                println!("{v}");
            }
            return 2;
        }
    };
    match run(&cli) {
        Ok(s) => {
            if cli.json {
                println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            } else {
                println!("{}: {}", s.command, s.message);
            }
            0
        }
        Err(e) => {
            if cli.json {
                let v = serde_json::json!({
                    "command": cli.command.name(),
                    "status": "error",
                    "kind": e.kind(),
                    "message": e.message(),
                    "exit_code": e.exit_code(),
                });
                println!("{v}");
            }
            eprintln!("camcond {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
