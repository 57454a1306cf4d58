//! Command-line driver.

pub mod artifact;
pub mod config;
pub mod manifest;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use artifact::{ArtifactError, ModelArtifact, ARTIFACT_SCHEMA_VERSION};
pub use config::{ConfigError, PipelineConfig};
pub use stages::Pipeline;

use crate::evaluate::EvalError;
use crate::features::{FeatureError, SplitMode};
use crate::ingest::IngestErrors;
use crate::models::ModelError;
use crate::topics::TopicError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
    #[error("internal error: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IngestErrors> for CliError {
    fn from(e: IngestErrors) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TopicError> for CliError {
    fn from(e: TopicError) -> Self {
        match e {
            TopicError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidFraction(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::KTooLarge { .. } | ModelError::InvalidParams(_) => CliError::Config(e.to_string()),
            ModelError::EmptyTrainingSet | ModelError::TooFewRows { .. } => CliError::Data(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) | EvalError::Fold { source: m, .. } => m.into(),
            EvalError::Feature(f) => f.into(),
            EvalError::KOutOfRange { .. }
            | EvalError::EmptyGrid
            | EvalError::UnknownAxis { .. }
            | EvalError::InvalidAxisValue { .. } => CliError::Config(e.to_string()),
            _ => CliError::Invariant(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "episode-rating", version, about = "Predict episode ratings from script topics and metadata")]
pub struct Cli {
    /// Pipeline config (TOML). Defaults to ./pipeline.toml.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Train/test split mode (overrides the config).
    #[arg(long, global = true, value_parser = ["random", "chronological"])]
    pub split_mode: Option<String>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load metadata, HTML snapshots and scripts into dataset.json.
    Ingest,
    /// Clean scripts into a bag-of-words corpus.
    Prep,
    /// Fit the topic model.
    Topics,
    /// Build the modeling table.
    Features,
    /// Cross-validate, grid-search and evaluate all model families.
    TrainEval,
    /// Score new feature rows with a saved model.
    Predict {
        /// Model artifact; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV with episode_id, topic_*, director, viewers_millions, review_count.
        #[arg(long)]
        input: PathBuf,
        /// Where to write predictions; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render the training and test tables.
    Report,
    /// Run stages in order.
    Run {
        /// Run every stage from ingest to report.
        #[arg(long)]
        all: bool,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli.config.clone().unwrap_or_else(|| PathBuf::from("pipeline.toml"));
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    match cli.split_mode.as_deref() {
        Some("chronological") => cfg.split.mode = SplitMode::Chronological,
        Some(_) => cfg.split.mode = SplitMode::Random,
        None => {}
    }
    Ok(cfg)
}

fn pipeline(cli: &Cli) -> Result<Pipeline, CliError> {
    let cfg = load_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.paths().output_dir);
    Pipeline::new(cfg, out, cli.quiet)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest => pipeline(cli)?.ingest().map(drop),
        Command::Prep => pipeline(cli)?.prep().map(drop),
        Command::Topics => pipeline(cli)?.topics().map(drop),
        Command::Features => pipeline(cli)?.features().map(drop),
        Command::TrainEval => pipeline(cli)?.train_eval().map(drop),
        Command::Report => pipeline(cli)?.report().map(drop),
        Command::Run { all } => {
            if !all {
                return Err(CliError::Config("`run` needs --all".into()));
            }
            pipeline(cli)?.run_all().map(drop)
        }
        Command::Predict { model, input, output } => {
            let model = match model {
                Some(m) => m.clone(),
                None => {
                    let out = match &cli.out {
                        Some(o) => o.clone(),
                        None => load_config(cli)?.paths().output_dir,
                    };
                    out.join(stages::MODEL_JSON)
                }
            };
            let (n, warnings) = stages::predict_file(&model, input, output.as_deref())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            if !cli.quiet && output.is_some() {
                println!("predict: {n} rows");
            }
            Ok(())
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
