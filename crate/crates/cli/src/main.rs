//! `sarcasm-fusion`: pipeline stages and ablation runners behind one config.
//!
//! Exit codes: 0 success, 1 pipeline error, 2 usage error, 3 config error.
//! Failures print one JSON object on stderr.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, ConfigError};
use sarcasm_fusion::trainer::AblationAxis;

const HOME_VAR: &str = "SARCASM_FUSION_HOME";

#[derive(Debug, Parser)]
#[command(name = "sarcasm-fusion", version, about = "Bimodal augmentation and attention-fusion sarcasm classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.learning_rate=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Text encoder, shorthand for `--set features.text_encoder=...`.
    #[arg(long, value_parser = ["pretrained", "mock"])]
    text_encoder: Option<String>,
    /// Audio encoder, shorthand for `--set features.audio_encoder=...`.
    #[arg(long, value_parser = ["pretrained", "mock"])]
    audio_encoder: Option<String>,
    /// Artifact and cache root. Defaults to $SARCASM_FUSION_HOME, then `./artifacts`.
    #[arg(long)]
    home: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Back-translate, synthesize and write the augmented manifest.
    Augment(Common),
    /// Synthesize audio for every planned back-translation.
    Synth(Common),
    /// Extract text and audio features into the feature cache.
    Extract(Common),
    /// 5-fold cross-validation of one model configuration.
    Train(Common),
    /// Compare configurations along one axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// data_size, synthesizer, attention, modality or skip.
        #[arg(long)]
        axis: Option<String>,
    },
    /// Print the saved metrics and comparison tables.
    Report(Common),
    /// Write the synthetic corpus and the reference back-translation fixtures.
    Fixtures(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Augment(_) => "augment",
            Command::Synth(_) => "synth",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Ablate { .. } => "ablate",
            Command::Report(_) => "report",
            Command::Fixtures(_) => "fixtures",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Augment(c)
            | Command::Synth(c)
            | Command::Extract(c)
            | Command::Train(c)
            | Command::Report(c)
            | Command::Fixtures(c) => c,
            Command::Ablate { common, .. } => common,
        }
    }
}

enum Failure {
    Config(String),
    Pipeline(sarcasm_fusion::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<sarcasm_fusion::Error> for Failure {
    fn from(e: sarcasm_fusion::Error) -> Self {
        match e {
            sarcasm_fusion::Error::Config(m) | sarcasm_fusion::Error::MissingConfiguration(m) => {
                Failure::Config(m)
            }
            other => Failure::Pipeline(other),
        }
    }
}

fn home(common: &Common) -> PathBuf {
    common
        .home
        .clone()
        .or_else(|| std::env::var_os(HOME_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("artifacts"))
}

fn run(command: &Command) -> Result<(), Failure> {
    let common = command.common();
    let mut overrides = common.overrides.clone();
    let encoders = [("text", &common.text_encoder), ("audio", &common.audio_encoder)];
    for (modality, kind) in encoders {
        if let Some(kind) = kind {
            overrides.push(format!("features.{modality}_encoder=\"{kind}\""));
        }
    }
    let config = Config::load(common.config.as_deref(), &overrides)?;
    let axis = match command {
        Command::Ablate { axis, .. } => match axis.as_deref().map(str::parse::<AblationAxis>) {
            Some(parsed) => Some(parsed?),
            None => config.experiment.axis,
        },
        _ => None,
    };
    let mut ctx = pipeline::Context::new(config, home(common), command.name())?;
    match command {
        Command::Augment(_) => ctx.augment()?,
        Command::Synth(_) => ctx.synth()?,
        Command::Extract(_) => ctx.extract()?,
        Command::Train(_) => ctx.train()?,
        Command::Ablate { .. } => {
            let axis = axis.ok_or_else(|| {
                Failure::Config("ablate needs --axis or experiment.axis".into())
            })?;
            ctx.ablate(axis)?
        }
        Command::Report(_) => ctx.report()?,
        Command::Fixtures(_) => ctx.fixtures()?,
    }
    ctx.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (kind, code, message) = match failure {
                Failure::Config(m) => ("config", 3u8, m),
                Failure::Pipeline(e) => ("pipeline", 1u8, e.to_string()),
            };
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": kind,
                    "exit_code": code,
                    "subcommand": cli.command.name(),
                    "message": message.replace('\n', " "),
                })
            );
            ExitCode::from(code)
        }
    }
}
