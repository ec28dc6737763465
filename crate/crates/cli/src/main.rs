use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use holocap_core::config::PipelineConfig;
use holocap_core::pipeline::{cmd_annotate, cmd_evaluate, cmd_inspect, cmd_validate_config, AnnotateOptions};
use holocap_core::prompt::PromptStrategy;

/// Holistic video captioning: annotate clips with expert facets and an LLM
/// caption, and evaluate retrieval similarity matrices.
#[derive(Debug, Parser)]
#[command(name = "holocap", version)]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, env = "HOLOCAP_CONFIG", global = true)]
    config: Option<PathBuf>,

    /// Route every expert and the language model to the built-in mocks.
    #[arg(long, global = true)]
    mock_all: bool,

    /// Prompt strategy override: basic, role-play, template or rule.
    #[arg(long, global = true, value_parser = parse_strategy)]
    strategy: Option<PromptStrategy>,

    /// Log more (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Annotate manifest videos into the record store.
    Annotate {
        /// Re-annotate videos already in the store.
        #[arg(long)]
        force: bool,
        /// Only these video ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
    },
    /// Compute benchmark grids from similarity matrices and render the report.
    Evaluate,
    /// Print the stored facets, prompt, caption and validation for a video.
    Inspect { video_id: String },
    /// Check the config and the files it references.
    ValidateConfig,
}

fn parse_strategy(s: &str) -> Result<PromptStrategy, String> {
    s.parse().map_err(|e: holocap_core::prompt::PromptError| e.to_string())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .context("no config given: pass --config PATH or set HOLOCAP_CONFIG")?;
    let mut config = PipelineConfig::load(path)?;
    if cli.mock_all {
        config.apply_mock_all();
    }
    if let Some(s) = cli.strategy {
        config.strategy = s;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Annotate { force, only } => {
            let options = AnnotateOptions {
                force,
                only,
                strategy: cli.strategy,
            };
            let summary = cmd_annotate(&config, &options)?;
            println!("{summary}");
            for (id, err) in &summary.failures {
                eprintln!("failed: {id}: {err}");
            }
            Ok(if summary.success() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Evaluate => {
            let outcome = cmd_evaluate(&config)?;
            match &config.evaluation.report {
                Some(path) => println!("report written to {}", path.display()),
                None => print!("{}", outcome.report),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { video_id } => {
            print!("{}", cmd_inspect(&config, &video_id, cli.strategy)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig => {
            print!("{}", cmd_validate_config(&config)?);
            if let Some(path) = &cli.config {
                log::debug!("validated {}", fs::canonicalize(path).unwrap_or_else(|_| path.clone()).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
