use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fdiag_cli::{cmd_evaluate, cmd_generate, cmd_infer, cmd_train, exit_code, CliConfig, FileConfig, Overrides};

#[derive(Args)]
struct Shared {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired dataset and its manifest
    Generate,
    /// Train a model and write weights, epoch report and metrics
    Train {
        /// vibration_cnn, acoustic_cnn_lstm or fusion
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a saved model on a validation split
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Seed of the split to score; defaults to the run seed
        #[arg(long)]
        split_seed: Option<u64>,
        /// Score every window instead of the validation split
        #[arg(long)]
        all: bool,
    },
    /// Classify the first window of one file (two for fusion: vibration, acoustic)
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Parser)]
#[command(name = "fdiag", version, about = "Bearing and motor fault diagnosis from vibration and acoustic signals")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

fn run(cli: Cli) -> Result<String> {
    let file = FileConfig::load(cli.shared.config.as_deref())?;
    let mut ov = Overrides {
        seed: cli.shared.seed,
        out: cli.shared.out,
        ..Overrides::default()
    };
    match cli.command {
        Command::Generate => {
            let cfg = CliConfig::resolve(file, ov)?;
            let written = cmd_generate(&cfg)?;
            Ok(format!("wrote {} files to {}\n", written.len(), cfg.out.display()))
        }
        Command::Train { kind, manifest, epochs } => {
            ov.kind = kind;
            ov.manifest = manifest;
            ov.epochs = epochs;
            cmd_train(&CliConfig::resolve(file, ov)?)
        }
        Command::Evaluate {
            model,
            manifest,
            split_seed,
            all,
        } => {
            ov.manifest = manifest;
            let cfg = CliConfig::resolve(file, ov)?;
            cmd_evaluate(&cfg, &model, split_seed.unwrap_or(cfg.seed), all)
        }
        Command::Infer { model, files } => cmd_infer(&model, &files),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(u8::from(usage));
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
