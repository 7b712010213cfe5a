use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rfnoise_cli::commands::{cmd_eval, cmd_generate, cmd_gradcheck, cmd_train, EvalWhich};
use rfnoise_cli::config::RunConfig;
use rfnoise_cli::logging::Logger;

/// Behavioral modeling of nonlinear RF devices from uniform-noise
/// training data: generate datasets, train, evaluate, verify gradients.
#[derive(Parser)]
#[command(name = "rfnoise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration file.
    #[arg(long, default_value = "configs/desk.toml")]
    config: PathBuf,
    /// Override the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Re-root every output path (data, model, report) under this
    /// directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the full capture suite and its manifest.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Preprocess the captures and train a model.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Produce report CSVs and SVG plots from a trained model.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// time | gain_freq | gain_power | oip3
        #[arg(long)]
        which: EvalWhich,
    },
    /// Verify backprop against finite differences; nonzero exit on
    /// failure.
    Gradcheck,
}

fn load_config(common: &CommonArgs) -> rfnoise_cli::CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg = cfg.with_out_root(out);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run() -> rfnoise_cli::CliResult<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common } => {
            let cfg = load_config(&common)?;
            let log = Logger::from_env(Some(&cfg.paths.data_dir));
            cmd_generate(&cfg, &log)?;
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let log = Logger::from_env(Some(&cfg.paths.report_dir));
            cmd_train(&cfg, &log)?;
        }
        Command::Eval { common, which } => {
            let cfg = load_config(&common)?;
            let log = Logger::from_env(Some(&cfg.paths.report_dir));
            cmd_eval(&cfg, which, &log)?;
        }
        Command::Gradcheck => {
            let log = Logger::from_env(None);
            cmd_gradcheck(&log)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
