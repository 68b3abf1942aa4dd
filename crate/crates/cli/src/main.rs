//! `m2m`: runs mosaic-to-mosaic experiments from a JSON config.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use m2m::eval::{run_experiment, ExperimentConfig, ExperimentKind};
use m2m::Error;

#[derive(Parser)]
#[command(name = "m2m", version, about = "Mosaic-to-mosaic demosaicking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the run; replaces the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; replaces the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `dotted.key=value` applied to the config (value parsed as JSON,
    /// else taken as a string). Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Render a synthetic mosaicked burst with its ground truth.
    Simulate,
    /// Train a demosaicking network from scratch (gt or m2m supervision).
    Pretrain,
    /// Adapt a pretrained network to one burst.
    Finetune,
    /// Demosaick Bayer PNGs with a checkpoint (bilinear without one).
    Demosaic,
    /// PSNR of a checkpoint and of bilinear interpolation on test images.
    Eval,
    /// Check every gradient against finite differences.
    Gradcheck,
    /// Fine-tuning gains on the stripes and binary-noise images.
    Stripes,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Simulate => ExperimentKind::Simulate,
            Command::Pretrain => ExperimentKind::Pretrain,
            Command::Finetune => ExperimentKind::Finetune,
            Command::Demosaic => ExperimentKind::Demosaic,
            Command::Eval => ExperimentKind::Eval,
            Command::Gradcheck => ExperimentKind::Gradcheck,
            Command::Stripes => ExperimentKind::Stripes,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Spec(_) | Error::Parameter(_) => 2,
        Error::Data(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Image(_)
        | Error::Dimension(_)
        | Error::Shape(_) => 3,
        Error::Numeric(_)
        | Error::Convergence(_)
        | Error::Registration(_)
        | Error::DegenerateMap(_)
        | Error::DegenerateLoss
        | Error::Overlap { .. } => 4,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("M2M_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config {
            path: "M2M_THREADS".into(),
            message: format!("expected a positive integer, got `{raw}`"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config {
            path: "M2M_THREADS".into(),
            message: e.to_string(),
        })
}

fn run(cli: &Cli) -> Result<(), Error> {
    configure_threads()?;
    let c = &cli.common;
    let mut cfg = ExperimentConfig::load(c.config.as_deref(), &c.overrides)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    let report = run_experiment(&cfg, cli.command.kind())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
