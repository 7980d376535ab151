//! `nfsim`: near-field XL-MIMO experiments from a JSON config.
//!
//! Exit codes: 0 success, 2 configuration or input validation error,
//! 3 runtime numeric error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nearfield::Error;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "nfsim", version, about = "Near-field XL-MIMO simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test datasets.
    Gen(Common),
    /// Sum SE of every precoding scheme over an SNR grid.
    SweepSnr(Common),
    /// Polar against angular codebook for two users on one ray.
    LdmaVsSdma(Common),
    /// Near/far classification accuracy against CSI noise.
    Classify(Common),
    /// Beam gain over an (angle, distance) grid.
    Gainmap(Common),
    /// Score a prediction file against a dataset.
    Score(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CoincidentUser | Error::ZeroChannel(_) | Error::RankDeficient { .. } | Error::Io(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Gen(args)
    | Command::SweepSnr(args)
    | Command::LdmaVsSdma(args)
    | Command::Classify(args)
    | Command::Gainmap(args)
    | Command::Score(args)) = &cli.command;

    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }

    let result = match &cli.command {
        Command::Gen(_) => commands::gen(&cfg).map(|_| ()),
        Command::SweepSnr(_) => commands::sweep_snr(&cfg).map(|p| println!("{}", p.display())),
        Command::LdmaVsSdma(_) => commands::ldma_vs_sdma(&cfg).map(|p| println!("{}", p.display())),
        Command::Classify(_) => commands::classify(&cfg).map(|p| println!("{}", p.display())),
        Command::Gainmap(_) => commands::gainmap(&cfg).map(|p| println!("{}", p.display())),
        Command::Score(_) => commands::score_cmd(&cfg).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
