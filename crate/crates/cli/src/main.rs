//! `adslam`: simulation, dataset generation, training, detection, SLAM runs
//! and trajectory evaluation from one binary.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use adslam_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, KEYS};

#[derive(Parser)]
#[command(
    name = "adslam",
    version,
    about = "Particle-filter lidar SLAM with swarm-based degeneracy detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scenario and write the world, ground truth and sensor log.
    Simulate(Common),
    /// Generate a labeled swarm-image dataset (6:2:2 split).
    Dataset(Common),
    /// Train the degeneracy classifier on a dataset.
    Train(Common),
    /// Run a detector on particle dumps (`swarm=<file or dir>`).
    Detect(Common),
    /// Run SLAM on a simulated scenario and export the results.
    Slam(Common),
    /// Compare two TUM trajectories (`est=<file> gt=<file>`).
    Eval(Common),
}

#[derive(Args)]
struct Common {
    /// Output directory; relative input paths resolve against it.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// File of `key=value` lines applied before the command-line settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Settings as `key=value`.
    #[arg(value_name = "KEY=VALUE", long_help = keys_help())]
    settings: Vec<String>,
}

fn keys_help() -> String {
    format!(
        "Settings as `key=value`. Accepted keys:\n{}",
        KEYS.join(", ")
    )
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        cfg.apply_text(&text)?;
    }
    cfg.apply(c.settings.iter().map(String::as_str))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String> {
    let (c, f): (_, fn(&RunConfig, &std::path::Path) -> Result<String>) = match &cli.command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Dataset(c) => (c, commands::dataset),
        Command::Train(c) => (c, commands::train),
        Command::Detect(c) => (c, commands::detect),
        Command::Slam(c) => (c, commands::slam),
        Command::Eval(c) => (c, commands::eval),
    };
    let cfg = resolve(c)?;
    commands::prepare_out(&c.out, &cfg)?;
    f(&cfg, &c.out)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
        Error::Domain(_) | Error::Contract(_) => 4,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
