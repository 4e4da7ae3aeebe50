use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use leoshot::commands::{cmd_compare, cmd_fedavg, cmd_leoshot, cmd_visibility};
use leoshot::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "leoshot", version, about = "One-shot federated learning over simulated LEO constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `scenario.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `section.key=value` override, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VAL")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ground-station visibility windows.
    Visibility,
    /// Synchronous FedAvg.
    Fedavg,
    /// One-shot protocol.
    Leoshot,
    /// Both protocols on the same scenario.
    Compare,
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    let out = &cli.out;
    Ok(match cli.command {
        Command::Visibility => cmd_visibility(&cfg, out)?,
        Command::Fedavg => cmd_fedavg(&cfg, out)?,
        Command::Leoshot => cmd_leoshot(&cfg, out)?,
        Command::Compare => cmd_compare(&cfg, out)?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
