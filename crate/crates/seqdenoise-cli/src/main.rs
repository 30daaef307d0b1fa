use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod config;
mod gen_data;
mod oracle_cmd;
mod output;
mod run_cmd;
mod stats_cmd;
mod train_cmd;

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "seqdenoise",
    about = "Denoising generation over variable sets with per-variable noise levels",
    version
)]
struct Cli {
    /// TOML config file supplying defaults; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets: solution splits and masked instances, or images.
    GenData(Overrides),
    /// Train the network denoiser on a generated dataset.
    Train(Overrides),
    /// Run inference over test instances and write per-instance metrics.
    Run(Overrides),
    /// Solve fresh puzzles with the constructive reference solvers.
    Oracle(Overrides),
    /// Dump the joint (t, t-bar) histogram of a noise level sampler.
    TsampleStats(Overrides),
    /// Run inference once per overlap in the configured grid.
    Sweep(Overrides),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let overrides = match &cli.command {
        Command::GenData(o)
        | Command::Train(o)
        | Command::Run(o)
        | Command::Oracle(o)
        | Command::TsampleStats(o)
        | Command::Sweep(o) => o,
    };
    let cfg = config::load(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::GenData(_) => gen_data::run(&cfg),
        Command::Train(_) => train_cmd::run(&cfg),
        Command::Run(_) => run_cmd::run(&cfg, false),
        Command::Oracle(_) => oracle_cmd::run(&cfg),
        Command::TsampleStats(_) => stats_cmd::run(&cfg),
        Command::Sweep(_) => run_cmd::run(&cfg, true),
    }
}
