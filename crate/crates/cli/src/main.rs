use std::path::PathBuf;

use clap::{Parser, Subcommand};
use qproc_cli::{run, Command, Format, Options};

#[derive(Parser)]
#[command(name = "qproc", version, about = "Optimal estimation of functionals of quantum processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Problem description (JSON).
    config: PathBuf,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the shot budget per repetition.
    #[arg(long)]
    shots: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimal-norm vector, dual norm and variance bound.
    Bound(Common),
    /// Protocol description, its Fisher matrix and the kissing residual.
    Protocol(Common),
    /// Monte Carlo estimate of the variance against the bound.
    Simulate(Common),
    /// Unit-ball mesh and Fisher ellipsoid for plotting.
    Geometry(Common),
    /// Runs every available check.
    Verify(Common),
}

fn main() {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Bound(c) => (Command::Bound, c),
        Cmd::Protocol(c) => (Command::Protocol, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Geometry(c) => (Command::Geometry, c),
        Cmd::Verify(c) => (Command::Verify, c),
    };
    let opts = Options {
        seed: common.seed,
        shots: common.shots,
        output: common.output,
        format: common.format,
    };
    std::process::exit(run(command, &common.config, &opts));
}
