use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use reflectal::cli::{run_cli, Command};

/// Reflected small-noise diffusions: simulation, BSDEs, actions and tails.
#[derive(Parser)]
#[command(name = "reflectal", version)]
struct Args {
    /// Command to run (overrides `command` in the config).
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = run_cli(args.command, &args.config, args.workers, args.out.as_deref());
    ExitCode::from(code as u8)
}
