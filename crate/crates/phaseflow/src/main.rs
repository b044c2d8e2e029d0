use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phaseflow::{run, Command, RunOptions};

#[derive(Parser)]
#[command(name = "phaseflow", version, about = "Phase-space propagation experiments from a config file")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true, env = "PHASEFLOW_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Target {
    config: PathBuf,
    /// Bundle directory, instead of output.directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Validate the config and list the symbol derivatives
    ParseCheck(Target),
    /// Bicharacteristics and flow Jacobians for each seed
    Flow(Target),
    /// Symbol-class constants along the seeded flow
    Kappa(Target),
    /// Bargmann transform of a signal
    Transform(Target),
    /// Crank-Nicolson propagation of an initial state
    Propagate(Target),
    /// Phase-space kernel slices and decay fits
    Kernel(Target),
    /// Every stage the config describes
    All(Target),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, target) = match cli.command {
        Sub::ParseCheck(t) => (Command::ParseCheck, t),
        Sub::Flow(t) => (Command::Flow, t),
        Sub::Kappa(t) => (Command::Kappa, t),
        Sub::Transform(t) => (Command::Transform, t),
        Sub::Propagate(t) => (Command::Propagate, t),
        Sub::Kernel(t) => (Command::Kernel, t),
        Sub::All(t) => (Command::All, t),
    };
    let opts = RunOptions { out: target.out, threads: cli.threads.map(usize::from) };
    match run(command, &target.config, &opts) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: {} artifacts in {}", command.name(), summary.artifacts.len(), summary.bundle.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
