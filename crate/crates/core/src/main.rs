use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mapforge::engine::pipeline::{run_command, Args, Command};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Simulate,
    Init,
    Topology,
    Train,
    Eval,
    Plot,
    Ablate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Init => Command::Init,
            Cmd::Topology => Command::Topology,
            Cmd::Train => Command::Train,
            Cmd::Eval => Command::Eval,
            Cmd::Plot => Command::Plot,
            Cmd::Ablate => Command::Ablate,
        }
    }
}

/// Global registration of 2D scan sequences with self-supervised networks.
#[derive(Debug, Parser)]
#[command(name = "mapforge", version)]
struct Cli {
    /// Stage to run.
    #[arg(value_enum)]
    command: Cmd,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// `key=value` configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scan-noise seed for `simulate`, training seed otherwise; `ablate` runs
    /// only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to continue training from.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = Args {
        command: cli.command.into(),
        data: cli.data,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        resume: cli.resume,
    };
    match run_command(&args) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
