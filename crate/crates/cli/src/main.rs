use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ogc_cli::{run, Command, Invocation};

#[derive(Parser)]
#[command(name = "ogc", version, about = "Orthogonal geodesic chords and brake orbits")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find orthogonal geodesic chords and write chords.json, trace.csv, constants.json.
    Solve(RunArgs),
    /// Run only the concavity and constants phase and print the ledger.
    Check(RunArgs),
    /// Brake orbits of an ellipsoid Hamiltonian; also writes orbits.json.
    Brake(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (command, a) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Brake(a) => (Command::Brake, a),
    };
    let inv = Invocation { command, config: a.config, out: a.out, plot: a.plot, seed: a.seed };
    ExitCode::from(run(&inv) as u8)
}
