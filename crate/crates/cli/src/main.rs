//! `hexpepo`: batch runner for the PEPO, Pauli back-propagation and
//! statevector engines.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunArgs;

#[derive(Parser)]
#[command(name = "hexpepo", version, about = "Kicked-Ising circuits on heavy-hex lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one observable over a θ grid with one method.
    Run(Box<RunArgs>),
    /// Fit b·exp(−a/χ) per θ to PEPO rows of one or more result files.
    Extrapolate {
        /// Result CSVs produced by `run --method pepo`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Only use these bond dimensions (comma-separated).
        #[arg(long, value_delimiter = ',')]
        chi: Option<Vec<usize>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Absolute errors of candidate result files against a reference.
    Compare {
        #[arg(long)]
        reference: PathBuf,
        #[arg(required = true)]
        candidates: Vec<PathBuf>,
        /// Per-point errors (stdout if omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Per-method max/mean errors (stderr if omitted).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Print lattice statistics as JSON.
    LatticeInfo {
        #[arg(long, default_value = "ibm127")]
        lattice: String,
        /// Also report the light cone of these sites (comma-separated).
        #[arg(long, value_delimiter = ',')]
        lightcone: Option<Vec<usize>>,
        /// Light-cone depth in Trotter steps.
        #[arg(long, default_value_t = 4)]
        steps: usize,
        /// Write the lattice as JSON to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => commands::run(config::resolve(*args)?),
        Command::Extrapolate { inputs, chi, output } => {
            commands::extrapolate(&inputs, chi.as_deref(), output.as_deref())
        }
        Command::Compare {
            reference,
            candidates,
            output,
            summary,
        } => commands::compare(&reference, &candidates, output.as_deref(), summary.as_deref()),
        Command::LatticeInfo {
            lattice,
            lightcone,
            steps,
            dump,
        } => commands::lattice_info(&lattice, lightcone.as_deref(), steps, dump.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<hexpepo_core::Error>())
                .map_or("cli", hexpepo_core::Error::kind);
            let record = json!({
                "error": {
                    "kind": kind,
                    "message": format!("{err:#}"),
                    "engine": commands::ENGINE,
                }
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
