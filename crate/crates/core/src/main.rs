use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rvheal_core::harness::{cmd_oracle_check, cmd_run, cmd_synth, describe_outcome};
use rvheal_core::mape::Mode;

#[derive(Parser)]
#[command(name = "rvheal", version, about = "LTL3 monitors in a self-healing MAPE-K loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the minimal three-valued monitor of an LTL formula.
    Synth {
        formula: String,
        /// Write a Graphviz rendering.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write the transition table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run a scenario and write the per-loop CSV and the event log.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario mode.
        #[arg(long)]
        mode: Option<Mode>,
        /// Event log path; defaults to `<csv>.events.jsonl`.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Compare monitor verdicts with the reference oracle on a formula corpus.
    OracleCheck {
        corpus: PathBuf,
        #[arg(long, default_value_t = 6)]
        max_trace_len: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { formula, dot, table } => {
            println!("{}", cmd_synth(&formula, dot.as_deref(), table.as_deref())?);
        }
        Command::Run {
            scenario,
            csv,
            seed,
            mode,
            events,
        } => {
            let summary = cmd_run(&scenario, &csv, seed, mode, events.as_deref())?;
            println!("{}", describe_outcome(&summary.outcome));
            println!("csv: {}", summary.csv_path.display());
            println!("events: {}", summary.events_path.display());
        }
        Command::OracleCheck { corpus, max_trace_len } => {
            let report = cmd_oracle_check(&corpus, max_trace_len)?;
            println!("{report}");
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
