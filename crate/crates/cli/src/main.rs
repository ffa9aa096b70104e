use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netpomdp_cli::{cmd_diagnose, cmd_run, cmd_validate, DiagnoseOptions, Overrides};
use netpomdp_core::net::MessageKind;

#[derive(Parser)]
#[command(name = "netpomdp", version, about = "Simulate and check networked interactive POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Run a scenario until convergence or the round limit.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Line-delimited JSON trace destination.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Randomized checks of the backup operator and the fairness utility.
    Diagnose {
        /// Scenario whose simulation settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[command(flatten)]
        sim: SimFlags,
    },
}

/// Values that override the scenario file.
#[derive(Args)]
struct SimFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = parse_kind)]
    message_type: Option<MessageKind>,
    #[arg(long)]
    discount: Option<f64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_kind(s: &str) -> Result<MessageKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl From<SimFlags> for Overrides {
    fn from(f: SimFlags) -> Self {
        Overrides {
            seed: f.seed,
            max_rounds: f.max_rounds,
            epsilon: f.epsilon,
            message_type: f.message_type,
            discount: f.discount,
            workers: f.workers,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = match cli.command {
        Command::Validate { config, sim } => cmd_validate(&config, &sim.into(), &mut out, &mut err),
        Command::Run { config, trace_out, sim } => cmd_run(&config, &sim.into(), trace_out.as_deref(), &mut out, &mut err),
        Command::Diagnose { config, trials, sim } => cmd_diagnose(
            &DiagnoseOptions {
                config,
                trials,
                overrides: sim.into(),
            },
            &mut out,
            &mut err,
        ),
    };
    ExitCode::from(code as u8)
}
