//! Command-line front end: packed-convolution simulation, operation
//! counting, network planning and calibration handling.
//!
//! Exit codes: 0 success, 1 oracle mismatch, 2 input error, 3 planning
//! infeasibility.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{
    CalibrateArgs, CliError, CompareArgs, CountArgs, Mode, PlanArgs, SimulateArgs,
};
use stria_core::Error;

#[derive(Parser)]
#[command(
    name = "stria",
    version,
    about = "Packed-ciphertext convolution simulator and rotation-cost toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Ciphertext slot count (power of two). Overrides $STRIA_SLOTS.
    #[arg(long)]
    slots: Option<usize>,
    /// Seed for all generated tensors and weights.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the packed simulation and diff it against the plaintext oracle.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Block spec, e.g. d=32,e=2,cn=2
        #[arg(long)]
        block: Option<String>,
        /// Layer spec, e.g. ci=4,co=4,k=3,cn=2,kernel=cross,matrix=exrot_free
        #[arg(long)]
        layer: Option<String>,
        /// Resolved network plan (JSON written by `stria plan`).
        #[arg(long)]
        network: Option<PathBuf>,
        /// Arithmetic mode; float additionally diffs against the exact run.
        #[arg(long, default_value = "exact")]
        mode: String,
    },
    /// Formula-based cost report; --verify additionally simulates and
    /// asserts ledger equality.
    Count {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        block: Option<String>,
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        network: Option<PathBuf>,
        /// Run the dense-layer configuration sweep.
        #[arg(long)]
        sweep: bool,
        /// Simulate and require ledger/formula equality.
        #[arg(long)]
        verify: bool,
        /// Worker threads for sweep verification.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Calibration table file (defaults to the built-in reference set).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Resolve a network plan and report its costs.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
        /// Built-in preset: imagenet, tiny-imagenet, cifar.
        #[arg(long)]
        preset: Option<String>,
        /// Plan spec file (JSON: input, stages, optional stem/head).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        e_min: usize,
        #[arg(long, default_value_t = 8)]
        e_max: usize,
        /// Capacity budget: a stage may expand while 2^e <= budget * c_n.
        #[arg(long, default_value_t = 2.0)]
        budget: f64,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Validate or emit a calibration table.
    Calibrate {
        /// Emit the built-in reference measurement set.
        #[arg(long)]
        paper_defaults: bool,
        /// Measurements file to validate.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Print interpolated per-rotation costs at this capacity.
        #[arg(long)]
        query_cn: Option<usize>,
        /// Output file (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank networks by FLOPs and by estimated packed-HE time.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Resolved network plans to include.
        #[arg(long = "network")]
        networks: Vec<PathBuf>,
        /// Plain layer-list files (JSON arrays of layer specs) to include.
        #[arg(long = "layers")]
        layer_files: Vec<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

fn default_slots(flag: Option<usize>) -> Result<usize, Error> {
    if let Some(slots) = flag {
        return Ok(slots);
    }
    match std::env::var("STRIA_SLOTS") {
        Ok(value) => value
            .parse()
            .map_err(|_| Error::Config(format!("bad STRIA_SLOTS value {value:?}"))),
        Err(_) => Ok(stria_core::DEFAULT_SLOT_COUNT),
    }
}

fn parse_mode(mode: &str) -> Result<Mode, Error> {
    match mode {
        "exact" => Ok(Mode::Exact),
        "float" => Ok(Mode::Float),
        other => Err(Error::Config(format!(
            "unknown mode {other:?} (exact, float)"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            common,
            block,
            layer,
            network,
            mode,
        } => commands::run_simulate(SimulateArgs {
            block,
            layer,
            network,
            mode: parse_mode(&mode)?,
            seed: common.seed,
            slots: default_slots(common.slots)?,
            out: common.out,
        }),
        Command::Count {
            common,
            block,
            layer,
            network,
            sweep,
            verify,
            threads,
            calibration,
        } => commands::run_count(CountArgs {
            block,
            layer,
            network,
            sweep,
            verify,
            threads,
            slots: default_slots(common.slots)?,
            seed: common.seed,
            calibration,
            out: common.out,
        }),
        Command::Plan {
            common,
            preset,
            spec,
            e_min,
            e_max,
            budget,
            calibration,
        } => commands::run_plan(PlanArgs {
            preset,
            spec,
            e_min,
            e_max,
            budget,
            slots: default_slots(common.slots)?,
            calibration,
            out: common.out,
        }),
        Command::Calibrate {
            paper_defaults,
            input,
            query_cn,
            out,
        } => commands::run_calibrate(CalibrateArgs {
            paper_defaults,
            input,
            query_cn,
            out,
        }),
        Command::Compare {
            common,
            networks,
            layer_files,
            calibration,
        } => commands::run_compare(CompareArgs {
            networks,
            layer_files,
            slots: default_slots(common.slots)?,
            calibration,
            out: common.out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::OracleMismatch(msg)) => {
            eprintln!("oracle mismatch: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Core(err)) => {
            eprintln!("error: {err}");
            match err {
                Error::InfeasibleStage { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
