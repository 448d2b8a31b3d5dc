//! Command-line front end: parse-disasm, extract-loops, map, build-lib,
//! estimate, fit, predict and eval.

mod commands;
mod io;

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use io::{load_dataset, parse_dataset, save_report, write_atomic, Dataset, DATASET_HEADER};

use crate::disasm::Arch;
use crate::predictor::Target;

pub const DEFAULT_SEED: u64 = 42;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn data(path: &Path, err: impl Display) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "instmeter",
    version,
    about = "Static cycle counts and few-shot energy/latency prediction for MCU inference"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Target architecture: cortex-m or riscv.
    #[arg(long, global = true, default_value = "cortex-m")]
    pub arch: Arch,
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "INSTMETER_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Instruction-set description overriding the built-in one for --arch.
    #[arg(long, global = true)]
    pub isa: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an objdump listing into per-function instructions and CFGs.
    ParseDisasm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the natural loops and loop relations of a CFG.
    ExtractLoops {
        /// Source CFG descriptor (JSON).
        #[arg(long, conflicts_with = "bin", required_unless_present = "bin")]
        src: Option<PathBuf>,
        /// Disassembly listing or parse-disasm output.
        #[arg(long)]
        bin: Option<PathBuf>,
        /// Function symbol when the listing holds several.
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map source loops onto disassembly loops.
    Map {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        bin: PathBuf,
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an instruction library from a kernel manifest.
    BuildLib {
        #[arg(long)]
        manifest: PathBuf,
        /// CPI table overriding the manifest's.
        #[arg(long)]
        cpi: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cycle count of a model, with a per-operator breakdown.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lib: PathBuf,
        /// CPI table overriding the library's.
        #[arg(long)]
        cpi: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a linear predictor on a dataset.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target: Target,
        /// Independent split-selection seeds.
        #[arg(long, default_value_t = crate::predictor::DEFAULT_SEEDS)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict energy or latency from a cycle count or a model.
    Predict {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        cycles: Option<u64>,
        #[arg(long, requires = "lib")]
        model: Option<PathBuf>,
        #[arg(long)]
        lib: Option<PathBuf>,
    },
    /// Few-shot evaluation: fit on `shots` samples, report errors on the rest.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target: Target,
        #[arg(long, default_value_t = 5, conflicts_with = "predictor")]
        shots: usize,
        #[arg(long, default_value_t = crate::predictor::DEFAULT_SEEDS)]
        seeds: usize,
        /// Evaluate an existing predictor on the whole dataset instead.
        #[arg(long)]
        predictor: Option<PathBuf>,
        /// Directory receiving eval_errors.csv and eval_summary.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .try_init();
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.verbose);
    match commands::execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
