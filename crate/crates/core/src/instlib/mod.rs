//! Instruction library: per-kernel loop trees priced by a CPI table, kernel
//! dispatch, and model-level cycle totals.

mod dispatch;
mod library;
mod profile;

use std::path::PathBuf;

pub use dispatch::{
    default_rules, dispatch_operator, DispatchRule, OperatorInstance, Predicate, OP_TYPES,
};
pub use library::{
    build_library, model_cycles, operator_cycles, BuildManifest, BuildOptions, InstructionLibrary,
    KernelCycles, KernelSpec, ModelCycles, OperatorCycles, LIBRARY_FORMAT_VERSION,
};
pub use profile::{build_profile, kernel_cycles, KernelProfile, ProfileNode};

use crate::cfg::LoopId;
use crate::expr::ExprError;
use crate::mapper::MapError;

#[derive(Debug, thiserror::Error)]
pub enum LibError {
    #[error("kernel {kernel}: mapped source loop {src_loop} has no trip expression")]
    MissingTrip { kernel: String, src_loop: LoopId },
    #[error("attribution failed: {0}")]
    Attribution(String),
    #[error("kernel {kernel}: {source}")]
    Expr { kernel: String, source: ExprError },
    #[error("kernel {kernel}: {source}")]
    Map { kernel: String, source: MapError },
    #[error("no dispatch rule for operator type {0:?}")]
    NoRule(String),
    #[error("kernel {0:?} is not in the library")]
    MissingKernel(String),
    #[error("cycle count overflows 64 bits")]
    Overflow,
    #[error("{0}")]
    Format(String),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
