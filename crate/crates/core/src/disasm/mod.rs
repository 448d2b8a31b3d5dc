//! Disassembly listings: parsing, instruction classes, basic-block CFGs and
//! binary-side loop features.

mod blocks;
mod isa;
mod listing;
mod semantics;

pub use blocks::{build_bin_cfg, BinCfg};
pub use isa::{
    classify_instruction, normalize_mnemonic, operator_token, parse_address, Arch, CpiTable, Flow,
    InstrClass, Isa,
};
pub use listing::{parse_disasm, BinFunction, Instruction, Listing};
pub use semantics::extract_bin_semantics;
pub(crate) use semantics::instruction_features;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DisasmError {
    #[error("no function header (`ADDR <symbol>:`) found in listing")]
    NoFunctions,
    #[error("line {line}: cannot parse address {text:?}")]
    Address { line: usize, text: String },
    #[error("line {line}: address does not increase within <{symbol}>")]
    NonIncreasingAddress { line: usize, symbol: String },
    #[error("unknown architecture {0:?} (expected cortex-m or riscv)")]
    UnknownArch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
