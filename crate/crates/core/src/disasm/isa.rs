//! Per-architecture branch sets, instruction classes and CPI tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DisasmError, Instruction};
use crate::features::Comparator;

/// Strips width qualifiers (`.n`, `.w`) and lowercases.
pub fn normalize_mnemonic(mnemonic: &str) -> String {
    let m = mnemonic.trim().to_ascii_lowercase();
    m.strip_suffix(".n")
        .or_else(|| m.strip_suffix(".w"))
        .map(str::to_string)
        .unwrap_or(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    CortexM,
    Riscv,
}

impl FromStr for Arch {
    type Err = DisasmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cortex-m" => Ok(Arch::CortexM),
            "riscv" => Ok(Arch::Riscv),
            other => Err(DisasmError::UnknownArch(other.to_string())),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::CortexM => "cortex-m",
            Arch::Riscv => "riscv",
        })
    }
}

/// Control-flow behaviour of one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Next,
    Conditional(u64),
    Jump(u64),
    /// Indirect jump or return; ends the block with no known successor.
    Exit,
    Call,
}

/// Branch mnemonic sets for one architecture. Loadable from JSON so new
/// targets can be described without code changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Isa {
    pub name: String,
    pub conditional_branches: BTreeSet<String>,
    pub unconditional_branches: BTreeSet<String>,
    pub calls: BTreeSet<String>,
    /// Always leave the function (indirect jumps, returns).
    pub returns: BTreeSet<String>,
    /// Leave the function when `pc` is among the operands (`pop {.., pc}`).
    #[serde(default)]
    pub returns_when_pc: BTreeSet<String>,
    /// Jump-and-link forms whose destination register decides between call
    /// and plain jump (`jal zero, x` is a jump, `jal ra, x` a call).
    #[serde(default)]
    pub link_jumps: BTreeSet<String>,
    /// Immediates appear without a `#` prefix.
    #[serde(default)]
    pub bare_immediates: bool,
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Isa {
    pub fn for_arch(arch: Arch) -> Isa {
        match arch {
            Arch::CortexM => Isa::cortex_m(),
            Arch::Riscv => Isa::riscv(),
        }
    }

    pub fn cortex_m() -> Isa {
        let mut cond: BTreeSet<String> = [
            "eq", "ne", "cs", "hs", "cc", "lo", "mi", "pl", "vs", "vc", "hi", "ls", "ge", "lt",
            "gt", "le",
        ]
        .iter()
        .map(|c| format!("b{c}"))
        .collect();
        cond.extend(set(&["cbz", "cbnz"]));
        Isa {
            name: "cortex-m".into(),
            conditional_branches: cond,
            unconditional_branches: set(&["b", "bal"]),
            calls: set(&["bl", "blx"]),
            returns: set(&["bx", "tbb", "tbh"]),
            returns_when_pc: set(&["pop", "ldm", "ldmia", "ldmfd", "ldr", "mov"]),
            link_jumps: BTreeSet::new(),
            bare_immediates: false,
        }
    }

    pub fn riscv() -> Isa {
        Isa {
            name: "riscv".into(),
            conditional_branches: set(&[
                "beq", "bne", "blt", "bge", "bltu", "bgeu", "bgt", "ble", "bgtu", "bleu", "beqz",
                "bnez", "bltz", "bgez", "bgtz", "blez",
            ]),
            unconditional_branches: set(&["j"]),
            calls: set(&["call"]),
            returns: set(&["ret", "jr", "tail"]),
            returns_when_pc: BTreeSet::new(),
            link_jumps: set(&["jal", "jalr"]),
            bare_immediates: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Isa, DisasmError> {
        serde_json::from_str(text).map_err(|e| DisasmError::Config(e.to_string()))
    }

    pub fn is_branch(&self, mnemonic: &str) -> bool {
        let m = normalize_mnemonic(mnemonic);
        self.conditional_branches.contains(&m)
            || self.unconditional_branches.contains(&m)
            || self.link_jumps.contains(&m)
    }

    /// Control flow of `insn`. Targets are absolute addresses; whether they
    /// fall inside the function is decided by the block builder.
    pub fn flow(&self, insn: &Instruction) -> Flow {
        let m = normalize_mnemonic(&insn.mnemonic);
        let target = || insn.operands.last().and_then(|op| parse_address(op));
        if self.conditional_branches.contains(&m) {
            return target().map(Flow::Conditional).unwrap_or(Flow::Next);
        }
        if self.unconditional_branches.contains(&m) {
            return target().map(Flow::Jump).unwrap_or(Flow::Exit);
        }
        if self.calls.contains(&m) {
            return Flow::Call;
        }
        if self.returns.contains(&m) {
            return Flow::Exit;
        }
        if self.returns_when_pc.contains(&m) && writes_pc(&m, &insn.operands) {
            return Flow::Exit;
        }
        if self.link_jumps.contains(&m) {
            let rd = insn.operands.first().map(|s| s.as_str());
            let links = match insn.operands.len() {
                0 => true,
                1 => m == "jal" || m == "jalr",
                _ => !matches!(rd, Some("zero") | Some("x0")),
            };
            if links {
                return Flow::Call;
            }
            return match (m.as_str(), target()) {
                ("jal", Some(t)) => Flow::Jump(t),
                _ => Flow::Exit,
            };
        }
        Flow::Next
    }
}

fn writes_pc(mnemonic: &str, operands: &[String]) -> bool {
    match mnemonic {
        // destination is the first operand
        "ldr" | "mov" => operands.first().is_some_and(|o| o == "pc"),
        _ => operands.iter().any(|o| {
            o.trim_matches(|c| c == '{' || c == '}')
                .split(',')
                .any(|r| r.trim() == "pc")
        }),
    }
}

/// Parses a branch target written as bare hex (`80001a0`) or `0x`-prefixed.
pub fn parse_address(op: &str) -> Option<u64> {
    let t = op.split_whitespace().next()?;
    let t = t.strip_prefix("0x").unwrap_or(t);
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u64::from_str_radix(t, 16).ok()
}

/// Instruction class used for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "op")]
pub enum InstrClass {
    CompareBranch(Comparator),
    UncondBranch,
    Call,
    Shift(Comparator),
    BitLogic(Comparator),
    Compute,
    Other,
}

impl InstrClass {
    /// The canonical operator token carried by the class, if any.
    pub fn comparator(self) -> Option<Comparator> {
        match self {
            InstrClass::CompareBranch(c) | InstrClass::Shift(c) | InstrClass::BitLogic(c) => {
                Some(c)
            }
            _ => None,
        }
    }
}

/// Branch/shift/logic mnemonics and their canonical token. Both members of a
/// comparison pair map to one token: `blt`/`bge` implement `<` (and `>=`),
/// `bgt`/`ble` implement `>` (and `<=`).
type OperatorRow = (
    &'static [&'static str],
    fn(Comparator) -> InstrClass,
    Comparator,
);

const OPERATOR_TABLE: &[OperatorRow] = &[
    (
        &[
            "blt", "bge", "blo", "bcc", "bhs", "bcs", "bmi", "bpl", "bltu", "bgeu", "bltz", "bgez",
        ],
        InstrClass::CompareBranch,
        Comparator::Lt,
    ),
    (
        &["bgt", "ble", "bhi", "bls", "bgtu", "bleu", "bgtz", "blez"],
        InstrClass::CompareBranch,
        Comparator::Gt,
    ),
    (
        &["beq", "cbz", "beqz"],
        InstrClass::CompareBranch,
        Comparator::Eq,
    ),
    (
        &["bne", "cbnz", "bnez"],
        InstrClass::CompareBranch,
        Comparator::Ne,
    ),
    (
        &["asr", "asrs", "lsr", "lsrs", "sra", "srai", "srl", "srli"],
        InstrClass::Shift,
        Comparator::Shr,
    ),
    (
        &["lsl", "lsls", "sll", "slli"],
        InstrClass::Shift,
        Comparator::Shl,
    ),
    (
        &["and", "ands", "andi"],
        InstrClass::BitLogic,
        Comparator::And,
    ),
    (
        &["orr", "orrs", "or", "ori"],
        InstrClass::BitLogic,
        Comparator::Or,
    ),
];

const UNCOND: &[&str] = &["b", "bal", "j", "bx", "jr", "ret", "tail", "tbb", "tbh"];
const CALLS: &[&str] = &["bl", "blx", "jal", "jalr", "call"];
const COMPUTE: &[&str] = &[
    // Arm
    "add", "adds", "adc", "adcs", "sub", "subs", "sbc", "sbcs", "rsb", "rsbs", "mul", "muls", "mla",
    "mls", "smull", "umull", "smlal", "umlal", "smlabb", "smlad", "smladx", "smuad", "sdiv",
    "udiv", "mov", "movs", "movw", "movt", "mvn", "mvns", "cmp", "cmn", "tst", "teq", "eor",
    "eors", "bic", "bics", "orn", "ror", "rors", "ldr", "ldrb", "ldrh", "ldrsb", "ldrsh", "ldrd",
    "ldm", "ldmia", "str", "strb", "strh", "strd", "stm", "stmia", "push", "pop", "sxtb", "sxth",
    "uxtb", "uxth", "sxtb16", "uxtb16", "sxtab16", "ssat", "usat", "qadd", "qsub", "qadd8",
    "sadd16", "ssub16", "pkhbt", "pkhtb", "clz", "rev", "it", "ite", "itt", "itte", "nop", "adr",
    "smmul", "smmla", "smulbb", // RISC-V
    "addi", "addw", "addiw", "subw", "mulh", "mulhu", "div", "divu", "rem", "remu", "li", "mv",
    "lui", "auipc", "lw", "lh", "lhu", "lb", "lbu", "sw", "sh", "sb", "xor", "xori", "slt", "slti",
    "sltu", "sltiu", "neg", "not", "seqz", "snez",
];

/// Cycles per executed instruction, keyed by normalized mnemonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiTable {
    pub architecture: String,
    pub entries: BTreeMap<String, f64>,
    /// Taken-branch costs; when present they replace the entry for that
    /// mnemonic.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub taken: BTreeMap<String, f64>,
    pub default: f64,
}

impl CpiTable {
    pub fn new(architecture: impl Into<String>, default: f64) -> CpiTable {
        CpiTable {
            architecture: architecture.into(),
            entries: BTreeMap::new(),
            taken: BTreeMap::new(),
            default,
        }
    }

    pub fn with(mut self, mnemonic: &str, cycles: f64) -> CpiTable {
        self.entries.insert(normalize_mnemonic(mnemonic), cycles);
        self
    }

    pub fn validate(&self) -> Result<(), DisasmError> {
        let bad = |v: f64| !(v.is_finite() && v > 0.0);
        if bad(self.default) {
            return Err(DisasmError::Config(format!(
                "default CPI must be positive, got {}",
                self.default
            )));
        }
        for (k, &v) in self.entries.iter().chain(self.taken.iter()) {
            if bad(v) {
                return Err(DisasmError::Config(format!(
                    "CPI for {k:?} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<CpiTable, DisasmError> {
        let mut t: CpiTable =
            serde_json::from_str(text).map_err(|e| DisasmError::Config(e.to_string()))?;
        t.entries = t
            .entries
            .into_iter()
            .map(|(k, v)| (normalize_mnemonic(&k), v))
            .collect();
        t.taken = t
            .taken
            .into_iter()
            .map(|(k, v)| (normalize_mnemonic(&k), v))
            .collect();
        t.validate()?;
        Ok(t)
    }

    pub fn cycles(&self, mnemonic: &str) -> f64 {
        let m = normalize_mnemonic(mnemonic);
        self.taken
            .get(&m)
            .or_else(|| self.entries.get(&m))
            .copied()
            .unwrap_or(self.default)
    }
}

/// Class and per-execution cost of one mnemonic.
pub fn classify_instruction(mnemonic: &str, cpi: &CpiTable) -> (InstrClass, f64) {
    let m = normalize_mnemonic(mnemonic);
    (classify(&m, cpi), cpi.cycles(&m))
}

fn classify(m: &str, cpi: &CpiTable) -> InstrClass {
    for (names, make, token) in OPERATOR_TABLE {
        if names.contains(&m) {
            return make(*token);
        }
    }
    if UNCOND.contains(&m) {
        InstrClass::UncondBranch
    } else if CALLS.contains(&m) {
        InstrClass::Call
    } else if COMPUTE.contains(&m) || cpi.entries.contains_key(m) {
        InstrClass::Compute
    } else {
        InstrClass::Other
    }
}

/// The canonical token of a mnemonic, independent of any CPI table.
pub fn operator_token(mnemonic: &str) -> Option<Comparator> {
    let m = normalize_mnemonic(mnemonic);
    OPERATOR_TABLE
        .iter()
        .find(|(names, _, _)| names.contains(&m.as_str()))
        .map(|(_, _, t)| *t)
}
