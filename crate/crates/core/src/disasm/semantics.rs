//! Binary-side semantic features of a loop.

use std::sync::OnceLock;

use regex::Regex;

use super::blocks::build_bin_cfg;
use super::isa::{operator_token, Flow, Isa};
use super::{BinFunction, Instruction};
use crate::cfg::Loop;
use crate::features::FeatureBundle;

fn hash_imm_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#(-?(?:0x[0-9a-fA-F]+|[0-9]+))").unwrap())
}

fn bare_imm_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(-?(?:0x[0-9a-fA-F]+|[0-9]+))(?:\(\w+\))?$").unwrap())
}

fn ident_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*").unwrap())
}

fn symbol_ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").unwrap())
}

fn register_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:r[0-9]+|[axst][0-9]+|sp|lr|pc|ip|fp|ra|gp|tp|zero)$").unwrap()
    })
}

fn parse_int(text: &str) -> Option<i64> {
    let (neg, t) = match text.strip_prefix('-') {
        Some(t) => (true, t),
        None => (false, text),
    };
    let v = match t.strip_prefix("0x") {
        Some(h) => i64::from_str_radix(h, 16).ok()?,
        None => t.parse::<i64>().ok()?,
    };
    Some(if neg { -v } else { v })
}

/// Features of the instructions inside `lp`, a loop of
/// `build_bin_cfg(func, isa)`.
pub fn extract_bin_semantics(lp: &Loop, func: &BinFunction, isa: &Isa) -> FeatureBundle {
    let bcfg = build_bin_cfg(func, isa);
    let insns: Vec<&Instruction> = bcfg
        .instructions_in(lp.body.iter())
        .map(|i| &func.instructions[i])
        .collect();
    instruction_features(&insns, isa)
}

pub(crate) fn instruction_features(insns: &[&Instruction], isa: &Isa) -> FeatureBundle {
    let mut fb = FeatureBundle::default();
    for insn in insns {
        let flow = isa.flow(insn);
        if flow == Flow::Call {
            if let Some(sym) = &insn.target_symbol {
                let name = sym.split('+').next().unwrap_or(sym).trim();
                if !name.is_empty() {
                    fb.function_names.insert(name.to_string());
                }
            }
        }
        if let Some(c) = operator_token(&insn.mnemonic) {
            fb.comparators.insert(c);
        }

        let is_transfer = matches!(flow, Flow::Conditional(_) | Flow::Jump(_) | Flow::Call);
        let n_ops = insn.operands.len();
        for (k, op) in insn.operands.iter().enumerate() {
            if is_transfer && k + 1 == n_ops {
                continue;
            }
            for c in hash_imm_re().captures_iter(op) {
                if let Some(v) = parse_int(&c[1]) {
                    fb.integers.insert(v);
                }
            }
            if isa.bare_immediates {
                if let Some(c) = bare_imm_re().captures(op.trim()) {
                    if let Some(v) = parse_int(&c[1]) {
                        fb.integers.insert(v);
                    }
                }
            }
        }

        if let Some(comment) = &insn.comment {
            // `<sym+0x..>` in a comment names a literal-pool address
            let comment = symbol_ref_re().replace_all(comment, " ");
            for m in ident_re().find_iter(&comment) {
                let name = m.as_str();
                let hexlike = name.starts_with("0x") || name.bytes().all(|b| b.is_ascii_hexdigit());
                if !hexlike && !register_re().is_match(name) {
                    fb.variable_names.insert(name.to_string());
                }
            }
        }
    }
    fb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::extract_loops;
    use crate::disasm::parse_disasm;
    use crate::features::Comparator;

    fn one_loop(text: &str, isa: &Isa) -> FeatureBundle {
        let f = parse_disasm(text).unwrap().functions.remove(0);
        let b = build_bin_cfg(&f, isa);
        let loops = extract_loops(&b.cfg);
        assert_eq!(loops.len(), 1);
        extract_bin_semantics(&loops[0], &f, isa)
    }

    #[test]
    fn comparator_from_branch() {
        let fb = one_loop(
            concat!(
                "00000000 <f>:\n",
                " 0:\tsubs\tr3, #1\t; k_y\n",
                " 2:\tcmp\tr3, #0\n",
                " 4:\tbgt.n\t0 <f>\n",
                " 6:\tbx\tlr\n",
            ),
            &Isa::cortex_m(),
        );
        assert_eq!(fb.comparators.count(&Comparator::Gt), 1);
        assert_eq!(fb.comparators.total(), 1);
        assert_eq!(fb.integers.count(&1), 1);
        assert_eq!(fb.integers.count(&0), 1);
        assert_eq!(fb.variable_names.count(&"k_y".to_string()), 1);
    }

    #[test]
    fn call_target_names() {
        let fb = one_loop(
            concat!(
                "00000000 <f>:\n",
                " 0:\tbl\t100 <memcpy>\n",
                " 4:\tadds\tr0, #4\n",
                " 6:\tbne.n\t0 <f>\n",
                " 8:\tbx\tlr\n",
            ),
            &Isa::cortex_m(),
        );
        assert_eq!(fb.function_names.count(&"memcpy".to_string()), 1);
        assert_eq!(fb.integers.count(&4), 1);
        assert_eq!(fb.comparators.count(&Comparator::Ne), 1);
    }

    #[test]
    fn plain_arithmetic_has_no_names() {
        let fb = one_loop(
            concat!(
                "00000000 <f>:\n",
                " 0:\tmov\tr2, r3\n",
                " 2:\tadd\tr2, r1\n",
                " 4:\tb.n\t0 <f>\n",
            ),
            &Isa::cortex_m(),
        );
        assert!(fb.function_names.is_empty());
        assert!(fb.variable_names.is_empty());
        assert!(fb.integers.is_empty());
        assert!(fb.comparators.is_empty());
    }

    #[test]
    fn riscv_bare_immediates() {
        let fb = one_loop(
            concat!(
                "00000000 <f>:\n",
                "   0:\t00150513\taddi\ta0,a0,1\n",
                "   4:\tffc5a783\tlw\ta5,-4(a1)\n",
                "   8:\tfeb54ce3\tblt\ta0,a1,0 <f>\n",
                "   c:\t00008067\tret\n",
            ),
            &Isa::riscv(),
        );
        assert_eq!(fb.integers.count(&1), 1);
        assert_eq!(fb.integers.count(&-4), 1);
        assert_eq!(fb.integers.count(&0), 0);
        assert_eq!(fb.comparators.count(&Comparator::Lt), 1);
    }
}
