//! objdump-style listing parser.
//!
//! A function starts at a header line `ADDR <symbol>:`; instruction lines
//! look like `ADDR: [hexwords] mnemonic [operands] [; comment]`. Anything
//! else (blank lines, section banners, literal pool directives) is skipped
//! and counted.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DisasmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub address: u64,
    pub mnemonic: String,
    pub operands: Vec<String>,
    /// `<sym>` annotation after a branch or call target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_symbol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinFunction {
    pub symbol: String,
    pub instructions: Vec<Instruction>,
}

/// Parsed listing plus the number of lines that were skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listing {
    pub functions: Vec<BinFunction>,
    pub skipped_lines: usize,
}

impl Listing {
    pub fn function(&self, symbol: &str) -> Option<&BinFunction> {
        self.functions.iter().find(|f| f.symbol == symbol)
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([0-9a-f]+) <([^>]+)>:$").unwrap())
}

fn insn_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([0-9A-Za-z_]+):\s+(\S.*)$").unwrap())
}

fn target_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*<([^>]*)>\s*$").unwrap())
}

pub fn parse_disasm(text: &str) -> Result<Listing, DisasmError> {
    let mut functions: Vec<BinFunction> = Vec::new();
    let mut current: Option<BinFunction> = None;
    let mut skipped = 0usize;
    // lines inside a function body that did not parse; banners outside
    // functions are expected and only counted
    let mut dropped = 0usize;

    let finish = |f: Option<BinFunction>, functions: &mut Vec<BinFunction>| {
        if let Some(f) = f {
            if f.instructions.is_empty() {
                log::warn!("function <{}> has no instructions; dropped", f.symbol);
            } else {
                functions.push(f);
            }
        }
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if let Some(c) = header_re().captures(line) {
            finish(current.take(), &mut functions);
            current = Some(BinFunction {
                symbol: c[2].to_string(),
                instructions: Vec::new(),
            });
            continue;
        }
        let (Some(func), Some(c)) = (current.as_mut(), insn_re().captures(line)) else {
            if !line.trim().is_empty() {
                skipped += 1;
                if current.is_some() {
                    dropped += 1;
                }
            }
            continue;
        };
        let address = u64::from_str_radix(&c[1], 16).map_err(|_| DisasmError::Address {
            line: lineno + 1,
            text: c[1].to_string(),
        })?;
        let Some(insn) = parse_body(address, &c[2], line) else {
            skipped += 1;
            dropped += 1;
            continue;
        };
        if let Some(prev) = func.instructions.last() {
            if insn.address <= prev.address {
                return Err(DisasmError::NonIncreasingAddress {
                    line: lineno + 1,
                    symbol: func.symbol.clone(),
                });
            }
        }
        func.instructions.push(insn);
    }
    finish(current.take(), &mut functions);

    if functions.is_empty() {
        return Err(DisasmError::NoFunctions);
    }
    if dropped > 0 {
        log::warn!("skipped {dropped} non-instruction line(s) inside functions");
    }
    Ok(Listing {
        functions,
        skipped_lines: skipped,
    })
}

fn is_hexword(tok: &str) -> bool {
    let n = tok.len();
    (2..=8).contains(&n) && n.is_multiple_of(2) && tok.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Start and length of the comment marker: `;` or `@` (Arm), or a `#`
/// standing alone between spaces (RISC-V; Arm immediates are `#imm`).
fn comment_start(body: &str) -> Option<(usize, usize)> {
    let b = body.as_bytes();
    for (i, &c) in b.iter().enumerate() {
        match c {
            b';' | b'@' => return Some((i, 1)),
            b'#' if i > 0
                && b[i - 1].is_ascii_whitespace()
                && b.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()) =>
            {
                return Some((i, 1))
            }
            _ => {}
        }
    }
    None
}

/// Parses everything after `ADDR:`. Returns `None` for directives.
fn parse_body(address: u64, body: &str, raw: &str) -> Option<Instruction> {
    let (code, comment) = match comment_start(body) {
        Some((at, len)) => {
            let rest = body[at + len..].trim();
            (
                &body[..at],
                Some(rest.to_string()).filter(|s| !s.is_empty()),
            )
        }
        None => (body, None),
    };

    // objdump separates bytes, mnemonic and operands with tabs; fall back to
    // whitespace tokens when the tabs were lost.
    let (mnemonic, operand_text) = if code.contains('\t') {
        let mut fields: Vec<&str> = code.split('\t').map(str::trim).collect();
        fields.retain(|f| !f.is_empty());
        if fields.len() >= 2 && fields[0].split_whitespace().all(is_hexword) {
            fields.remove(0);
        }
        let first = *fields.first()?;
        let (m, rest) = match first.split_once(char::is_whitespace) {
            Some((m, r)) => (m, r.trim().to_string()),
            None => (first, String::new()),
        };
        let mut ops = rest;
        for f in &fields[1..] {
            if !ops.is_empty() {
                ops.push(' ');
            }
            ops.push_str(f);
        }
        (m.to_string(), ops)
    } else {
        let toks = tokens_with_offsets(code);
        let mut i = 0;
        while i + 1 < toks.len() && is_hexword(toks[i].1) {
            i += 1;
        }
        let (start, m) = *toks.get(i)?;
        (m.to_string(), code[start + m.len()..].trim().to_string())
    };

    if mnemonic.starts_with('.') || mnemonic.starts_with("...") {
        return None;
    }

    let mut operand_text = operand_text;
    let mut target_symbol = None;
    if let Some(c) = target_re().captures(&operand_text) {
        target_symbol = Some(c[1].to_string());
        let cut = c.get(0).unwrap().start();
        operand_text.truncate(cut);
    }

    Some(Instruction {
        address,
        mnemonic: mnemonic.to_ascii_lowercase(),
        operands: split_operands(&operand_text),
        target_symbol,
        comment,
        raw: raw.to_string(),
    })
}

fn tokens_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

/// Comma split that keeps `[r3, #4]` and `{r4, r5}` whole.
fn split_operands(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '[' | '{' | '(' => {
                depth += 1;
                cur.push(ch);
            }
            ']' | '}' | ')' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out.retain(|s| !s.is_empty());
    out
}

impl Instruction {
    /// Canonical listing line for this instruction.
    pub fn render(&self) -> String {
        let mut s = format!("{:8x}:\t{}", self.address, self.mnemonic);
        if !self.operands.is_empty() {
            write!(s, "\t{}", self.operands.join(", ")).unwrap();
        }
        if let Some(sym) = &self.target_symbol {
            write!(s, " <{sym}>").unwrap();
        }
        if let Some(c) = &self.comment {
            write!(s, "\t; {c}").unwrap();
        }
        s
    }
}

impl BinFunction {
    /// Renders the function back to listing text (canonical line form).
    pub fn to_listing(&self) -> String {
        let start = self.instructions.first().map(|i| i.address).unwrap_or(0);
        let mut s = format!("{:08x} <{}>:\n", start, self.symbol);
        for insn in &self.instructions {
            s.push_str(&insn.render());
            s.push('\n');
        }
        s
    }
}

impl Listing {
    pub fn to_listing(&self) -> String {
        self.functions
            .iter()
            .map(BinFunction::to_listing)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thumb_line() {
        let l = parse_disasm("08000134 <f>:\n 8000134:\tf04f 0300 \tmov.w\tr3, #0\n").unwrap();
        let i = &l.functions[0].instructions[0];
        assert_eq!(i.address, 0x8000134);
        assert_eq!(i.mnemonic, "mov.w");
        assert_eq!(i.operands, vec!["r3", "#0"]);
    }

    #[test]
    fn line_without_tabs() {
        let l = parse_disasm("08000134 <f>:\n08000134: f04f 0300  mov.w r3, #0\n").unwrap();
        let i = &l.functions[0].instructions[0];
        assert_eq!(i.address, 0x8000134);
        assert_eq!(i.mnemonic, "mov.w");
        assert_eq!(i.operands, vec!["r3", "#0"]);
    }

    #[test]
    fn branch_target_annotation() {
        let l =
            parse_disasm("08000100 <f>:\n 8000100:\tdbf4      \tblt.n\t80001a0 <L2>\n").unwrap();
        let i = &l.functions[0].instructions[0];
        assert_eq!(i.mnemonic, "blt.n");
        assert_eq!(i.operands, vec!["80001a0"]);
        assert_eq!(i.target_symbol.as_deref(), Some("L2"));
    }

    #[test]
    fn bare_mnemonic_line() {
        let l = parse_disasm("00000000 <f>:\n   0:\tblt.n 80001a0 <L2>\n").unwrap();
        let i = &l.functions[0].instructions[0];
        assert_eq!(i.mnemonic, "blt.n");
        assert_eq!(i.operands, vec!["80001a0"]);
    }

    #[test]
    fn brackets_and_comments() {
        let text = "00000010 <g>:\n  10:\tf8d3 2004 \tldr.w\tr2, [r3, #4]\t; i_ker_x\n  14:\tb430      \tpush\t{r4, r5}\n";
        let l = parse_disasm(text).unwrap();
        let f = &l.functions[0];
        assert_eq!(f.instructions[0].operands, vec!["r2", "[r3, #4]"]);
        assert_eq!(f.instructions[0].comment.as_deref(), Some("i_ker_x"));
        assert_eq!(f.instructions[1].operands, vec!["{r4, r5}"]);
    }

    #[test]
    fn arm_and_riscv_comment_markers() {
        let text = concat!(
            "00000000 <g>:\n",
            "   0:\t4b02      \tldr\tr3, [pc, #8]\t@ (c <g+0xc>)\n",
            "   2:\t000080e7\tjalr\tra # 10 <h>\n",
            "   6:\t2301      \tmovs\tr3, #1\n",
        );
        let f = &parse_disasm(text).unwrap().functions[0];
        assert_eq!(f.instructions[0].operands, vec!["r3", "[pc, #8]"]);
        assert_eq!(f.instructions[0].comment.as_deref(), Some("(c <g+0xc>)"));
        assert_eq!(f.instructions[1].operands, vec!["ra"]);
        assert_eq!(f.instructions[1].comment.as_deref(), Some("10 <h>"));
        assert_eq!(f.instructions[2].operands, vec!["r3", "#1"]);
        assert!(f.instructions[2].comment.is_none());
    }

    #[test]
    fn riscv_line() {
        let l = parse_disasm("00000000 <k>:\n   0:\t00000513          \tli\ta0,0\n   4:\tfe0a4ce3\tbltz\ts4,fffffffc <k>\n").unwrap();
        let f = &l.functions[0];
        assert_eq!(f.instructions[0].mnemonic, "li");
        assert_eq!(f.instructions[0].operands, vec!["a0", "0"]);
        assert_eq!(f.instructions[1].operands, vec!["s4", "fffffffc"]);
    }

    #[test]
    fn skipped_lines_counted() {
        let text = "\nfw.elf:     file format elf32-littlearm\n\nDisassembly of section .text:\n\n08000100 <f>:\n 8000100:\t4770      \tbx\tlr\n 8000102:\tbf00      \tnop\n 8000104:\t20000004 \t.word\t0x20000004\n";
        let l = parse_disasm(text).unwrap();
        assert_eq!(l.functions[0].instructions.len(), 2);
        assert_eq!(l.skipped_lines, 3);
    }

    #[test]
    fn no_functions() {
        assert_eq!(
            parse_disasm(" 8000100:\t4770 \tbx\tlr\n"),
            Err(DisasmError::NoFunctions)
        );
    }

    #[test]
    fn bad_address() {
        let err = parse_disasm("08000100 <f>:\n 80zz100:\t4770 \tbx\tlr\n").unwrap_err();
        assert_eq!(
            err,
            DisasmError::Address {
                line: 2,
                text: "80zz100".into()
            }
        );
    }

    #[test]
    fn non_increasing_address() {
        let err = parse_disasm("00000000 <f>:\n 4:\tnop\n 2:\tnop\n").unwrap_err();
        assert!(matches!(
            err,
            DisasmError::NonIncreasingAddress { line: 3, .. }
        ));
    }

    #[test]
    fn multiple_functions() {
        let text = "00000000 <a>:\n 0:\tnop\n\n00000010 <b>:\n 10:\tnop\n 12:\tbx\tlr\n";
        let l = parse_disasm(text).unwrap();
        assert_eq!(l.functions.len(), 2);
        assert_eq!(l.function("b").unwrap().instructions.len(), 2);
    }
}
