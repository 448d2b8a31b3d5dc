//! Source-side CFG descriptors and statement-level feature extraction.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::cfg::{Cfg, CfgDoc, CfgError, Loop, NodeId};
use crate::expr::{parse_expr, ExprError, TripExpr};
use crate::features::{Comparator, FeatureBundle};

#[derive(Debug, thiserror::Error)]
pub enum SrcError {
    #[error("source CFG document: {0}")]
    Schema(String),
    #[error(transparent)]
    Cfg(#[from] CfgError),
    #[error("trip expression for node {node}: {source}")]
    TripExpr { node: String, source: ExprError },
    #[error("trip expression keyed by unknown node {0:?}")]
    UnknownTripNode(String),
}

/// A source function: its CFG (statement text per node) and the trip-count
/// expression of each loop, keyed by loop header node.
#[derive(Debug, Clone)]
pub struct SrcFunction {
    pub name: String,
    pub cfg: Cfg,
    pub loop_trip_vars: BTreeMap<NodeId, TripExpr>,
}

#[derive(Deserialize)]
struct SrcDoc {
    name: String,
    #[serde(flatten)]
    cfg: CfgDoc,
    #[serde(default)]
    trip_exprs: BTreeMap<String, String>,
}

pub fn parse_src_cfg(document: &str) -> Result<SrcFunction, SrcError> {
    let doc: SrcDoc =
        serde_json::from_str(document).map_err(|e| SrcError::Schema(e.to_string()))?;
    if doc.name.trim().is_empty() {
        return Err(SrcError::Schema("\"name\" must be nonempty".into()));
    }
    let cfg = Cfg::try_from(doc.cfg)?;
    let mut trips = BTreeMap::new();
    for (key, text) in doc.trip_exprs {
        let node: NodeId = key
            .trim()
            .parse()
            .map_err(|_| SrcError::UnknownTripNode(key.clone()))?;
        if !cfg.contains(node) {
            return Err(SrcError::UnknownTripNode(key));
        }
        let e = parse_expr(&text).map_err(|source| SrcError::TripExpr {
            node: key.clone(),
            source,
        })?;
        trips.insert(node, e);
    }
    Ok(SrcFunction {
        name: doc.name,
        cfg,
        loop_trip_vars: trips,
    })
}

impl SrcFunction {
    pub fn trip_expr(&self, lp: &Loop) -> Option<&TripExpr> {
        self.loop_trip_vars.get(&lp.header)
    }
}

/// Features of all statement text inside `lp`.
pub fn extract_src_semantics(lp: &Loop, func: &SrcFunction) -> FeatureBundle {
    let mut fb = FeatureBundle::default();
    for id in &lp.body {
        if let Some(node) = func.cfg.node(*id) {
            for line in &node.text {
                statement_features(line, &mut fb);
            }
        }
    }
    fb
}

const STOP_WORDS: &[&str] = &[
    "alignas",
    "alignof",
    "asm",
    "auto",
    "bool",
    "break",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "constexpr",
    "const_cast",
    "continue",
    "decltype",
    "default",
    "delete",
    "do",
    "double",
    "dynamic_cast",
    "else",
    "enum",
    "explicit",
    "extern",
    "false",
    "float",
    "for",
    "friend",
    "goto",
    "if",
    "inline",
    "int",
    "long",
    "mutable",
    "namespace",
    "new",
    "noexcept",
    "nullptr",
    "operator",
    "private",
    "protected",
    "public",
    "register",
    "reinterpret_cast",
    "return",
    "short",
    "signed",
    "sizeof",
    "static",
    "static_assert",
    "static_cast",
    "struct",
    "switch",
    "template",
    "this",
    "throw",
    "true",
    "try",
    "typedef",
    "typeid",
    "typename",
    "union",
    "unsigned",
    "using",
    "virtual",
    "void",
    "volatile",
    "while",
    "int8_t",
    "int16_t",
    "int32_t",
    "int64_t",
    "uint8_t",
    "uint16_t",
    "uint32_t",
    "uint64_t",
    "size_t",
    "ptrdiff_t",
    "intptr_t",
    "uintptr_t",
    "std",
    "NULL",
];

const CASTS: &[&str] = &[
    "static_cast",
    "reinterpret_cast",
    "const_cast",
    "dynamic_cast",
];

// maximal munch: longer tokens first
const OPERATORS: &[(&str, Option<Comparator>)] = &[
    ("<<=", Some(Comparator::Shl)),
    (">>=", Some(Comparator::Shr)),
    ("->", None),
    ("<=", Some(Comparator::Le)),
    (">=", Some(Comparator::Ge)),
    ("==", Some(Comparator::Eq)),
    ("!=", Some(Comparator::Ne)),
    ("<<", Some(Comparator::Shl)),
    (">>", Some(Comparator::Shr)),
    ("&&", None),
    ("||", None),
    ("&=", Some(Comparator::And)),
    ("|=", Some(Comparator::Or)),
    ("<", Some(Comparator::Lt)),
    (">", Some(Comparator::Gt)),
    ("&", Some(Comparator::And)),
    ("|", Some(Comparator::Or)),
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Prev {
    Start,
    Operand,
    Operator,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn strip_comments(text: &str) -> String {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if b[i] == b'/' && b.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(b.len());
            out.push(' ');
        } else {
            let ch = text[i..].chars().next().unwrap();
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

/// Adds the features of one statement line to `fb`.
pub fn statement_features(line: &str, fb: &mut FeatureBundle) {
    let text = strip_comments(line);
    let b = text.as_bytes();
    let mut i = 0;
    let mut prev = Prev::Start;
    let mut negate_next = false;

    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        // string and character literals carry nothing
        if c == b'"' || c == b'\'' {
            i += 1;
            while i < b.len() && b[i] != c {
                if b[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            prev = Prev::Operand;
            negate_next = false;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'.' || b[i] == b'_') {
                // exponent sign, e.g. 1e-3
                if (b[i] == b'e' || b[i] == b'E')
                    && !text[start..i].starts_with("0x")
                    && matches!(b.get(i + 1), Some(b'+') | Some(b'-'))
                {
                    i += 1;
                }
                i += 1;
            }
            if let Some(v) = int_literal(&text[start..i]) {
                fb.integers.insert(if negate_next { -v } else { v });
            }
            negate_next = false;
            prev = Prev::Operand;
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < b.len() && is_ident_char(b[i]) {
                i += 1;
            }
            // dotted member paths stay whole
            while i + 1 < b.len() && b[i] == b'.' && is_ident_start(b[i + 1]) {
                i += 1;
                while i < b.len() && is_ident_char(b[i]) {
                    i += 1;
                }
            }
            let word = &text[start..i];
            negate_next = false;
            if CASTS.contains(&word) {
                i = skip_template_args(b, i);
                prev = Prev::Operator;
                continue;
            }
            if STOP_WORDS.contains(&word) {
                prev = if word == "return" {
                    Prev::Operator
                } else {
                    Prev::Operand
                };
                continue;
            }
            let mut j = i;
            while j < b.len() && b[j].is_ascii_whitespace() {
                j += 1;
            }
            if b.get(j) == Some(&b'(') {
                fb.function_names.insert(word.to_string());
            } else {
                fb.variable_names.insert(word.to_string());
            }
            prev = Prev::Operand;
            continue;
        }
        if c == b')' || c == b']' {
            i += 1;
            prev = Prev::Operand;
            negate_next = false;
            continue;
        }

        let rest = &text[i..];
        if let Some(&(tok, cmp)) = OPERATORS.iter().find(|(t, _)| rest.starts_with(t)) {
            i += tok.len();
            let unary = prev != Prev::Operand;
            if let Some(cmp) = cmp {
                // `&x` is address-of, not a bitwise and
                if !(unary && tok == "&") {
                    fb.comparators.insert(cmp);
                }
            }
            prev = Prev::Operator;
            negate_next = false;
            continue;
        }
        if c == b'-' && prev != Prev::Operand && b.get(i + 1) != Some(&b'-') {
            negate_next = true;
            i += 1;
            prev = Prev::Operator;
            continue;
        }
        // remaining punctuation; `++`/`--` leave the operand state alone
        if (c == b'+' || c == b'-') && b.get(i + 1) == Some(&c) {
            i += 2;
            continue;
        }
        negate_next = false;
        prev = Prev::Operator;
        i += 1;
    }
}

fn skip_template_args(b: &[u8], mut i: usize) -> usize {
    let mut j = i;
    while j < b.len() && b[j].is_ascii_whitespace() {
        j += 1;
    }
    if b.get(j) != Some(&b'<') {
        return i;
    }
    let mut depth = 0;
    i = j;
    while i < b.len() {
        match b[i] {
            b'<' => depth += 1,
            b'>' => {
                depth -= 1;
                if depth == 0 {
                    return i + 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    i
}

fn int_literal(tok: &str) -> Option<i64> {
    let lower = tok.to_ascii_lowercase();
    if let Some(hex) = lower.strip_prefix("0x") {
        let digits = hex.trim_end_matches(['u', 'l']);
        return i64::from_str_radix(digits, 16).ok();
    }
    let digits = lower.trim_end_matches(['u', 'l']);
    if digits.bytes().all(|b| b.is_ascii_digit()) && !digits.is_empty() {
        digits.parse().ok()
    } else {
        None
    }
}
