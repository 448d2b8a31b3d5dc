//! Integer trip-count expressions over operator shape parameters.
//!
//! Grammar (usual precedence, left associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := INT | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `/` is floor division. The functions are `ceil_div(a, b)`, `max(a, b)`
//! and `min(a, b)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function {name:?} at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound parameter {0:?}")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("parameter {0:?} is not in the declared alphabet")]
    UndeclaredName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    CeilDiv,
    Max,
    Min,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::CeilDiv => "ceil_div",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        match name {
            "ceil_div" => Some(Func::CeilDiv),
            "max" => Some(Func::Max),
            "min" => Some(Func::Min),
            _ => None,
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TripExpr {
    Int(u64),
    Param(String),
    Binary(BinOp, Box<TripExpr>, Box<TripExpr>),
    Call(Func, Box<TripExpr>, Box<TripExpr>),
}

/// Parameter bindings (elements or iterations).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamEnv(pub BTreeMap<String, u64>);

impl ParamEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: impl Into<String>, value: u64) {
        self.0.insert(name.into(), value);
    }

    pub fn with(mut self, name: impl Into<String>, value: u64) -> Self {
        self.set(name, value);
        self
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for ParamEnv {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        ParamEnv(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

pub fn parse_expr(text: &str) -> Result<TripExpr, ExprError> {
    let tokens = lex(text)?;
    if tokens.len() == 1 {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    match p.peek() {
        (Tok::End, _) => Ok(e),
        (t, off) => Err(ExprError::Syntax {
            offset: off,
            message: format!("unexpected {}", t.describe()),
        }),
    }
}

/// Evaluates with floor division. A negative final value is clamped to 0
/// (degenerate shapes price to no work).
pub fn eval_expr(e: &TripExpr, env: &ParamEnv) -> Result<u64, ExprError> {
    let v = eval_raw(e, env)?;
    if v < 0 {
        log::warn!("trip expression `{e}` evaluated to {v}; clamped to 0");
        return Ok(0);
    }
    u64::try_from(v).map_err(|_| ExprError::Overflow)
}

fn eval_raw(e: &TripExpr, env: &ParamEnv) -> Result<i128, ExprError> {
    Ok(match e {
        TripExpr::Int(v) => *v as i128,
        TripExpr::Param(name) => env
            .get(name)
            .map(|v| v as i128)
            .ok_or_else(|| ExprError::Unbound(name.clone()))?,
        TripExpr::Binary(op, l, r) => {
            let (a, b) = (eval_raw(l, env)?, eval_raw(r, env)?);
            match op {
                BinOp::Add => a.checked_add(b).ok_or(ExprError::Overflow)?,
                BinOp::Sub => a.checked_sub(b).ok_or(ExprError::Overflow)?,
                BinOp::Mul => a.checked_mul(b).ok_or(ExprError::Overflow)?,
                BinOp::Div => floor_div(a, b)?,
            }
        }
        TripExpr::Call(f, l, r) => {
            let (a, b) = (eval_raw(l, env)?, eval_raw(r, env)?);
            match f {
                Func::CeilDiv => -floor_div(-a, b)?,
                Func::Max => a.max(b),
                Func::Min => a.min(b),
            }
        }
    })
}

fn floor_div(a: i128, b: i128) -> Result<i128, ExprError> {
    if b == 0 {
        return Err(ExprError::DivisionByZero);
    }
    let q = a / b;
    Ok(if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    })
}

impl TripExpr {
    /// All parameter names referenced by the expression.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            TripExpr::Int(_) => {}
            TripExpr::Param(n) => {
                out.insert(n.clone());
            }
            TripExpr::Binary(_, l, r) | TripExpr::Call(_, l, r) => {
                l.collect_names(out);
                r.collect_names(out);
            }
        }
    }

    pub fn check_alphabet(&self, alphabet: &BTreeSet<String>) -> Result<(), ExprError> {
        match self.names().into_iter().find(|n| !alphabet.contains(n)) {
            Some(n) => Err(ExprError::UndeclaredName(n)),
            None => Ok(()),
        }
    }

    pub fn one() -> TripExpr {
        TripExpr::Int(1)
    }
}

impl fmt::Display for TripExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TripExpr::Int(v) => write!(f, "{v}"),
            TripExpr::Param(n) => f.write_str(n),
            TripExpr::Call(func, a, b) => write!(f, "{}({a}, {b})", func.name()),
            TripExpr::Binary(op, l, r) => {
                let p = op.precedence();
                let wrap_left = matches!(**l, TripExpr::Binary(o, ..) if o.precedence() < p);
                let wrap_right = matches!(**r, TripExpr::Binary(o, ..) if o.precedence() <= p);
                if wrap_left {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if wrap_right {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

impl FromStr for TripExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

impl Serialize for TripExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TripExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u64),
    Name(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(v) => format!("integer {v}"),
            Tok::Name(n) => format!("name {n:?}"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v = text[start..i].parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: "integer literal out of range".into(),
                })?;
                out.push((Tok::Int(v), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Name(text[start..i].to_string()), start));
            }
            b'+' | b'-' | b'*' | b'/' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: i,
                    message: format!("unexpected character {:?}", text[i..].chars().next()),
                })
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> (Tok, usize) {
        self.tokens[self.pos].clone()
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.peek();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        let (t, off) = self.bump();
        if t == want {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: off,
                message: format!("expected {}, found {}", want.describe(), t.describe()),
            })
        }
    }

    fn expr(&mut self) -> Result<TripExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = TripExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<TripExpr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = TripExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<TripExpr, ExprError> {
        match self.bump() {
            (Tok::Int(v), _) => Ok(TripExpr::Int(v)),
            (Tok::Name(name), off) => {
                if self.peek().0 != Tok::LParen {
                    return Ok(TripExpr::Param(name));
                }
                let func = Func::lookup(&name).ok_or(ExprError::UnknownFunction {
                    name: name.clone(),
                    offset: off,
                })?;
                self.bump();
                let a = self.expr()?;
                self.expect(Tok::Comma)?;
                let b = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(TripExpr::Call(func, Box::new(a), Box::new(b)))
            }
            (Tok::LParen, _) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            (t, off) => Err(ExprError::Syntax {
                offset: off,
                message: format!("unexpected {}", t.describe()),
            }),
        }
    }
}
