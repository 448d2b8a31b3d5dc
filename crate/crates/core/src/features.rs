//! Loop-level semantic features shared by the source and disassembly sides.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Canonical operator tokens. Source comparisons and the branch, shift and
/// logic instructions on the binary side both reduce to this alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">>")]
    Shr,
    #[serde(rename = "<<")]
    Shl,
    #[serde(rename = "&")]
    And,
    #[serde(rename = "|")]
    Or,
}

impl Comparator {
    pub const ALL: [Comparator; 10] = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Shr,
        Comparator::Shl,
        Comparator::And,
        Comparator::Or,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Shr => ">>",
            Comparator::Shl => "<<",
            Comparator::And => "&",
            Comparator::Or => "|",
        }
    }

    /// Collapses a comparison onto the branch pair that implements it.
    ///
    /// A compiler may realize `i < n` with either `blt` (same sense) or
    /// `bge` (inverted sense, jumping out), so `<` and `>=` are one class;
    /// likewise `>` and `<=`.
    pub fn branch_class(self) -> Comparator {
        match self {
            Comparator::Ge => Comparator::Lt,
            Comparator::Le => Comparator::Gt,
            other => other,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "<" => Comparator::Lt,
            "<=" | "≤" => Comparator::Le,
            ">" => Comparator::Gt,
            ">=" | "≥" => Comparator::Ge,
            "==" => Comparator::Eq,
            "!=" => Comparator::Ne,
            ">>" => Comparator::Shr,
            "<<" => Comparator::Shl,
            "&" => Comparator::And,
            "|" => Comparator::Or,
            _ => return Err(format!("unknown comparator token {s:?}")),
        })
    }
}

/// A counted bag of items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Multiset<T: Ord>(BTreeMap<T, usize>);

impl<T: Ord> Default for Multiset<T> {
    fn default() -> Self {
        Multiset(BTreeMap::new())
    }
}

impl<T: Ord + Clone> Multiset<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: T) {
        *self.0.entry(item).or_insert(0) += 1;
    }

    pub fn count(&self, item: &T) -> usize {
        self.0.get(item).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, usize)> {
        self.0.iter().map(|(k, &v)| (k, v))
    }

    pub fn map<U: Ord + Clone>(&self, f: impl Fn(&T) -> U) -> Multiset<U> {
        let mut out = Multiset::new();
        for (k, v) in self.iter() {
            *out.0.entry(f(k)).or_insert(0) += v;
        }
        out
    }

    /// Multiset Jaccard index `Σ min / Σ max`; two empty bags score 0.
    pub fn jaccard(&self, other: &Multiset<T>) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (k, a) in self.iter() {
            let b = other.count(k);
            inter += a.min(b);
            union += a.max(b);
        }
        for (k, b) in other.iter() {
            if self.count(k) == 0 {
                union += b;
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl<T: Ord + Clone> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for x in iter {
            m.insert(x);
        }
        m
    }
}

/// The four semantic features of one loop.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub function_names: Multiset<String>,
    pub variable_names: Multiset<String>,
    pub integers: Multiset<i64>,
    pub comparators: Multiset<Comparator>,
}

impl FeatureBundle {
    pub fn is_empty(&self) -> bool {
        self.function_names.is_empty()
            && self.variable_names.is_empty()
            && self.integers.is_empty()
            && self.comparators.is_empty()
    }
}

/// Feature kinds, one similarity matrix each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    FunctionName,
    VariableName,
    Integer,
    Comparator,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::FunctionName,
        Feature::VariableName,
        Feature::Integer,
        Feature::Comparator,
    ];

    pub fn similarity(self, a: &FeatureBundle, b: &FeatureBundle) -> f64 {
        match self {
            Feature::FunctionName => a.function_names.jaccard(&b.function_names),
            Feature::VariableName => a.variable_names.jaccard(&b.variable_names),
            Feature::Integer => a.integers.jaccard(&b.integers),
            Feature::Comparator => {
                let ca = a.comparators.map(|c| c.branch_class());
                let cb = b.comparators.map(|c| c.branch_class());
                ca.jaccard(&cb)
            }
        }
    }
}
