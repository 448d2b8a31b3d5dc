//! Label-preserving matching of relation graphs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cfg::{LoopId, PairLabel, RelationGraph};

/// An injective map from source loop ids to disassembly loop ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateMapping {
    pub pairs: BTreeMap<LoopId, LoopId>,
}

impl CandidateMapping {
    pub fn get(&self, src: LoopId) -> Option<LoopId> {
        self.pairs.get(&src).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LoopId, LoopId)> + '_ {
        self.pairs.iter().map(|(&s, &b)| (s, b))
    }
}

impl FromIterator<(LoopId, LoopId)> for CandidateMapping {
    fn from_iter<I: IntoIterator<Item = (LoopId, LoopId)>>(iter: I) -> Self {
        CandidateMapping {
            pairs: iter.into_iter().collect(),
        }
    }
}

/// True when `m` maps every pair of its source loops to a pair with the same
/// relation label, in both directions.
pub fn preserves_relations(m: &CandidateMapping, src: &RelationGraph, bin: &RelationGraph) -> bool {
    let sl = src.labels();
    let bl = bin.labels();
    let idx: Vec<(usize, usize)> = match m
        .iter()
        .map(|(s, b)| Some((src.index_of(s)?, bin.index_of(b)?)))
        .collect::<Option<Vec<_>>>()
    {
        Some(v) => v,
        None => return false,
    };
    idx.iter()
        .all(|&(i, j)| idx.iter().all(|&(k, l)| sl[i][k] == bl[j][l]))
}

fn signature(row: &[PairLabel]) -> [usize; 3] {
    let mut s = [0; 3];
    for l in row {
        match l {
            PairLabel::SubsetOf => s[0] += 1,
            PairLabel::SupersetOf => s[1] += 1,
            PairLabel::Intersect => s[2] += 1,
            PairLabel::None => {}
        }
    }
    s
}

struct Search<'a> {
    pl: &'a [Vec<PairLabel>],
    tl: &'a [Vec<PairLabel>],
    compatible: Vec<Vec<bool>>,
    map: Vec<usize>,
    used: Vec<bool>,
    out: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn extend(&mut self, i: usize) {
        if i == self.pl.len() {
            self.out.push(self.map.clone());
            return;
        }
        for j in 0..self.tl.len() {
            if self.used[j] || !self.compatible[i][j] {
                continue;
            }
            let ok = (0..i).all(|k| {
                let l = self.map[k];
                self.pl[i][k] == self.tl[j][l] && self.pl[k][i] == self.tl[l][j]
            });
            if !ok {
                continue;
            }
            self.map[i] = j;
            self.used[j] = true;
            self.extend(i + 1);
            self.used[j] = false;
        }
    }
}

/// Every injection of the pattern's nodes into the target's nodes whose
/// induced labels agree, as index vectors in lexicographic order.
fn embeddings(
    pattern: &[Vec<PairLabel>],
    target: &[Vec<PairLabel>],
    fixed: Option<(usize, usize)>,
) -> Vec<Vec<usize>> {
    let n = pattern.len();
    let m = target.len();
    if n > m {
        return Vec::new();
    }
    let ps: Vec<[usize; 3]> = pattern.iter().map(|r| signature(r)).collect();
    let ts: Vec<[usize; 3]> = target.iter().map(|r| signature(r)).collect();
    let mut compatible = vec![vec![false; m]; n];
    for i in 0..n {
        for j in 0..m {
            compatible[i][j] = if n == m {
                ps[i] == ts[j]
            } else {
                (0..3).all(|k| ps[i][k] <= ts[j][k])
            };
        }
    }
    if let Some((fi, fj)) = fixed {
        for (j, c) in compatible[fi].iter_mut().enumerate() {
            if j != fj {
                *c = false;
            }
        }
    }
    let mut s = Search {
        pl: pattern,
        tl: target,
        compatible,
        map: vec![0; n],
        used: vec![false; m],
        out: Vec::new(),
    };
    s.extend(0);
    s.out
}

/// All label-preserving matchings between two relation graphs, optionally
/// restricted to those sending source loop `anchor.0` to disassembly loop
/// `anchor.1`. When the graphs differ in size the smaller one is embedded
/// into the larger. Results are sorted.
pub fn enumerate_matches(
    src: &RelationGraph,
    bin: &RelationGraph,
    anchor: Option<(LoopId, LoopId)>,
) -> Vec<CandidateMapping> {
    let sl = src.labels();
    let bl = bin.labels();
    let anchor_idx = match anchor {
        Some((a, b)) => match (src.index_of(a), bin.index_of(b)) {
            (Some(i), Some(j)) => Some((i, j)),
            _ => return Vec::new(),
        },
        None => None,
    };
    let mut out: Vec<CandidateMapping> = if src.len() <= bin.len() {
        embeddings(&sl, &bl, anchor_idx)
            .into_iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(i, &j)| (src.loop_ids[i], bin.loop_ids[j]))
                    .collect()
            })
            .collect()
    } else {
        embeddings(&bl, &sl, anchor_idx.map(|(i, j)| (j, i)))
            .into_iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(j, &i)| (src.loop_ids[i], bin.loop_ids[j]))
                    .collect()
            })
            .collect()
    };
    out.sort();
    out
}
