//! Pairwise loop relations and the relation graph used for structural
//! matching.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CfgError, Loop, LoopId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Subset,
    Superset,
    Intersect,
    Equal,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopRelation {
    pub kind: RelationKind,
    pub a: LoopId,
    pub b: LoopId,
}

/// Classifies the relation of `a` to `b` by their node sets.
pub fn loop_relation(a: &Loop, b: &Loop) -> LoopRelation {
    let common = a.body.intersection(&b.body).count();
    let kind = if common == 0 {
        RelationKind::Disjoint
    } else if common == a.body.len() && common == b.body.len() {
        RelationKind::Equal
    } else if common == a.body.len() {
        RelationKind::Subset
    } else if common == b.body.len() {
        RelationKind::Superset
    } else {
        RelationKind::Intersect
    };
    LoopRelation {
        kind,
        a: a.id,
        b: b.id,
    }
}

/// Edge kinds kept in a relation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// `a ⊂ b`; directed.
    Subset,
    /// Partial overlap; symmetric, stored once with `a < b`.
    Intersect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationEdge {
    pub a: LoopId,
    pub b: LoopId,
    pub kind: EdgeKind,
}

/// Label of the ordered pair `(i, j)` in a relation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    None,
    /// `i ⊂ j`
    SubsetOf,
    /// `j ⊂ i`
    SupersetOf,
    Intersect,
}

/// Loops as nodes, Subset/Intersect relations as edges. Loops with identical
/// bodies collapse into one node named by the smallest member id; the other
/// members are listed under `merged`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationGraph {
    pub loop_ids: Vec<LoopId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub merged: BTreeMap<LoopId, Vec<LoopId>>,
    pub edges: Vec<RelationEdge>,
}

pub fn relation_graph(loops: &[Loop]) -> RelationGraph {
    let mut sorted: Vec<&Loop> = loops.iter().collect();
    sorted.sort_by_key(|l| l.id);

    // representative index for each loop
    let mut reps: Vec<&Loop> = Vec::new();
    let mut merged: BTreeMap<LoopId, Vec<LoopId>> = BTreeMap::new();
    for lp in sorted {
        match reps.iter().find(|r| r.body == lp.body) {
            Some(r) => merged.entry(r.id).or_default().push(lp.id),
            None => reps.push(lp),
        }
    }

    let mut edges = Vec::new();
    for (i, a) in reps.iter().enumerate() {
        for b in reps.iter().skip(i + 1) {
            let rel = loop_relation(a, b);
            match rel.kind {
                RelationKind::Subset => edges.push(RelationEdge {
                    a: a.id,
                    b: b.id,
                    kind: EdgeKind::Subset,
                }),
                RelationKind::Superset => edges.push(RelationEdge {
                    a: b.id,
                    b: a.id,
                    kind: EdgeKind::Subset,
                }),
                RelationKind::Intersect => edges.push(RelationEdge {
                    a: a.id,
                    b: b.id,
                    kind: EdgeKind::Intersect,
                }),
                RelationKind::Equal | RelationKind::Disjoint => {}
            }
        }
    }
    edges.sort();

    RelationGraph {
        loop_ids: reps.iter().map(|l| l.id).collect(),
        merged,
        edges,
    }
}

impl RelationGraph {
    /// Assembles a graph from explicit parts. Intersect edges are normalized
    /// to `a < b`; Subset edges must form a strict partial order.
    pub fn from_parts(
        mut loop_ids: Vec<LoopId>,
        edges: Vec<RelationEdge>,
    ) -> Result<RelationGraph, CfgError> {
        loop_ids.sort_unstable();
        loop_ids.dedup();
        let mut norm = Vec::with_capacity(edges.len());
        for mut e in edges {
            if loop_ids.binary_search(&e.a).is_err() || loop_ids.binary_search(&e.b).is_err() {
                return Err(CfgError::InvalidRelationGraph(format!(
                    "edge ({}, {}) references an unknown loop",
                    e.a, e.b
                )));
            }
            if e.a == e.b {
                return Err(CfgError::InvalidRelationGraph(format!(
                    "self edge on loop {}",
                    e.a
                )));
            }
            if e.kind == EdgeKind::Intersect && e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
            norm.push(e);
        }
        norm.sort();
        norm.dedup();
        let g = RelationGraph {
            loop_ids,
            merged: BTreeMap::new(),
            edges: norm,
        };
        let mut pairs = std::collections::BTreeSet::new();
        for e in &g.edges {
            if !pairs.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(CfgError::InvalidRelationGraph(format!(
                    "loops {} and {} carry more than one relation",
                    e.a, e.b
                )));
            }
        }
        let labels = g.labels();
        if has_subset_cycle(&labels) {
            return Err(CfgError::InvalidRelationGraph(
                "subset edges contain a cycle".into(),
            ));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.loop_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loop_ids.is_empty()
    }

    pub fn index_of(&self, id: LoopId) -> Option<usize> {
        self.loop_ids.iter().position(|&l| l == id)
    }

    /// Dense label matrix: `labels()[i][j]` relates `loop_ids[i]` to `loop_ids[j]`.
    pub fn labels(&self) -> Vec<Vec<PairLabel>> {
        let n = self.len();
        let mut m = vec![vec![PairLabel::None; n]; n];
        for e in &self.edges {
            let (Some(i), Some(j)) = (self.index_of(e.a), self.index_of(e.b)) else {
                continue;
            };
            match e.kind {
                EdgeKind::Subset => {
                    m[i][j] = PairLabel::SubsetOf;
                    m[j][i] = PairLabel::SupersetOf;
                }
                EdgeKind::Intersect => {
                    m[i][j] = PairLabel::Intersect;
                    m[j][i] = PairLabel::Intersect;
                }
            }
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("relation graph serialization cannot fail")
    }
}

fn has_subset_cycle(labels: &[Vec<PairLabel>]) -> bool {
    let n = labels.len();
    // 0 = unvisited, 1 = on path, 2 = done
    fn visit(u: usize, labels: &[Vec<PairLabel>], state: &mut [u8]) -> bool {
        state[u] = 1;
        for v in 0..labels.len() {
            if labels[u][v] == PairLabel::SubsetOf
                && (state[v] == 1 || (state[v] == 0 && visit(v, labels, state)))
            {
                return true;
            }
        }
        state[u] = 2;
        false
    }
    let mut state = vec![0u8; n];
    (0..n).any(|u| state[u] == 0 && visit(u, labels, &mut state))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::cfg::BackEdge;

    fn lp(id: LoopId, body: &[u32]) -> Loop {
        let body: BTreeSet<u32> = body.iter().copied().collect();
        let header = *body.iter().next().unwrap();
        Loop {
            id,
            header,
            back_edge: BackEdge {
                from: *body.iter().last().unwrap(),
                to: header,
            },
            body,
            irreducible: false,
        }
    }

    #[test]
    fn relation_kinds() {
        let k = |a: &[u32], b: &[u32]| loop_relation(&lp(1, a), &lp(2, b)).kind;
        assert_eq!(k(&[2, 3], &[1, 2, 3, 4]), RelationKind::Subset);
        assert_eq!(k(&[1, 2, 3, 4], &[2, 3]), RelationKind::Superset);
        assert_eq!(k(&[1, 2], &[2, 3]), RelationKind::Intersect);
        assert_eq!(k(&[1], &[5, 6]), RelationKind::Disjoint);
        assert_eq!(k(&[4, 5], &[4, 5]), RelationKind::Equal);
    }

    #[test]
    fn single_loop_graph() {
        let g = relation_graph(&[lp(1, &[1, 2])]);
        assert_eq!(g.loop_ids, vec![1]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn equal_loops_merge() {
        let g = relation_graph(&[lp(1, &[3, 4]), lp(2, &[3, 4]), lp(3, &[1, 2, 3, 4])]);
        assert_eq!(g.loop_ids, vec![1, 3]);
        assert_eq!(g.merged[&1], vec![2]);
        assert_eq!(
            g.edges,
            vec![RelationEdge {
                a: 1,
                b: 3,
                kind: EdgeKind::Subset
            }]
        );
    }

    #[test]
    fn edges_from_mixed_relations() {
        // 1 ∩ 2, 2 ⊂ 3, 1 ∩ 3, 4 disjoint from everything
        let loops = [
            lp(1, &[1, 10]),
            lp(2, &[1, 11]),
            lp(3, &[1, 11, 12]),
            lp(4, &[20]),
        ];
        let g = relation_graph(&loops);
        assert_eq!(
            g.edges,
            vec![
                RelationEdge {
                    a: 1,
                    b: 2,
                    kind: EdgeKind::Intersect
                },
                RelationEdge {
                    a: 1,
                    b: 3,
                    kind: EdgeKind::Intersect
                },
                RelationEdge {
                    a: 2,
                    b: 3,
                    kind: EdgeKind::Subset
                },
            ]
        );
        let labels = g.labels();
        assert_eq!(labels[1][2], PairLabel::SubsetOf);
        assert_eq!(labels[2][1], PairLabel::SupersetOf);
        assert_eq!(labels[0][3], PairLabel::None);
    }

    #[test]
    fn from_parts_rejects_subset_cycle() {
        let e = |a, b| RelationEdge {
            a,
            b,
            kind: EdgeKind::Subset,
        };
        let err = RelationGraph::from_parts(vec![1, 2, 3], vec![e(1, 2), e(2, 3), e(3, 1)]);
        assert!(err.is_err());
    }

    #[test]
    fn from_parts_normalizes_intersect() {
        let g = RelationGraph::from_parts(
            vec![2, 1],
            vec![RelationEdge {
                a: 2,
                b: 1,
                kind: EdgeKind::Intersect,
            }],
        )
        .unwrap();
        assert_eq!(g.loop_ids, vec![1, 2]);
        assert_eq!(g.edges[0].a, 1);
    }
}
