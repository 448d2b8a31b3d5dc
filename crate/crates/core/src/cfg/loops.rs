//! Loop extraction.
//!
//! Each dominator back edge `(latch, header)` yields one natural loop: the
//! header plus every node that reaches the latch without passing through
//! the header. Cycles that survive removal of all back edges come from
//! irreducible regions; each such strongly-connected component is reported
//! as a single loop flagged `irreducible`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::dominators::Dominators;
use super::{Cfg, NodeId};

pub type LoopId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BackEdge {
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loop {
    /// 1-based, assigned in (header, back-edge source) order.
    pub id: LoopId,
    pub header: NodeId,
    pub body: BTreeSet<NodeId>,
    pub back_edge: BackEdge,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub irreducible: bool,
}

impl Loop {
    pub fn contains(&self, node: NodeId) -> bool {
        self.body.contains(&node)
    }
}

/// Extracts all loops of `cfg`, ordered by `(header, back_edge.from)` and
/// numbered from 1.
pub fn extract_loops(cfg: &Cfg) -> Vec<Loop> {
    let dom = Dominators::compute(cfg);
    let n = cfg.len();

    let mut found: Vec<(usize, usize, Vec<usize>, bool)> = Vec::new();
    let mut is_back = vec![Vec::<usize>::new(); n];

    for &u in dom.rpo() {
        for &v in cfg.succ_dense(u) {
            if dom.dominates(v, u) {
                is_back[u].push(v);
                found.push((v, u, natural_body(cfg, &dom, v, u), false));
            }
        }
    }

    // cycles left after removing back edges mark irreducible regions
    for scc in forward_sccs(cfg, &dom, &is_back) {
        let members: BTreeSet<usize> = scc.iter().copied().collect();
        let is_entry = |b: usize| {
            b == cfg.dense(cfg.entry())
                || cfg
                    .pred_dense(b)
                    .iter()
                    .any(|p| dom.is_reachable(*p) && !members.contains(p))
        };
        let header = scc
            .iter()
            .copied()
            .filter(|&b| is_entry(b))
            .min_by_key(|&b| cfg.id_of(b))
            .expect("reachable SCC has an entry node");
        let latch = cfg
            .pred_dense(header)
            .iter()
            .copied()
            .filter(|p| members.contains(p))
            .min_by_key(|&p| cfg.id_of(p))
            .expect("nontrivial SCC member has an internal predecessor");
        log::warn!(
            "irreducible region at node {} ({} nodes)",
            cfg.id_of(header),
            scc.len()
        );
        found.push((header, latch, scc, true));
    }

    let mut loops: Vec<Loop> = found
        .into_iter()
        .map(|(h, l, body, irreducible)| Loop {
            id: 0,
            header: cfg.id_of(h),
            body: body.into_iter().map(|b| cfg.id_of(b)).collect(),
            back_edge: BackEdge {
                from: cfg.id_of(l),
                to: cfg.id_of(h),
            },
            irreducible,
        })
        .collect();
    loops.sort_by_key(|lp| (lp.header, lp.back_edge.from, lp.irreducible));
    for (i, lp) in loops.iter_mut().enumerate() {
        lp.id = i as LoopId + 1;
    }
    loops
}

fn natural_body(cfg: &Cfg, dom: &Dominators, header: usize, latch: usize) -> Vec<usize> {
    let mut body = BTreeSet::from([header]);
    let mut work = Vec::new();
    if body.insert(latch) {
        work.push(latch);
    }
    while let Some(b) = work.pop() {
        for &p in cfg.pred_dense(b) {
            if dom.is_reachable(p) && body.insert(p) {
                work.push(p);
            }
        }
    }
    body.into_iter().collect()
}

/// Nontrivial SCCs of the reachable subgraph with back edges removed
/// (Tarjan, iterative).
fn forward_sccs(cfg: &Cfg, dom: &Dominators, back: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = cfg.len();
    let succ = |u: usize| -> Vec<usize> {
        cfg.succ_dense(u)
            .iter()
            .copied()
            .filter(|v| !back[u].contains(v) && dom.is_reachable(*v))
            .collect()
    };

    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut out = Vec::new();

    for &root in dom.rpo() {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, Vec<usize>, usize)> = vec![(root, succ(root), 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some((v, succs, i)) = call.last_mut() {
            let v = *v;
            if *i < succs.len() {
                let w = succs[*i];
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    let ws = succ(w);
                    call.push((w, ws, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some((parent, _, _)) = call.last() {
                    low[*parent] = low[*parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    if comp.len() > 1 {
                        comp.sort_unstable();
                        out.push(comp);
                    }
                }
            }
        }
    }
    out
}
