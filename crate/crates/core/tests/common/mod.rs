//! Independent oracles and generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use instmeter::cfg::{build_cfg, Cfg, EdgeKind, LoopId, Node, NodeId, RelationEdge, RelationGraph};
use instmeter::disasm::{BinFunction, CpiTable};
use instmeter::mapper::CandidateMapping;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

// ------------------------------------------------------------ random CFGs

struct Gen {
    rng: ChaCha8Rng,
    max_nodes: usize,
    n: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl Gen {
    fn node(&mut self) -> NodeId {
        self.n += 1;
        (self.n - 1) as NodeId
    }

    fn link(&mut self, from: &[NodeId], to: NodeId) {
        for &f in from {
            self.edges.insert((f, to));
        }
    }

    fn room(&self, need: usize) -> bool {
        self.n + need < self.max_nodes
    }

    fn seq(&mut self, preds: Vec<NodeId>, depth: u32) -> Vec<NodeId> {
        let len = self.rng.random_range(1..=3);
        let mut cur = preds;
        for _ in 0..len {
            cur = self.stmt(cur, depth);
        }
        cur
    }

    fn stmt(&mut self, preds: Vec<NodeId>, depth: u32) -> Vec<NodeId> {
        let pick = if depth >= 4 {
            0
        } else {
            self.rng.random_range(0..6)
        };
        match pick {
            1 | 2 if self.room(2) => {
                // while loop, optionally with a `continue` edge
                let h = self.node();
                self.link(&preds, h);
                let mut body_preds = vec![h];
                if self.rng.random_bool(0.3) && self.room(2) {
                    let c = self.node();
                    self.link(&[h], c);
                    self.link(&[c], h);
                    body_preds = vec![c];
                }
                let exits = self.seq(body_preds, depth + 1);
                self.link(&exits, h);
                vec![h]
            }
            3 if self.room(2) => {
                // bottom-tested loop
                let b = self.node();
                self.link(&preds, b);
                let exits = self.seq(vec![b], depth + 1);
                if exits == [b] || !self.room(1) {
                    // every exit jumps back: one loop per back edge
                    self.link(&exits, b);
                    return exits;
                }
                let l = self.node();
                self.link(&exits, l);
                self.link(&[l], b);
                vec![l]
            }
            4 if self.room(2) => {
                let c = self.node();
                self.link(&preds, c);
                let mut out = self.seq(vec![c], depth + 1);
                if self.rng.random_bool(0.5) && self.room(1) {
                    out.extend(self.seq(vec![c], depth + 1));
                } else {
                    out.push(c);
                }
                out.sort_unstable();
                out.dedup();
                out
            }
            _ if self.room(1) => {
                let b = self.node();
                self.link(&preds, b);
                vec![b]
            }
            _ => preds,
        }
    }
}

/// A random reducible CFG with at most `max_nodes` nodes, built from nested
/// sequences, conditionals, top- and bottom-tested loops and `continue`
/// edges. Node 0 is the entry.
pub fn random_reducible_cfg(seed: u64, max_nodes: usize) -> Cfg {
    assert!(max_nodes >= 2);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        max_nodes,
        n: 0,
        edges: BTreeSet::new(),
    };
    let entry = g.node();
    let exits = g.seq(vec![entry], 0);
    let exit = g.node();
    g.link(&exits, exit);
    let nodes = (0..g.n as NodeId)
        .map(|id| Node {
            id,
            text: vec![format!("n{id}")],
        })
        .collect();
    build_cfg(nodes, g.edges.into_iter().collect(), 0).expect("generated CFG is well formed")
}

// ------------------------------------------------------------ loop oracle

fn reach(cfg: &Cfg, from: NodeId, avoid: Option<NodeId>, reverse: bool) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    if Some(from) == avoid {
        return seen;
    }
    let mut q = VecDeque::from([from]);
    seen.insert(from);
    while let Some(x) = q.pop_front() {
        let next: Vec<NodeId> = cfg
            .edges()
            .iter()
            .filter_map(|&(a, b)| match reverse {
                false if a == x => Some(b),
                true if b == x => Some(a),
                _ => None,
            })
            .collect();
        for y in next {
            if Some(y) != avoid && seen.insert(y) {
                q.push_back(y);
            }
        }
    }
    seen
}

/// `a` dominates `b`: every path from the entry to `b` passes through `a`.
pub fn dominates(cfg: &Cfg, a: NodeId, b: NodeId) -> bool {
    let all = reach(cfg, cfg.entry(), None, false);
    if !all.contains(&b) {
        return false;
    }
    a == b || !reach(cfg, cfg.entry(), Some(a), false).contains(&b)
}

/// `(header, latch, body)` of every natural loop, by definition: one loop per
/// edge whose target dominates its source; the body is the header plus every
/// reachable node that reaches the latch without passing through the header.
pub fn oracle_loops(cfg: &Cfg) -> Vec<(NodeId, NodeId, BTreeSet<NodeId>)> {
    let live = reach(cfg, cfg.entry(), None, false);
    let mut out = Vec::new();
    for &(u, v) in cfg.edges() {
        if live.contains(&u) && dominates(cfg, v, u) {
            let mut body: BTreeSet<NodeId> = reach(cfg, u, Some(v), true)
                .into_iter()
                .filter(|x| live.contains(x))
                .collect();
            body.insert(v);
            out.push((v, u, body));
        }
    }
    out.sort_by_key(|(h, l, _)| (*h, *l));
    out
}

// ------------------------------------------------------------ relation graphs

/// A random valid relation graph: `n` distinct nonempty node sets over a
/// universe of 8 elements, related by containment and overlap.
pub fn random_relation_graph(seed: u64, n: usize) -> RelationGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets: Vec<u8> = Vec::new();
    while sets.len() < n {
        let s: u8 = rng.random_range(1..=255);
        if !sets.contains(&s) {
            sets.push(s);
        }
    }
    graph_of_sets(&sets)
}

pub fn graph_of_sets(sets: &[u8]) -> RelationGraph {
    let mut edges = Vec::new();
    for i in 0..sets.len() {
        for j in 0..sets.len() {
            if i == j {
                continue;
            }
            let (a, b) = (sets[i], sets[j]);
            let common = a & b;
            if common == a && a != b {
                edges.push(RelationEdge {
                    a: i as LoopId + 1,
                    b: j as LoopId + 1,
                    kind: EdgeKind::Subset,
                });
            } else if common != 0 && common != a && common != b && i < j {
                edges.push(RelationEdge {
                    a: i as LoopId + 1,
                    b: j as LoopId + 1,
                    kind: EdgeKind::Intersect,
                });
            }
        }
    }
    RelationGraph::from_parts((1..=sets.len() as LoopId).collect(), edges).unwrap()
}

/// The same graph with loop `i` renamed to `perm[i - 1]`.
pub fn permuted(g: &RelationGraph, perm: &[LoopId]) -> RelationGraph {
    let edges = g
        .edges
        .iter()
        .map(|e| RelationEdge {
            a: perm[e.a as usize - 1],
            b: perm[e.b as usize - 1],
            kind: e.kind,
        })
        .collect();
    RelationGraph::from_parts(
        g.loop_ids.iter().map(|&i| perm[i as usize - 1]).collect(),
        edges,
    )
    .unwrap()
}

pub fn random_permutation(seed: u64, n: usize) -> Vec<LoopId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut p: Vec<LoopId> = (1..=n as LoopId).collect();
    p.shuffle(&mut rng);
    p
}

/// Relation of the ordered pair `(x, y)`: 0 none, 1 `x ⊂ y`, 2 `y ⊂ x`,
/// 3 overlap. Read directly off the edge list.
fn edge_label(g: &RelationGraph, x: LoopId, y: LoopId) -> u8 {
    for e in &g.edges {
        match e.kind {
            EdgeKind::Subset if (e.a, e.b) == (x, y) => return 1,
            EdgeKind::Subset if (e.a, e.b) == (y, x) => return 2,
            EdgeKind::Intersect if (e.a, e.b) == (x, y) || (e.a, e.b) == (y, x) => return 3,
            _ => {}
        }
    }
    0
}

fn injections(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !cur.contains(&j) {
                cur.push(j);
                go(k, n, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(k, n, &mut Vec::new(), &mut out);
    out
}

/// Every injective, label-preserving map between the loops of `src` and
/// `bin` (the smaller side embedded into the larger), optionally restricted
/// to those sending `anchor.0` to `anchor.1`. Sorted.
pub fn brute_force_matches(
    src: &RelationGraph,
    bin: &RelationGraph,
    anchor: Option<(LoopId, LoopId)>,
) -> Vec<CandidateMapping> {
    let s = &src.loop_ids;
    let b = &bin.loop_ids;
    let mut out = Vec::new();
    let pairs_of = |inj: &[usize]| -> Vec<(LoopId, LoopId)> {
        if s.len() <= b.len() {
            inj.iter().enumerate().map(|(i, &j)| (s[i], b[j])).collect()
        } else {
            inj.iter().enumerate().map(|(j, &i)| (s[i], b[j])).collect()
        }
    };
    let (k, n) = if s.len() <= b.len() {
        (s.len(), b.len())
    } else {
        (b.len(), s.len())
    };
    for inj in injections(k, n) {
        let pairs = pairs_of(&inj);
        let ok = pairs.iter().all(|&(x, y)| {
            pairs
                .iter()
                .all(|&(x2, y2)| x == x2 || edge_label(src, x, x2) == edge_label(bin, y, y2))
        });
        let anchored = match anchor {
            Some((a, t)) => pairs.contains(&(a, t)),
            None => true,
        };
        if ok && anchored {
            out.push(pairs.into_iter().collect());
        }
    }
    out.sort();
    out
}

// ------------------------------------------------------------ trace simulation

#[derive(Debug, PartialEq)]
enum Step {
    Next,
    Jump(u64),
    Cond(u64),
    Exit,
}

fn branch_target(op: &str) -> Option<u64> {
    u64::from_str_radix(op.split_whitespace().next()?, 16).ok()
}

const CONDS: [&str; 14] = [
    "eq", "ne", "cs", "cc", "mi", "pl", "vs", "vc", "hi", "ls", "ge", "lt", "gt", "le",
];

fn classify(mnemonic: &str, operands: &[String]) -> Step {
    let m = mnemonic.split('.').next().unwrap_or(mnemonic);
    let last = operands.last().map(String::as_str).unwrap_or("");
    if m == "bl" || m == "blx" {
        return Step::Next;
    }
    if m == "bx" || (m.starts_with("pop") && operands.iter().any(|o| o.contains("pc"))) {
        return Step::Exit;
    }
    if m == "cbz" || m == "cbnz" {
        return Step::Cond(branch_target(last).expect("cbz target"));
    }
    if m == "b" {
        return Step::Jump(branch_target(last).expect("b target"));
    }
    if let Some(c) = m.strip_prefix('b') {
        if CONDS.contains(&c) {
            return Step::Cond(branch_target(last).expect("branch target"));
        }
    }
    Step::Next
}

/// Executes `func` instruction by instruction. A conditional branch listed
/// in `latch_trips` closes a bottom-tested loop: it is taken while its
/// iteration counter is below the trip count, then falls through and resets.
/// Other conditional branches fall through; unconditional ones are followed.
/// Returns total cycles with each instruction costed at `cpi.cycles`.
pub fn simulate(func: &BinFunction, latch_trips: &BTreeMap<u64, u64>, cpi: &CpiTable) -> u64 {
    let index: BTreeMap<u64, usize> = func
        .instructions
        .iter()
        .enumerate()
        .map(|(i, x)| (x.address, i))
        .collect();
    let mut counters: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total = 0.0f64;
    let mut pc = 0usize;
    let mut steps = 0u64;
    while pc < func.instructions.len() {
        steps += 1;
        assert!(steps < 200_000_000, "simulation did not terminate");
        let insn = &func.instructions[pc];
        total += cpi.cycles(&insn.mnemonic);
        match classify(&insn.mnemonic, &insn.operands) {
            Step::Next => pc += 1,
            Step::Exit => break,
            Step::Jump(t) => pc = index[&t],
            Step::Cond(t) => match latch_trips.get(&insn.address) {
                Some(&trip) => {
                    let c = counters.entry(insn.address).or_insert(0);
                    *c += 1;
                    if *c < trip {
                        pc = index[&t];
                    } else {
                        *c = 0;
                        pc += 1;
                    }
                }
                None => pc += 1,
            },
        }
    }
    total.round() as u64
}
