//! Basic blocks and the CFG of one disassembled function.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use super::isa::{Flow, Isa};
use super::BinFunction;
use crate::cfg::{build_cfg, Cfg, Node, NodeId};

/// CFG of a binary function. Node `i` is the `i`-th basic block in address
/// order and covers `blocks[i]` (indices into the instruction list).
#[derive(Debug, Clone)]
pub struct BinCfg {
    pub cfg: Cfg,
    pub blocks: Vec<Range<usize>>,
    /// Branches whose target lies outside the function, as
    /// `(branch address, target address)`; these edges are dropped.
    pub external_edges: Vec<(u64, u64)>,
}

impl BinCfg {
    /// The block containing instruction index `insn`.
    pub fn block_of(&self, insn: usize) -> Option<NodeId> {
        self.blocks
            .iter()
            .position(|r| r.contains(&insn))
            .map(|b| b as NodeId)
    }

    /// Instruction indices covered by the given CFG nodes, in order.
    pub fn instructions_in<'a>(
        &'a self,
        nodes: impl IntoIterator<Item = &'a NodeId>,
    ) -> impl Iterator<Item = usize> + 'a {
        let set: BTreeSet<NodeId> = nodes.into_iter().copied().collect();
        set.into_iter()
            .flat_map(move |n| self.blocks[n as usize].clone())
    }
}

/// Splits `func` into basic blocks (leaders: first instruction, in-function
/// branch targets, instructions following a branch or exit) and connects
/// them. Calls do not end blocks.
pub fn build_bin_cfg(func: &BinFunction, isa: &Isa) -> BinCfg {
    let insns = &func.instructions;
    let by_addr: BTreeMap<u64, usize> = insns
        .iter()
        .enumerate()
        .map(|(i, x)| (x.address, i))
        .collect();
    let flows: Vec<Flow> = insns.iter().map(|i| isa.flow(i)).collect();

    let mut leaders = BTreeSet::from([0usize]);
    for (i, flow) in flows.iter().enumerate() {
        match flow {
            Flow::Conditional(t) | Flow::Jump(t) => {
                if let Some(&ti) = by_addr.get(t) {
                    leaders.insert(ti);
                }
                leaders.insert(i + 1);
            }
            Flow::Exit => {
                leaders.insert(i + 1);
            }
            Flow::Next | Flow::Call => {}
        }
    }
    leaders.retain(|&l| l < insns.len());
    let starts: Vec<usize> = leaders.into_iter().collect();
    let blocks: Vec<Range<usize>> = starts
        .iter()
        .enumerate()
        .map(|(b, &s)| s..starts.get(b + 1).copied().unwrap_or(insns.len()))
        .collect();
    let block_at: BTreeMap<usize, NodeId> = starts
        .iter()
        .enumerate()
        .map(|(b, &s)| (s, b as NodeId))
        .collect();

    let mut edges = Vec::new();
    let mut external = Vec::new();
    for (b, range) in blocks.iter().enumerate() {
        let last = range.end - 1;
        let next_block = (b + 1 < blocks.len()).then_some(b as NodeId + 1);
        let mut target_edge = |t: u64| match by_addr.get(&t) {
            Some(ti) => edges.push((b as NodeId, block_at[ti])),
            None => {
                log::warn!(
                    "<{}>: branch at {:#x} targets {:#x} outside the function; edge dropped",
                    func.symbol,
                    insns[last].address,
                    t
                );
                external.push((insns[last].address, t));
            }
        };
        match flows[last] {
            Flow::Conditional(t) => {
                target_edge(t);
                if let Some(n) = next_block {
                    edges.push((b as NodeId, n));
                }
            }
            Flow::Jump(t) => target_edge(t),
            Flow::Exit => {}
            Flow::Next | Flow::Call => {
                if let Some(n) = next_block {
                    edges.push((b as NodeId, n));
                }
            }
        }
    }

    let nodes = blocks
        .iter()
        .enumerate()
        .map(|(b, r)| Node {
            id: b as NodeId,
            text: insns[r.clone()].iter().map(|i| i.raw.clone()).collect(),
        })
        .collect();
    let cfg = build_cfg(nodes, edges, 0).expect("block graph is well formed by construction");
    BinCfg {
        cfg,
        blocks,
        external_edges: external,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{extract_loops, relation_graph, EdgeKind};
    use crate::disasm::parse_disasm;

    fn func(text: &str) -> BinFunction {
        parse_disasm(text).unwrap().functions.remove(0)
    }

    #[test]
    fn straight_line() {
        let f = func("00000000 <f>:\n 0:\tmovs\tr0, #0\n 2:\tadds\tr0, #1\n 4:\tadds\tr0, #2\n");
        let b = build_bin_cfg(&f, &Isa::cortex_m());
        assert_eq!(b.cfg.len(), 1);
        assert!(b.cfg.edges().is_empty());
    }

    #[test]
    fn backward_branch_forms_loop() {
        let f = func(concat!(
            "00000000 <f>:\n",
            " 0:\tmovs\tr0, #0\n",
            " 2:\tadds\tr0, #1\n",
            " 4:\tcmp\tr0, r1\n",
            " 6:\tblt.n\t2 <f+0x2>\n",
            " 8:\tbx\tlr\n",
        ));
        let b = build_bin_cfg(&f, &Isa::cortex_m());
        assert_eq!(b.blocks, vec![0..1, 1..4, 4..5]);
        let loops = extract_loops(&b.cfg);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].header, 1);
        assert_eq!(loops[0].body.len(), 1);
    }

    #[test]
    fn nested_backward_branches() {
        let f = func(concat!(
            "00000000 <f>:\n",
            " 0:\tmovs\tr2, #0\n",
            " 2:\tmovs\tr3, #0\n",
            " 4:\tadds\tr3, #1\n",
            " 6:\tcmp\tr3, r1\n",
            " 8:\tblt.n\t4 <f+0x4>\n",
            " a:\tadds\tr2, #1\n",
            " c:\tcmp\tr2, r0\n",
            " e:\tblt.n\t2 <f+0x2>\n",
            "10:\tbx\tlr\n",
        ));
        let b = build_bin_cfg(&f, &Isa::cortex_m());
        let loops = extract_loops(&b.cfg);
        assert_eq!(loops.len(), 2);
        let g = relation_graph(&loops);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::Subset);
        // inner loop (header at 0x4) is the subset
        let inner = loops.iter().find(|l| l.body.len() == 1).unwrap();
        assert_eq!(g.edges[0].a, inner.id);
    }

    #[test]
    fn blocks_partition_instructions() {
        let f = func(concat!(
            "00000000 <f>:\n",
            " 0:\tcbz\tr0, a <f+0xa>\n",
            " 2:\tbl\t100 <g>\n",
            " 6:\tb.n\t0 <f>\n",
            " 8:\tnop\n",
            " a:\tbx\tlr\n",
        ));
        let b = build_bin_cfg(&f, &Isa::cortex_m());
        let covered: Vec<usize> = b.blocks.iter().flat_map(|r| r.clone()).collect();
        assert_eq!(covered, (0..5).collect::<Vec<_>>());
        // call does not split: block 0 = [cbz], block 1 = [bl, b.n]
        assert_eq!(b.blocks[1], 1..3);
        assert!(b.cfg.unreachable().contains(&2));
    }

    #[test]
    fn external_target_dropped() {
        let f = func("00000000 <f>:\n 0:\tb.w\t8000 <other>\n");
        let b = build_bin_cfg(&f, &Isa::cortex_m());
        assert_eq!(b.external_edges, vec![(0, 0x8000)]);
        assert!(b.cfg.edges().is_empty());
    }
}
