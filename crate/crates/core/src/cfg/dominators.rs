//! Immediate dominators over the reachable part of a [`Cfg`], computed with
//! the Cooper/Harvey/Kennedy iterative scheme on reverse postorder.

use super::Cfg;

const UNDEF: usize = usize::MAX;

pub(crate) struct Dominators {
    /// Dense index -> immediate dominator (dense). Entry maps to itself,
    /// unreachable nodes to `UNDEF`.
    idom: Vec<usize>,
    /// Dense index -> position in reverse postorder.
    rpo_pos: Vec<usize>,
    rpo: Vec<usize>,
}

impl Dominators {
    pub(crate) fn compute(cfg: &Cfg) -> Self {
        let n = cfg.len();
        let entry = cfg.dense(cfg.entry());

        // iterative DFS postorder
        let mut post = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut stack = vec![(entry, 0usize)];
        visited[entry] = true;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let succs = cfg.succ_dense(node);
            if *next < succs.len() {
                let s = succs[*next];
                *next += 1;
                if !visited[s] {
                    visited[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(node);
                stack.pop();
            }
        }
        let rpo: Vec<usize> = post.into_iter().rev().collect();
        let mut rpo_pos = vec![UNDEF; n];
        for (i, &b) in rpo.iter().enumerate() {
            rpo_pos[b] = i;
        }

        let mut idom = vec![UNDEF; n];
        idom[entry] = entry;
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new_idom = UNDEF;
                for &p in cfg.pred_dense(b) {
                    if idom[p] == UNDEF {
                        continue;
                    }
                    new_idom = if new_idom == UNDEF {
                        p
                    } else {
                        intersect(&idom, &rpo_pos, p, new_idom)
                    };
                }
                if new_idom != idom[b] {
                    idom[b] = new_idom;
                    changed = true;
                }
            }
        }

        Dominators { idom, rpo_pos, rpo }
    }

    pub(crate) fn is_reachable(&self, b: usize) -> bool {
        self.idom[b] != UNDEF
    }

    /// Does `a` dominate `b`? Both given as dense indices.
    pub(crate) fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.is_reachable(a) || !self.is_reachable(b) {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            let up = self.idom[cur];
            if up == cur {
                return false;
            }
            cur = up;
        }
    }

    /// Reachable nodes in reverse postorder.
    pub(crate) fn rpo(&self) -> &[usize] {
        &self.rpo
    }

    #[allow(dead_code)]
    pub(crate) fn rpo_position(&self, b: usize) -> Option<usize> {
        (self.rpo_pos[b] != UNDEF).then_some(self.rpo_pos[b])
    }
}

fn intersect(idom: &[usize], rpo_pos: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while rpo_pos[a] > rpo_pos[b] {
            a = idom[a];
        }
        while rpo_pos[b] > rpo_pos[a] {
            b = idom[b];
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{build_cfg, Node};

    fn cfg(n: u32, edges: &[(u32, u32)]) -> Cfg {
        let nodes = (0..n).map(|id| Node { id, text: vec![] }).collect();
        build_cfg(nodes, edges.to_vec(), 0).unwrap()
    }

    #[test]
    fn diamond() {
        let g = cfg(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let d = Dominators::compute(&g);
        assert!(d.dominates(0, 3));
        assert!(!d.dominates(1, 3));
        assert!(!d.dominates(2, 3));
        assert!(d.dominates(3, 3));
    }

    #[test]
    fn loop_header_dominates_latch() {
        let g = cfg(4, &[(0, 1), (1, 2), (2, 1), (2, 3)]);
        let d = Dominators::compute(&g);
        assert!(d.dominates(1, 2));
        assert!(!d.dominates(2, 1));
    }

    #[test]
    fn unreachable_dominates_nothing() {
        let g = cfg(3, &[(0, 1)]);
        let d = Dominators::compute(&g);
        assert!(!d.is_reachable(2));
        assert!(!d.dominates(2, 2));
        assert_eq!(d.rpo().len(), 2);
    }
}
