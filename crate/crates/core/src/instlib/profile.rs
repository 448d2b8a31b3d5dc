//! Per-kernel loop trees with instruction histograms, and their cycle counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LibError;
use crate::cfg::{extract_loops, relation_graph, LoopId, NodeId};
use crate::disasm::{build_bin_cfg, normalize_mnemonic, BinFunction, CpiTable, Isa};
use crate::expr::{eval_expr, ParamEnv, TripExpr};
use crate::mapper::CandidateMapping;
use crate::srcfeat::SrcFunction;

/// One node of a kernel's loop tree. Histogram counts are occurrences per
/// single pass through the node, keyed by normalized mnemonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_loop: Option<LoopId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_loop: Option<LoopId>,
    pub trip: TripExpr,
    pub histogram: BTreeMap<String, u64>,
}

/// `nodes[0]` is the root (code outside every loop, trip 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub kernel_name: String,
    pub nodes: Vec<ProfileNode>,
}

impl KernelProfile {
    pub fn empty(kernel_name: impl Into<String>) -> KernelProfile {
        KernelProfile {
            kernel_name: kernel_name.into(),
            nodes: vec![ProfileNode {
                parent: None,
                src_loop: None,
                bin_loop: None,
                trip: TripExpr::one(),
                histogram: BTreeMap::new(),
            }],
        }
    }

    pub fn validate(&self) -> Result<(), LibError> {
        let bad = |msg: String| {
            Err(LibError::Format(format!(
                "kernel {}: {msg}",
                self.kernel_name
            )))
        };
        match self.nodes.first() {
            None => return bad("profile has no root node".into()),
            Some(r) if r.parent.is_some() => return bad("root node has a parent".into()),
            _ => {}
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            match n.parent {
                Some(p) if p < self.nodes.len() && p != i => {}
                _ => return bad(format!("node {i} has no valid parent")),
            }
            if self.depth(i).is_none() {
                return bad(format!("node {i} is on a parent cycle"));
            }
        }
        Ok(())
    }

    /// Path length to the root, or `None` on a cycle.
    fn depth(&self, mut i: usize) -> Option<usize> {
        let mut d = 0;
        while let Some(p) = self.nodes[i].parent {
            i = p;
            d += 1;
            if d > self.nodes.len() {
                return None;
            }
        }
        Some(d)
    }

    /// Every parameter name used by some trip expression.
    pub fn parameters(&self) -> BTreeSet<String> {
        self.nodes.iter().flat_map(|n| n.trip.names()).collect()
    }

    /// Total occurrences of each mnemonic over one kernel invocation.
    pub fn executed_counts(&self, env: &ParamEnv) -> Result<BTreeMap<String, u128>, LibError> {
        let trips: Vec<u128> = self
            .nodes
            .iter()
            .map(|n| {
                eval_expr(&n.trip, env)
                    .map(u128::from)
                    .map_err(|source| LibError::Expr {
                        kernel: self.kernel_name.clone(),
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut counts: BTreeMap<String, u128> = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let mut mult: u128 = trips[i];
            let mut j = i;
            while let Some(p) = self.nodes[j].parent {
                mult = mult.checked_mul(trips[p]).ok_or(LibError::Overflow)?;
                j = p;
            }
            for (m, &o) in &node.histogram {
                let add = (o as u128).checked_mul(mult).ok_or(LibError::Overflow)?;
                let slot = counts.entry(m.clone()).or_insert(0);
                *slot = slot.checked_add(add).ok_or(LibError::Overflow)?;
            }
        }
        Ok(counts)
    }
}

/// Attributes each binary instruction of `bin` to the innermost mapped loop
/// containing its block (else the root) and transfers trip expressions from
/// the source loops through `mapping`.
pub fn build_profile(
    mapping: &CandidateMapping,
    src: &SrcFunction,
    bin: &BinFunction,
    isa: &Isa,
) -> Result<KernelProfile, LibError> {
    let src_loops = extract_loops(&src.cfg);
    let bcfg = build_bin_cfg(bin, isa);
    let bin_loops = extract_loops(&bcfg.cfg);
    let bin_graph = relation_graph(&bin_loops);

    let covered: usize = bcfg.blocks.iter().map(|r| r.len()).sum();
    if covered != bin.instructions.len() {
        return Err(LibError::Attribution(format!(
            "<{}>: blocks cover {covered} of {} instructions",
            bin.symbol,
            bin.instructions.len()
        )));
    }

    struct Mapped<'a> {
        src: LoopId,
        bin: LoopId,
        body: &'a BTreeSet<NodeId>,
        trip: TripExpr,
    }
    let mut mapped = Vec::new();
    for (s, b) in mapping.iter() {
        let sl = src_loops
            .iter()
            .find(|l| l.id == s)
            .ok_or_else(|| LibError::Attribution(format!("source loop {s} does not exist")))?;
        let bl = bin_loops
            .iter()
            .find(|l| l.id == b)
            .ok_or_else(|| LibError::Attribution(format!("binary loop {b} does not exist")))?;
        if bin_graph.index_of(b).is_none() {
            log::warn!("binary loop {b} duplicates another loop body");
        }
        let trip = src
            .loop_trip_vars
            .get(&sl.header)
            .cloned()
            .ok_or(LibError::MissingTrip {
                kernel: src.name.clone(),
                src_loop: s,
            })?;
        mapped.push(Mapped {
            src: s,
            bin: b,
            body: &bl.body,
            trip,
        });
    }

    // innermost = smallest enclosing body, ties to the lower source id
    let innermost = |pred: &dyn Fn(&Mapped) -> bool| -> Option<usize> {
        mapped
            .iter()
            .enumerate()
            .filter(|(_, m)| pred(m))
            .min_by_key(|(_, m)| (m.body.len(), m.src))
            .map(|(k, _)| k + 1)
    };

    let mut nodes = vec![ProfileNode {
        parent: None,
        src_loop: None,
        bin_loop: None,
        trip: TripExpr::one(),
        histogram: BTreeMap::new(),
    }];
    for m in &mapped {
        let parent =
            innermost(&|o: &Mapped| o.body.len() > m.body.len() && m.body.is_subset(o.body))
                .unwrap_or(0);
        nodes.push(ProfileNode {
            parent: Some(parent),
            src_loop: Some(m.src),
            bin_loop: Some(m.bin),
            trip: m.trip.clone(),
            histogram: BTreeMap::new(),
        });
    }
    for (b, range) in bcfg.blocks.iter().enumerate() {
        let block = b as NodeId;
        let owner = innermost(&|o: &Mapped| o.body.contains(&block)).unwrap_or(0);
        let hist = &mut nodes[owner].histogram;
        for insn in &bin.instructions[range.clone()] {
            *hist.entry(normalize_mnemonic(&insn.mnemonic)).or_insert(0) += 1;
        }
    }
    Ok(KernelProfile {
        kernel_name: src.name.clone(),
        nodes,
    })
}

/// Cycles of one kernel invocation: each node's histogram times its CPI
/// costs, times the product of trip counts from the root down to the node.
pub fn kernel_cycles(
    profile: &KernelProfile,
    env: &ParamEnv,
    cpi: &CpiTable,
) -> Result<u64, LibError> {
    let counts = profile.executed_counts(env)?;
    let mut whole: u128 = 0;
    let mut fractional = 0.0f64;
    for (m, n) in counts {
        let c = cpi.cycles(&m);
        if c.fract() == 0.0 && c >= 0.0 {
            let add = n.checked_mul(c as u128).ok_or(LibError::Overflow)?;
            whole = whole.checked_add(add).ok_or(LibError::Overflow)?;
        } else {
            fractional += n as f64 * c;
        }
    }
    let total = whole
        .checked_add(fractional.round() as u128)
        .ok_or(LibError::Overflow)?;
    u64::try_from(total).map_err(|_| LibError::Overflow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disasm::parse_disasm;
    use crate::expr::parse_expr;
    use crate::srcfeat::parse_src_cfg;

    fn node(parent: Option<usize>, trip: &str, hist: &[(&str, u64)]) -> ProfileNode {
        ProfileNode {
            parent,
            src_loop: None,
            bin_loop: None,
            trip: parse_expr(trip).unwrap(),
            histogram: hist.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn cpi() -> CpiTable {
        CpiTable::new("test", 1.0)
            .with("mov", 1.0)
            .with("add", 1.0)
            .with("ldr", 2.0)
            .with("cmp", 1.0)
            .with("mla", 1.0)
    }

    #[test]
    fn empty_profile_costs_nothing() {
        let p = KernelProfile::empty("k");
        assert_eq!(kernel_cycles(&p, &ParamEnv::new(), &cpi()).unwrap(), 0);
    }

    #[test]
    fn single_loop_hand_case() {
        let p = KernelProfile {
            kernel_name: "k".into(),
            nodes: vec![
                node(None, "1", &[("mov", 1)]),
                node(Some(0), "n", &[("add", 2), ("ldr", 1)]),
            ],
        };
        let env = ParamEnv::new().with("n", 10);
        assert_eq!(kernel_cycles(&p, &env, &cpi()).unwrap(), 41);
    }

    #[test]
    fn nested_hand_case() {
        let p = KernelProfile {
            kernel_name: "k".into(),
            nodes: vec![
                node(None, "1", &[]),
                node(Some(0), "3", &[("cmp", 1)]),
                node(Some(1), "4", &[("mla", 1)]),
            ],
        };
        assert_eq!(kernel_cycles(&p, &ParamEnv::new(), &cpi()).unwrap(), 15);
    }

    #[test]
    fn fractional_cpi_rounds_once() {
        let p = KernelProfile {
            kernel_name: "k".into(),
            nodes: vec![node(None, "1", &[]), node(Some(0), "3", &[("vmul", 1)])],
        };
        let t = CpiTable::new("t", 1.0).with("vmul", 0.5);
        assert_eq!(kernel_cycles(&p, &ParamEnv::new(), &t).unwrap(), 2);
    }

    #[test]
    fn unbound_parameter() {
        let p = KernelProfile {
            kernel_name: "k".into(),
            nodes: vec![node(None, "1", &[]), node(Some(0), "n", &[("add", 1)])],
        };
        assert!(matches!(
            kernel_cycles(&p, &ParamEnv::new(), &cpi()),
            Err(LibError::Expr { .. })
        ));
    }

    #[test]
    fn validate_rejects_parent_cycle() {
        let p = KernelProfile {
            kernel_name: "k".into(),
            nodes: vec![
                node(None, "1", &[]),
                node(Some(2), "1", &[]),
                node(Some(1), "1", &[]),
            ],
        };
        assert!(p.validate().is_err());
    }

    const LISTING: &str = concat!(
        "00000000 <k>:\n",
        " 0:\tmov\tr3, #0\n",
        " 2:\tadd\tr0, r1\n",
        " 4:\tldr\tr2, [r0]\n",
        " 6:\tadd\tr3, #1\n",
        " 8:\tcmp\tr3, r4\n",
        " a:\tblt.n\t2 <k+0x2>\n",
        " c:\tbx\tlr\n",
    );

    fn src(trips: &str) -> SrcFunction {
        parse_src_cfg(&format!(
            r#"{{"name":"k","entry":0,
                "nodes":[{{"id":0,"text":["i = 0;"]}},{{"id":1,"text":["x += *p;","i++;","i < n"]}},{{"id":2}}],
                "edges":[{{"from":0,"to":1}},{{"from":1,"to":1}},{{"from":1,"to":2}}]
                {trips}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn attribution_from_listing() {
        let f = parse_disasm(LISTING).unwrap().functions.remove(0);
        let m: CandidateMapping = [(1, 1)].into_iter().collect();
        let p =
            build_profile(&m, &src(r#","trip_exprs":{"1":"n"}"#), &f, &Isa::cortex_m()).unwrap();
        assert_eq!(p.nodes.len(), 2);
        let root: Vec<_> = p.nodes[0]
            .histogram
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        assert_eq!(root, vec![("bx", 1), ("mov", 1)]);
        let body: Vec<_> = p.nodes[1]
            .histogram
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        assert_eq!(body, vec![("add", 2), ("blt", 1), ("cmp", 1), ("ldr", 1)]);
        assert_eq!(p.nodes[1].trip.to_string(), "n");
        assert_eq!(p.nodes[1].parent, Some(0));
    }

    #[test]
    fn missing_trip_names_loop() {
        let f = parse_disasm(LISTING).unwrap().functions.remove(0);
        let m: CandidateMapping = [(1, 1)].into_iter().collect();
        let err = build_profile(&m, &src(""), &f, &Isa::cortex_m()).unwrap_err();
        assert!(
            matches!(err, LibError::MissingTrip { src_loop: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn sibling_loops_are_children_of_root() {
        let listing = concat!(
            "00000000 <k>:\n",
            " 0:\tadds\tr0, #1\n",
            " 2:\tcmp\tr0, r1\n",
            " 4:\tblt.n\t0 <k>\n",
            " 6:\tsubs\tr2, #1\n",
            " 8:\tbne.n\t6 <k+0x6>\n",
            " a:\tbx\tlr\n",
        );
        let f = parse_disasm(listing).unwrap().functions.remove(0);
        let s = parse_src_cfg(
            r#"{"name":"k","entry":0,"nodes":[{"id":0},{"id":1},{"id":2}],
                "edges":[{"from":0,"to":0},{"from":0,"to":1},{"from":1,"to":1},{"from":1,"to":2}],
                "trip_exprs":{"0":"a","1":"b"}}"#,
        )
        .unwrap();
        let m: CandidateMapping = [(1, 1), (2, 2)].into_iter().collect();
        let p = build_profile(&m, &s, &f, &Isa::cortex_m()).unwrap();
        assert_eq!(p.nodes[1].parent, Some(0));
        assert_eq!(p.nodes[2].parent, Some(0));
        let k1: BTreeSet<_> = p.nodes[1].histogram.keys().collect();
        let k2: BTreeSet<_> = p.nodes[2].histogram.keys().collect();
        assert!(k1.is_disjoint(&k2));
        let env = ParamEnv::new().with("a", 2).with("b", 5);
        // 2*(adds+cmp+blt) + 5*(subs+bne) + bx
        assert_eq!(
            kernel_cycles(&p, &env, &CpiTable::new("t", 1.0)).unwrap(),
            6 + 10 + 1
        );
    }
}
