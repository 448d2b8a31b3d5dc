//! Validated control-flow graph and its JSON interchange document.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::CfgError;

/// Identifier of a CFG node (a basic block on the disassembly side, a
/// statement group on the source side).
pub type NodeId = u32;

/// A node record: id plus opaque text payload (statement lines or raw
/// instruction lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default)]
    pub text: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: NodeId,
    pub to: NodeId,
}

/// Wire form of a CFG: `{"entry", "nodes": [{"id","text"}], "edges": [{"from","to"}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgDoc {
    pub entry: NodeId,
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
}

/// A validated control-flow graph.
///
/// Node ids are unique, every edge endpoint exists and the entry node is
/// present. Nodes that cannot be reached from the entry are kept but listed
/// in [`Cfg::unreachable`]; loop analysis ignores them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    entry: NodeId,
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    index: BTreeMap<NodeId, usize>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    unreachable: BTreeSet<NodeId>,
}

/// Builds and validates a CFG.
pub fn build_cfg(
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    entry: NodeId,
) -> Result<Cfg, CfgError> {
    let mut index = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(CfgError::DuplicateNode(n.id));
        }
    }
    if !index.contains_key(&entry) {
        return Err(CfgError::MissingEntry(entry));
    }
    let mut succ = vec![Vec::new(); nodes.len()];
    let mut pred = vec![Vec::new(); nodes.len()];
    for &(from, to) in &edges {
        let (Some(&f), Some(&t)) = (index.get(&from), index.get(&to)) else {
            return Err(CfgError::DanglingEdge { from, to });
        };
        // parallel edges collapse; they carry no extra control flow
        if !succ[f].contains(&t) {
            succ[f].push(t);
            pred[t].push(f);
        }
    }

    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![index[&entry]];
    seen[index[&entry]] = true;
    while let Some(n) = stack.pop() {
        for &s in &succ[n] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    let unreachable: BTreeSet<NodeId> = nodes
        .iter()
        .zip(&seen)
        .filter(|(_, &s)| !s)
        .map(|(n, _)| n.id)
        .collect();
    if !unreachable.is_empty() {
        log::warn!("CFG has {} unreachable node(s)", unreachable.len());
    }

    Ok(Cfg {
        entry,
        nodes,
        edges,
        index,
        succ,
        pred,
        unreachable,
    })
}

impl Cfg {
    pub fn entry(&self) -> NodeId {
        self.entry
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes not reachable from the entry.
    pub fn unreachable(&self) -> &BTreeSet<NodeId> {
        &self.unreachable
    }

    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let i = self.index.get(&id).copied();
        i.into_iter()
            .flat_map(move |i| self.succ[i].iter().map(move |&s| self.nodes[s].id))
    }

    pub fn predecessors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let i = self.index.get(&id).copied();
        i.into_iter()
            .flat_map(move |i| self.pred[i].iter().map(move |&p| self.nodes[p].id))
    }

    // dense-index accessors used by the analyses
    pub(crate) fn dense(&self, id: NodeId) -> usize {
        self.index[&id]
    }

    pub(crate) fn succ_dense(&self, i: usize) -> &[usize] {
        &self.succ[i]
    }

    pub(crate) fn pred_dense(&self, i: usize) -> &[usize] {
        &self.pred[i]
    }

    pub(crate) fn id_of(&self, i: usize) -> NodeId {
        self.nodes[i].id
    }

    pub fn to_doc(&self) -> CfgDoc {
        CfgDoc {
            entry: self.entry,
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(from, to)| EdgeDoc { from, to })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("CFG serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Cfg, CfgError> {
        let doc: CfgDoc =
            serde_json::from_str(text).map_err(|e| CfgError::Schema(e.to_string()))?;
        Cfg::try_from(doc)
    }
}

impl TryFrom<CfgDoc> for Cfg {
    type Error = CfgError;

    fn try_from(doc: CfgDoc) -> Result<Self, Self::Error> {
        build_cfg(
            doc.nodes,
            doc.edges.into_iter().map(|e| (e.from, e.to)).collect(),
            doc.entry,
        )
    }
}
