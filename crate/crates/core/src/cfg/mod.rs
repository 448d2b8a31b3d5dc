//! Control-flow graphs, loop extraction and loop relations shared by the
//! source and disassembly sides.

mod dominators;
mod graph;
mod loops;
mod relation;

pub use graph::{build_cfg, Cfg, CfgDoc, EdgeDoc, Node, NodeId};
pub use loops::{extract_loops, BackEdge, Loop, LoopId};
pub use relation::{
    loop_relation, relation_graph, EdgeKind, LoopRelation, PairLabel, RelationEdge, RelationGraph,
    RelationKind,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CfgError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge ({from}, {to}) references a node that does not exist")]
    DanglingEdge { from: NodeId, to: NodeId },
    #[error("entry node {0} does not exist")]
    MissingEntry(NodeId),
    #[error("malformed CFG document: {0}")]
    Schema(String),
    #[error("invalid relation graph: {0}")]
    InvalidRelationGraph(String),
}
