//! Loop-level mapping between a source function and its disassembly:
//! structural matching of relation graphs, then semantic ranking of the
//! surviving candidates.

mod semantic;
mod structural;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use semantic::{
    random_weights, semantic_score, similarity_matrix, MappingDiagnostics, MappingResult,
    PairDiagnostic, SimilarityMatrix, WeightVector, MAX_BATCHES, TRIALS_PER_BATCH,
};
pub use structural::{enumerate_matches, preserves_relations, CandidateMapping};

use crate::cfg::{extract_loops, relation_graph, Loop, LoopId, RelationGraph};
use crate::disasm::{build_bin_cfg, instruction_features, BinCfg, BinFunction, Isa};
use crate::features::{Feature, FeatureBundle};
use crate::srcfeat::{extract_src_semantics, SrcFunction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("relation graph is empty")]
    EmptyGraph,
    #[error("no structural match between {src} source loops and {bin} binary loops")]
    NoIsomorphism { src: usize, bin: usize },
    #[error("loop count mismatch: source has {src} loops, binary has {bin}")]
    LoopCountMismatch { src: usize, bin: usize },
    #[error("no candidate mappings to score")]
    NoCandidates,
    #[error("no similarity matrix for feature {0:?}")]
    MissingMatrix(Feature),
}

/// All structural candidates. The first source loop is anchored to the first
/// binary loop; if no matching honors that anchor, the anchor is dropped.
pub fn structural_match(
    src: &RelationGraph,
    bin: &RelationGraph,
) -> Result<Vec<CandidateMapping>, MapError> {
    if src.is_empty() || bin.is_empty() {
        return Err(MapError::EmptyGraph);
    }
    let anchor = (src.loop_ids[0], bin.loop_ids[0]);
    let mut found = enumerate_matches(src, bin, Some(anchor));
    if found.is_empty() {
        log::debug!(
            "anchor {} -> {} admits no matching; searching unanchored",
            anchor.0,
            anchor.1
        );
        found = enumerate_matches(src, bin, None);
    }
    if found.is_empty() {
        return Err(MapError::NoIsomorphism {
            src: src.len(),
            bin: bin.len(),
        });
    }
    Ok(found)
}

/// Loops, relation graph and per-loop features of one side of a mapping.
#[derive(Debug, Clone)]
pub struct LoopSide {
    pub loops: Vec<Loop>,
    pub graph: RelationGraph,
    pub features: BTreeMap<LoopId, FeatureBundle>,
}

impl LoopSide {
    pub fn loop_by_id(&self, id: LoopId) -> Option<&Loop> {
        self.loops.iter().find(|l| l.id == id)
    }
}

pub fn source_side(src: &SrcFunction) -> LoopSide {
    let loops = extract_loops(&src.cfg);
    let graph = relation_graph(&loops);
    let features = graph
        .loop_ids
        .iter()
        .map(|&id| {
            let lp = loops
                .iter()
                .find(|l| l.id == id)
                .expect("representative loop");
            (id, extract_src_semantics(lp, src))
        })
        .collect();
    LoopSide {
        loops,
        graph,
        features,
    }
}

pub fn binary_side(bin: &BinFunction, bcfg: &BinCfg, isa: &Isa) -> LoopSide {
    let loops = extract_loops(&bcfg.cfg);
    let graph = relation_graph(&loops);
    let features = graph
        .loop_ids
        .iter()
        .map(|&id| {
            let lp = loops
                .iter()
                .find(|l| l.id == id)
                .expect("representative loop");
            let insns: Vec<_> = bcfg
                .instructions_in(lp.body.iter())
                .map(|i| &bin.instructions[i])
                .collect();
            (id, instruction_features(&insns, isa))
        })
        .collect();
    LoopSide {
        loops,
        graph,
        features,
    }
}

/// Maps the loops of `src` onto the loops of `bin`.
pub fn map_function(
    src: &SrcFunction,
    bin: &BinFunction,
    isa: &Isa,
    seed: u64,
) -> Result<MappingResult, MapError> {
    let bcfg = build_bin_cfg(bin, isa);
    map_sides(&source_side(src), &binary_side(bin, &bcfg, isa), seed)
}

pub fn map_sides(s: &LoopSide, b: &LoopSide, seed: u64) -> Result<MappingResult, MapError> {
    if s.graph.len() != b.graph.len() {
        return Err(MapError::LoopCountMismatch {
            src: s.graph.len(),
            bin: b.graph.len(),
        });
    }
    if s.graph.is_empty() {
        return Ok(MappingResult {
            best: CandidateMapping::default(),
            score: 0.0,
            ambiguous: false,
            trials_used: 0,
            diagnostics: MappingDiagnostics {
                pairs: Vec::new(),
                candidate_scores: Vec::new(),
                batches: 0,
            },
        });
    }
    let candidates = structural_match(&s.graph, &b.graph)?;
    let matrices: Vec<SimilarityMatrix> = Feature::ALL
        .iter()
        .map(|&f| similarity_matrix(f, &s.features, &b.features))
        .collect();
    semantic_score(&candidates, &matrices, seed)
}

/// On-disk form of a mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDoc {
    pub function: String,
    pub pairs: Vec<MappedPair>,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedPair {
    pub src: LoopId,
    pub bin: LoopId,
    pub score: f64,
}

impl MappingDoc {
    pub fn new(function: impl Into<String>, result: &MappingResult) -> MappingDoc {
        MappingDoc {
            function: function.into(),
            pairs: result
                .diagnostics
                .pairs
                .iter()
                .map(|p| MappedPair {
                    src: p.src,
                    bin: p.bin,
                    score: p.score,
                })
                .collect(),
            ambiguous: result.ambiguous,
        }
    }

    pub fn mapping(&self) -> CandidateMapping {
        self.pairs.iter().map(|p| (p.src, p.bin)).collect()
    }
}
