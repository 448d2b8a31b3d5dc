//! Similarity matrices and random-scalarization ranking of candidates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::structural::CandidateMapping;
use super::MapError;
use crate::cfg::LoopId;
use crate::features::{Feature, FeatureBundle};

/// Weight vectors drawn per batch.
pub const TRIALS_PER_BATCH: u64 = 100;
/// Batches drawn while the top score stays tied.
pub const MAX_BATCHES: u64 = 50;
const TIE_TOLERANCE: f64 = 1e-9;

/// `scores[i][j]` is the similarity of source loop `src_ids[i]` and
/// disassembly loop `bin_ids[j]` under one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub feature: Feature,
    pub src_ids: Vec<LoopId>,
    pub bin_ids: Vec<LoopId>,
    pub scores: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, src: LoopId, bin: LoopId) -> f64 {
        let i = self.src_ids.iter().position(|&x| x == src);
        let j = self.bin_ids.iter().position(|&x| x == bin);
        match (i, j) {
            (Some(i), Some(j)) => self.scores[i][j],
            _ => 0.0,
        }
    }

    pub fn scaled(&self, k: f64) -> SimilarityMatrix {
        let mut m = self.clone();
        for row in &mut m.scores {
            for v in row {
                *v *= k;
            }
        }
        m
    }
}

pub fn similarity_matrix(
    feature: Feature,
    src: &BTreeMap<LoopId, FeatureBundle>,
    bin: &BTreeMap<LoopId, FeatureBundle>,
) -> SimilarityMatrix {
    SimilarityMatrix {
        feature,
        src_ids: src.keys().copied().collect(),
        bin_ids: bin.keys().copied().collect(),
        scores: src
            .values()
            .map(|a| bin.values().map(|b| feature.similarity(a, b)).collect())
            .collect(),
    }
}

/// One point of the 4-simplex, indexed like [`Feature::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: [f64; 4],
    pub seed: u64,
    pub trial: u64,
}

/// Uniform draw from the simplex (normalized unit exponentials). The
/// generator is seeded with `seed` and positioned on stream `trial`.
pub fn random_weights(seed: u64, trial: u64) -> WeightVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut w = [0.0; 4];
    for x in &mut w {
        *x = rng.sample::<f64, _>(Exp1);
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    WeightVector { w, seed, trial }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub src: LoopId,
    pub bin: LoopId,
    /// Raw similarity per feature, indexed like [`Feature::ALL`].
    pub similarity: [f64; 4],
    /// This pair's share of the candidate score in the deciding batch.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDiagnostics {
    pub pairs: Vec<PairDiagnostic>,
    /// Score of each input candidate in the deciding batch.
    pub candidate_scores: Vec<f64>,
    pub batches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub best: CandidateMapping,
    pub score: f64,
    pub ambiguous: bool,
    pub trials_used: u64,
    pub diagnostics: MappingDiagnostics,
}

fn tied(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Ranks `candidates` by `Σ_r Σ_(i,j) Σ_f s_f(i,j) · w^r_f` over a batch of
/// random weight vectors, redrawing while the best score is tied.
pub fn semantic_score(
    candidates: &[CandidateMapping],
    matrices: &[SimilarityMatrix],
    seed: u64,
) -> Result<MappingResult, MapError> {
    if candidates.is_empty() {
        return Err(MapError::NoCandidates);
    }
    let by_feature: Vec<&SimilarityMatrix> = Feature::ALL
        .iter()
        .map(|f| {
            matrices
                .iter()
                .find(|m| m.feature == *f)
                .ok_or(MapError::MissingMatrix(*f))
        })
        .collect::<Result<_, _>>()?;
    let sims =
        |s: LoopId, b: LoopId| -> [f64; 4] { std::array::from_fn(|f| by_feature[f].get(s, b)) };

    let mut batch = 0;
    loop {
        let mut scores = vec![0.0; candidates.len()];
        let mut weight_sums = [0.0; 4];
        for r in 0..TRIALS_PER_BATCH {
            let w = random_weights(seed, batch * TRIALS_PER_BATCH + r).w;
            for (c, cand) in candidates.iter().enumerate() {
                for (s, b) in cand.iter() {
                    let sv = sims(s, b);
                    scores[c] += (0..4).map(|f| sv[f] * w[f]).sum::<f64>();
                }
            }
            for f in 0..4 {
                weight_sums[f] += w[f];
            }
        }
        batch += 1;

        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let leaders: Vec<usize> = (0..candidates.len())
            .filter(|&c| tied(scores[c], top))
            .collect();
        if leaders.len() == 1 || batch >= MAX_BATCHES {
            let ambiguous = leaders.len() > 1;
            let best_idx = *leaders
                .iter()
                .min_by(|&&a, &&b| candidates[a].cmp(&candidates[b]))
                .expect("at least one leader");
            if ambiguous {
                log::warn!(
                    "{} candidates remain tied after {} batches; taking the lexicographically smallest",
                    leaders.len(),
                    batch
                );
            }
            let best = candidates[best_idx].clone();
            let pairs = best
                .iter()
                .map(|(s, b)| {
                    let similarity = sims(s, b);
                    let score = (0..4).map(|f| similarity[f] * weight_sums[f]).sum();
                    PairDiagnostic {
                        src: s,
                        bin: b,
                        similarity,
                        score,
                    }
                })
                .collect();
            return Ok(MappingResult {
                best,
                score: scores[best_idx],
                ambiguous,
                trials_used: batch * TRIALS_PER_BATCH,
                diagnostics: MappingDiagnostics {
                    pairs,
                    candidate_scores: scores,
                    batches: batch,
                },
            });
        }
    }
}
