//! Mutual-ranking fusion of the Euclidean and hyperbolic ranking lists.
//!
//! Each passage's rank (zero-based) in a list contributes a reciprocal-rank
//! score `1/(rank+1)`; passages present in both lists earn a consistency
//! bonus `1/(rank_E + rank_H + 2)`; the hybrid score is
//! `(s_E + s_H)·(1 + b)`. Fusion operates on the full rankings; truncation
//! happens only at final output.

use crate::retrieval::RankingList;

/// Fusion components for one passage.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HybridScore {
    pub passage_id: String,
    pub s_euclidean: f64,
    pub s_hyperbolic: f64,
    pub bonus: f64,
    pub hybrid: f64,
}

/// Computes the hybrid score from zero-based ranks; `None` marks absence
/// from that list.
pub fn hybrid_from_ranks(rank_e: Option<usize>, rank_h: Option<usize>) -> (f64, f64, f64, f64) {
    let s_e = rank_e.map(|r| 1.0 / (r as f64 + 1.0)).unwrap_or(0.0);
    let s_h = rank_h.map(|r| 1.0 / (r as f64 + 1.0)).unwrap_or(0.0);
    let bonus = match (rank_e, rank_h) {
        (Some(re), Some(rh)) => 1.0 / (re as f64 + rh as f64 + 2.0),
        _ => 0.0,
    };
    let hybrid = (s_e + s_h) * (1.0 + bonus);
    (s_e, s_h, bonus, hybrid)
}

/// Fuses the two rankings; output is sorted by hybrid score descending,
/// ties broken by passage id ascending.
pub fn fuse(r_e: &RankingList, r_h: &RankingList) -> Vec<HybridScore> {
    let mut ids: Vec<&str> = r_e
        .items()
        .iter()
        .chain(r_h.items())
        .map(|r| r.passage_id.as_str())
        .collect();
    ids.sort_unstable();
    ids.dedup();

    let mut out: Vec<HybridScore> = ids
        .into_iter()
        .map(|id| {
            let (s_euclidean, s_hyperbolic, bonus, hybrid) =
                hybrid_from_ranks(r_e.rank_of(id), r_h.rank_of(id));
            HybridScore {
                passage_id: id.to_string(),
                s_euclidean,
                s_hyperbolic,
                bonus,
                hybrid,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.hybrid
            .partial_cmp(&a.hybrid)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    out
}

/// Views fused scores as a plain ranking list.
pub fn to_ranking(scores: &[HybridScore]) -> RankingList {
    RankingList::from_scores(
        scores
            .iter()
            .map(|s| (s.passage_id.clone(), s.hybrid))
            .collect(),
    )
}
