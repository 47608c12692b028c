//! Dual-space retrieval: per-space relevance signals, seed construction, and
//! Personalized PageRank over the passage–entity graph.
//!
//! The Euclidean branch scores facts and passages by cosine similarity; the
//! hyperbolic branch scores them by negative geodesic distance between
//! projected points. Each branch builds its own seed distribution and runs
//! PPR independently; the two never share state within a query.

use std::collections::BTreeMap;

use crate::corpus::{Fact, Passage};
use crate::embed::{cosine_similarity, EmbeddingCache, Encoder};
use crate::error::{EngineError, NodeKind, Result};
use crate::geometry::geodesic_distance;
use crate::graph::{HeterogeneousGraph, NormalizedAdjacency};
use crate::projection::ProjectionParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Euclidean,
    Hyperbolic,
}

#[derive(Debug, Clone)]
pub struct RetrievalConfig {
    /// Top-k facts used as initial evidence.
    pub k_facts: usize,
    /// PPR restart probability.
    pub damping: f64,
    /// L1 convergence tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed mass split between entity signals and passage priors.
    pub lambda_seed: f64,
    /// Passage priors keep only this many passages per branch.
    pub prior_top_n: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k_facts: 5,
            damping: 0.5,
            tol: 1e-8,
            max_iter: 1000,
            lambda_seed: 0.5,
            prior_top_n: 50,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(EngineError::InvalidParameter(format!(
                "damping must lie in (0,1), got {}",
                self.damping
            )));
        }
        if self.tol <= 0.0 {
            return Err(EngineError::InvalidParameter("tol must be > 0".into()));
        }
        if self.k_facts == 0 {
            return Err(EngineError::InvalidParameter("k_facts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_seed) {
            return Err(EngineError::InvalidParameter(
                "lambda_seed must lie in [0,1]".into(),
            ));
        }
        Ok(())
    }
}

/// One scored passage in a ranking.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RankedPassage {
    pub passage_id: String,
    pub score: f64,
}

/// Strictly ordered ranking: score descending, ties broken by id ascending.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct RankingList {
    items: Vec<RankedPassage>,
}

impl RankingList {
    pub fn from_scores(pairs: Vec<(String, f64)>) -> Self {
        let mut items: Vec<RankedPassage> = pairs
            .into_iter()
            .map(|(passage_id, score)| RankedPassage { passage_id, score })
            .collect();
        items.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.passage_id.cmp(&b.passage_id))
        });
        items.dedup_by(|a, b| a.passage_id == b.passage_id);
        RankingList { items }
    }

    pub fn items(&self) -> &[RankedPassage] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Zero-based rank of a passage, if present.
    pub fn rank_of(&self, passage_id: &str) -> Option<usize> {
        self.items.iter().position(|r| r.passage_id == passage_id)
    }

    pub fn truncated(&self, k: usize) -> RankingList {
        RankingList {
            items: self.items.iter().take(k).cloned().collect(),
        }
    }
}

/// Restart distribution over graph nodes. Always sums to 1; provenance is
/// recorded as the mass each signal family contributed.
#[derive(Debug, Clone)]
pub struct SeedDistribution {
    pub weights: Vec<f64>,
    /// Total mass assigned through fact-derived entity signals.
    pub entity_mass: f64,
    /// Total mass assigned through passage priors.
    pub passage_mass: f64,
    /// Set when both signal families were empty and the seed fell back to
    /// uniform-over-passages.
    pub uniform_fallback: bool,
}

/// PPR output; `converged` is false when `max_iter` was exhausted.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Precomputed hyperbolic coordinates for every cached node embedding.
#[derive(Debug, Clone, Default)]
pub struct HyperbolicStore {
    points: BTreeMap<(NodeKind, String), Vec<f64>>,
}

impl HyperbolicStore {
    /// Projects every embedding in the cache through the trained parameters.
    pub fn project_all(cache: &EmbeddingCache, params: &ProjectionParams) -> Result<Self> {
        let mut points = BTreeMap::new();
        for ((kind, id), vec) in cache.iter() {
            let p = params.project_node(vec, *kind)?;
            points.insert((*kind, id.clone()), p.coords().to_vec());
        }
        Ok(HyperbolicStore { points })
    }

    pub fn get(&self, kind: NodeKind, id: &str) -> Option<&[f64]> {
        self.points
            .get(&(kind, id.to_string()))
            .map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Query representation in both spaces.
pub struct QueryVectors {
    pub euclidean: Vec<f64>,
    /// Ball coordinates; present only when projection params are available.
    pub hyperbolic: Option<Vec<f64>>,
}

/// Read-only retrieval engine over a finalized index. Cheap to share across
/// threads; queries never mutate it.
pub struct Retriever<'a> {
    pub graph: &'a HeterogeneousGraph,
    pub adjacency: &'a NormalizedAdjacency,
    pub passages: &'a [Passage],
    pub facts: &'a [Fact],
    pub embeddings: &'a EmbeddingCache,
    pub params: Option<&'a ProjectionParams>,
    pub hyper: Option<HyperbolicStore>,
    pub cfg: RetrievalConfig,
}

/// Both branch rankings for one query.
#[derive(Debug, Clone)]
pub struct BranchRankings {
    pub euclidean: RankingList,
    pub hyperbolic: Option<RankingList>,
}

impl<'a> Retriever<'a> {
    pub fn new(
        graph: &'a HeterogeneousGraph,
        adjacency: &'a NormalizedAdjacency,
        passages: &'a [Passage],
        facts: &'a [Fact],
        embeddings: &'a EmbeddingCache,
        params: Option<&'a ProjectionParams>,
        cfg: RetrievalConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let hyper = match params {
            Some(p) => Some(HyperbolicStore::project_all(embeddings, p)?),
            None => None,
        };
        Ok(Retriever {
            graph,
            adjacency,
            passages,
            facts,
            embeddings,
            params,
            hyper,
            cfg,
        })
    }

    pub fn has_hyperbolic(&self) -> bool {
        self.params.is_some()
    }

    /// Encodes the query; the hyperbolic point is projected with the passage
    /// head, queries being sentence-like.
    pub fn query_vectors(&self, question: &str, encoder: &dyn Encoder) -> Result<QueryVectors> {
        let euclidean = encoder.encode(question)?;
        if euclidean.len() != self.embeddings.dim() {
            return Err(EngineError::DimensionMismatch {
                expected: self.embeddings.dim(),
                got: euclidean.len(),
            });
        }
        let hyperbolic = match self.params {
            Some(p) => Some(
                p.project_node(&euclidean, NodeKind::Passage)?
                    .coords()
                    .to_vec(),
            ),
            None => None,
        };
        Ok(QueryVectors {
            euclidean,
            hyperbolic,
        })
    }

    fn similarity(&self, q: &QueryVectors, kind: NodeKind, id: &str, space: Space) -> Result<f64> {
        match space {
            Space::Euclidean => {
                let z = self
                    .embeddings
                    .get(kind, id)
                    .ok_or_else(|| EngineError::MissingEmbedding {
                        kind,
                        id: id.to_string(),
                    })?;
                cosine_similarity(&q.euclidean, z)
            }
            Space::Hyperbolic => {
                let store = self.hyper.as_ref().ok_or_else(|| {
                    EngineError::Config("hyperbolic branch requires trained projection".into())
                })?;
                let params = self.params.expect("hyper store implies params");
                let zq = q.hyperbolic.as_ref().ok_or_else(|| {
                    EngineError::Config("query has no hyperbolic projection".into())
                })?;
                let zh = store
                    .get(kind, id)
                    .ok_or_else(|| EngineError::MissingEmbedding {
                        kind,
                        id: id.to_string(),
                    })?;
                let c = params.curvature();
                let pq = crate::geometry::HyperbolicPoint::new(zq.clone(), c)?;
                let pn = crate::geometry::HyperbolicPoint::new(zh.to_vec(), c)?;
                Ok(-geodesic_distance(&pq, &pn)?)
            }
        }
    }

    /// Fact-level signals: top-k facts by per-space similarity, their scores
    /// propagated to both endpoint entities, normalized by each entity's
    /// passage degree.
    ///
    /// Score handling differs per space: Euclidean cosines are clamped at
    /// zero; hyperbolic scores (negative distances) are shifted by the
    /// per-query maximum distance within the selection so the closest fact
    /// carries the most mass and all masses stay non-negative.
    pub fn fact_signals(
        &self,
        q: &QueryVectors,
        space: Space,
    ) -> Result<BTreeMap<String, f64>> {
        let mut mass: BTreeMap<String, f64> = BTreeMap::new();
        if self.facts.is_empty() {
            return Ok(mass);
        }
        let mut scored: Vec<(f64, &Fact)> = Vec::with_capacity(self.facts.len());
        for f in self.facts {
            scored.push((self.similarity(q, NodeKind::Fact, &f.fact_id, space)?, f));
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.fact_id.cmp(&b.1.fact_id))
        });
        scored.truncate(self.cfg.k_facts);

        let shift = match space {
            Space::Euclidean => 0.0,
            Space::Hyperbolic => scored
                .iter()
                .map(|(s, _)| *s)
                .fold(f64::INFINITY, f64::min),
        };
        for (score, fact) in &scored {
            let s = match space {
                Space::Euclidean => score.max(0.0),
                Space::Hyperbolic => score - shift,
            };
            if s <= 0.0 {
                continue;
            }
            for endpoint in [&fact.subject, &fact.object] {
                let degree = self.graph.passage_degree(endpoint).max(1) as f64;
                *mass.entry(endpoint.clone()).or_insert(0.0) += s / degree;
            }
        }
        Ok(mass)
    }

    /// Passage-level priors: per-space similarity over all passages, made
    /// non-negative (clamp for cosine, max-distance shift for hyperbolic),
    /// truncated to the top `prior_top_n`.
    pub fn passage_priors(
        &self,
        q: &QueryVectors,
        space: Space,
    ) -> Result<BTreeMap<String, f64>> {
        let mut scored: Vec<(f64, &Passage)> = Vec::with_capacity(self.passages.len());
        for p in self.passages {
            scored.push((
                self.similarity(q, NodeKind::Passage, &p.passage_id, space)?,
                p,
            ));
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.passage_id.cmp(&b.1.passage_id))
        });
        scored.truncate(self.cfg.prior_top_n);
        let shift = match space {
            Space::Euclidean => 0.0,
            Space::Hyperbolic => scored
                .iter()
                .map(|(s, _)| *s)
                .fold(f64::INFINITY, f64::min),
        };
        let mut priors = BTreeMap::new();
        for (score, p) in &scored {
            let s = match space {
                Space::Euclidean => score.max(0.0),
                Space::Hyperbolic => score - shift,
            };
            if s > 0.0 {
                priors.insert(p.passage_id.clone(), s);
            }
        }
        Ok(priors)
    }

    /// Merges entity mass and passage priors into the restart distribution:
    /// entities normalized to `lambda_seed`, passages to the remainder; a
    /// single non-empty side takes all mass; two empty sides fall back to
    /// uniform over passages.
    pub fn build_seed(
        &self,
        entity_mass: &BTreeMap<String, f64>,
        passage_mass: &BTreeMap<String, f64>,
    ) -> SeedDistribution {
        let n = self.graph.num_nodes();
        let mut weights = vec![0.0; n];
        let entity_total: f64 = entity_mass.values().sum();
        let passage_total: f64 = passage_mass.values().sum();

        let (lambda_entity, lambda_passage) = match (entity_total > 0.0, passage_total > 0.0) {
            (true, true) => (self.cfg.lambda_seed, 1.0 - self.cfg.lambda_seed),
            (true, false) => (1.0, 0.0),
            (false, true) => (0.0, 1.0),
            (false, false) => (0.0, 0.0),
        };

        if lambda_entity == 0.0 && lambda_passage == 0.0 {
            // Uniform fallback over passages keeps PPR well-defined.
            let np = self.graph.num_passages().max(1);
            for i in 0..self.graph.num_passages() {
                weights[i] = 1.0 / np as f64;
            }
            return SeedDistribution {
                weights,
                entity_mass: 0.0,
                passage_mass: 1.0,
                uniform_fallback: true,
            };
        }

        if lambda_entity > 0.0 {
            for (id, w) in entity_mass {
                if let Some(idx) = self.graph.node_index(NodeKind::Entity, id) {
                    weights[idx] += lambda_entity * w / entity_total;
                }
            }
        }
        if lambda_passage > 0.0 {
            for (id, w) in passage_mass {
                if let Some(idx) = self.graph.node_index(NodeKind::Passage, id) {
                    weights[idx] += lambda_passage * w / passage_total;
                }
            }
        }
        // Guard against mass dropped on ids missing from the graph.
        let total: f64 = weights.iter().sum();
        if total > 0.0 && (total - 1.0).abs() > 1e-12 {
            for w in &mut weights {
                *w /= total;
            }
        }
        SeedDistribution {
            weights,
            entity_mass: lambda_entity,
            passage_mass: lambda_passage,
            uniform_fallback: false,
        }
    }

    /// Runs one branch end to end: signals → seed → PPR → passage ranking.
    pub fn branch(&self, q: &QueryVectors, space: Space) -> Result<RankingList> {
        let entity_mass = self.fact_signals(q, space)?;
        let passage_mass = self.passage_priors(q, space)?;
        let seed = self.build_seed(&entity_mass, &passage_mass);
        let pi = ppr(
            &seed,
            self.adjacency,
            self.cfg.damping,
            self.cfg.tol,
            self.cfg.max_iter,
        )?;
        Ok(rank_passages(&pi, self.graph))
    }

    /// Full dual-space retrieval. The hyperbolic branch is skipped (with
    /// `None`) when no projection parameters are loaded.
    pub fn retrieve(&self, question: &str, encoder: &dyn Encoder) -> Result<BranchRankings> {
        let q = self.query_vectors(question, encoder)?;
        let euclidean = self.branch(&q, Space::Euclidean)?;
        let hyperbolic = if self.has_hyperbolic() {
            Some(self.branch(&q, Space::Hyperbolic)?)
        } else {
            None
        };
        Ok(BranchRankings {
            euclidean,
            hyperbolic,
        })
    }
}

/// Personalized PageRank: iterates `π ← damping·s + (1-damping)·πW` from
/// `π₀ = s`; mass lost to zero rows is fed back through the seed each
/// iteration, so `Σπ = 1` is preserved.
pub fn ppr(
    seed: &SeedDistribution,
    adjacency: &NormalizedAdjacency,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryDistribution> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(EngineError::InvalidParameter(format!(
            "damping must lie in (0,1), got {damping}"
        )));
    }
    if tol <= 0.0 {
        return Err(EngineError::InvalidParameter("tol must be > 0".into()));
    }
    let n = adjacency.n();
    if seed.weights.len() != n {
        return Err(EngineError::DimensionMismatch {
            expected: n,
            got: seed.weights.len(),
        });
    }
    let s = &seed.weights;
    let mut pi = s.clone();
    let mut propagated = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    let step = |pi: &[f64], propagated: &mut [f64]| -> Vec<f64> {
        adjacency.left_multiply(pi, propagated);
        let kept: f64 = propagated.iter().sum();
        let pi_total: f64 = pi.iter().sum();
        let lost = (pi_total - kept).max(0.0);
        (0..n)
            .map(|j| damping * s[j] + (1.0 - damping) * (propagated[j] + lost * s[j]))
            .collect()
    };

    for iter in 0..max_iter {
        let next = step(&pi, &mut propagated);
        let change: f64 = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .sum();
        pi = next;
        iterations = iter + 1;
        if change < tol {
            converged = true;
            break;
        }
    }

    // Residual of the returned iterate under the same operator.
    let applied = step(&pi, &mut propagated);
    let residual: f64 = applied
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .sum();

    Ok(StationaryDistribution {
        probs: pi,
        residual,
        converged,
        iterations,
    })
}

/// Restricts a stationary distribution to passage nodes with positive mass
/// and orders them (score descending, id ascending).
pub fn rank_passages(pi: &StationaryDistribution, graph: &HeterogeneousGraph) -> RankingList {
    let mut pairs = Vec::new();
    for i in 0..graph.num_passages() {
        let p = pi.probs[i];
        if p > 0.0 {
            let (_, id) = graph.node_ref(i);
            pairs.push((id.to_string(), p));
        }
    }
    RankingList::from_scores(pairs)
}
