//! End-to-end orchestration: corpus → index, projection training, retrieval,
//! and evaluation. The CLI is a thin wrapper over these functions; tests call
//! them directly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::AppConfig;
use crate::corpus::{self, Document, Entity, Fact, Passage};
use crate::embed::EmbeddingCache;
use crate::error::{EngineError, NodeKind, Result};
use crate::eval::{run_eval, EvalQuery, EvalReport};
use crate::fusion::{self, HybridScore};
use crate::graph::{add_synonymy_edges, build_graph, row_normalize, GraphConfig, NormalizedAdjacency};
use crate::index::{IndexData, IndexMeta, INDEX_FORMAT_VERSION};
use crate::projection::{self, ProjectionParams, TrainOutcome};
use crate::retrieval::{RankingList, Retriever};

/// Counts reported after `index`, mirroring the usual corpus / extraction /
/// graph statistic categories.
#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub num_documents: usize,
    pub num_passages: usize,
    pub num_entities: usize,
    pub num_facts: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_synonymy_edges: usize,
    /// Entity surfaces dropped because normalization rejected them.
    pub dropped_surfaces: usize,
}

/// Reads a corpus JSONL file ({doc_id, text} per line).
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = std::fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(line).map_err(|e| EngineError::CorruptIndex {
                path: path.display().to_string(),
                msg: format!("line {}: {e}", lineno + 1),
            })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Builds a complete index in memory: chunking, extraction, normalization,
/// encoding, and graph construction.
pub fn build_index(docs: &[Document], cfg: &AppConfig) -> Result<(IndexData, BuildSummary)> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(EngineError::EmptyInput("corpus contains no documents".into()));
    }
    let mut seen = BTreeSet::new();
    for d in docs {
        if d.text.trim().is_empty() {
            return Err(EngineError::EmptyInput(format!(
                "document '{}' has empty text",
                d.doc_id
            )));
        }
        if !seen.insert(d.doc_id.as_str()) {
            return Err(EngineError::InvalidData(format!(
                "duplicate doc_id '{}'",
                d.doc_id
            )));
        }
    }

    let chunk_cfg = corpus::ChunkConfig {
        max_chars: cfg.max_chars,
    };
    let mut passages: Vec<Passage> = Vec::new();
    for doc in docs {
        passages.extend(corpus::chunk_document(doc, &chunk_cfg)?);
    }
    if passages.is_empty() {
        return Err(EngineError::EmptyInput("corpus produced no passages".into()));
    }

    // Extraction is embarrassingly parallel; results are merged in passage
    // order so the index is reproducible.
    let extractor = cfg.make_extractor()?;
    let extractions: Vec<corpus::Extraction> = passages
        .par_iter()
        .map(|p| corpus::extract(p, extractor.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let mut mentions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut facts: Vec<Fact> = Vec::new();
    let mut dropped_surfaces = 0usize;
    for (p, ex) in passages.iter().zip(&extractions) {
        let mut canonical_of = BTreeMap::new();
        for surface in &ex.entities {
            match corpus::normalize_entity(surface) {
                Ok(canon) => {
                    mentions
                        .entry(canon.clone())
                        .or_default()
                        .insert(p.passage_id.clone());
                    canonical_of.insert(surface.clone(), canon);
                }
                Err(_) => dropped_surfaces += 1,
            }
        }
        let mut j = 0usize;
        for (s, r, o) in &ex.triples {
            let (Some(cs), Some(co)) = (canonical_of.get(s), canonical_of.get(o)) else {
                // Endpoint surface failed normalization; drop the triple too.
                dropped_surfaces += 1;
                continue;
            };
            facts.push(Fact {
                fact_id: format!("{}#f{}", p.passage_id, j),
                subject: cs.clone(),
                relation: r.clone(),
                object: co.clone(),
                source_passage: p.passage_id.clone(),
                text: format!("{cs} {r} {co}"),
            });
            j += 1;
        }
    }

    let entities: Vec<Entity> = mentions
        .into_iter()
        .map(|(canon, pids)| Entity {
            entity_id: canon.clone(),
            canonical_name: canon,
            mentions: pids.into_iter().collect(),
        })
        .collect();

    // Canonical storage order.
    passages.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    facts.sort_by(|a, b| a.fact_id.cmp(&b.fact_id));

    let encoder = cfg.make_encoder()?;
    let mut embeddings = EmbeddingCache::new(cfg.d, &encoder.fingerprint());
    let encode_all = |texts: Vec<(NodeKind, String, String)>| -> Result<Vec<(NodeKind, String, Vec<f64>)>> {
        texts
            .par_chunks(64)
            .map(|chunk| {
                let refs: Vec<&str> = chunk.iter().map(|(_, _, t)| t.as_str()).collect();
                let vecs = encoder.encode_batch(&refs)?;
                Ok(chunk
                    .iter()
                    .zip(vecs)
                    .map(|((k, id, _), v)| (*k, id.clone(), v))
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()
            .map(|vv| vv.into_iter().flatten().collect())
    };
    let mut jobs: Vec<(NodeKind, String, String)> = Vec::new();
    for p in &passages {
        jobs.push((NodeKind::Passage, p.passage_id.clone(), p.text.clone()));
    }
    for e in &entities {
        jobs.push((NodeKind::Entity, e.entity_id.clone(), e.canonical_name.clone()));
    }
    for f in &facts {
        jobs.push((NodeKind::Fact, f.fact_id.clone(), f.text.clone()));
    }
    for (kind, id, vec) in encode_all(jobs)? {
        embeddings.insert(kind, &id, vec)?;
    }

    let graph_cfg = GraphConfig {
        tau_syn: cfg.tau_syn,
    };
    let mut graph = build_graph(&passages, &entities, &facts, &embeddings, &graph_cfg)?;
    let num_synonymy_edges = add_synonymy_edges(&mut graph, &embeddings, cfg.tau_syn)?;

    let meta = IndexMeta {
        format_version: INDEX_FORMAT_VERSION,
        d: cfg.d,
        c: cfg.c,
        alpha: cfg.alpha,
        beta: cfg.beta,
        tau_syn: cfg.tau_syn,
        seed: cfg.seed,
        encoder_fingerprint: encoder.fingerprint(),
        extractor_fingerprint: extractor.fingerprint(),
        num_passages: passages.len(),
        num_entities: entities.len(),
        num_facts: facts.len(),
        num_nodes: graph.num_nodes(),
        num_edges: graph.edges().len(),
    };
    let summary = BuildSummary {
        num_documents: docs.len(),
        num_passages: passages.len(),
        num_entities: entities.len(),
        num_facts: facts.len(),
        num_nodes: graph.num_nodes(),
        num_edges: graph.edges().len(),
        num_synonymy_edges,
        dropped_surfaces,
    };
    Ok((
        IndexData {
            meta,
            passages,
            entities,
            facts,
            graph,
            embeddings,
            params: None,
        },
        summary,
    ))
}

/// Trains the projection and installs the learned parameters on the index.
pub fn train_index(index: &mut IndexData, cfg: &AppConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init = ProjectionParams::init(
        index.meta.d,
        cfg.alpha,
        cfg.beta,
        cfg.curvature(),
        cfg.seed,
    )?;
    let outcome = projection::train(
        &index.passages,
        &index.facts,
        &index.embeddings,
        init,
        &cfg.train_config(),
    )?;
    index.params = Some(outcome.params.clone());
    Ok(outcome)
}

/// Builds a query-time retriever over a loaded index and a precomputed
/// adjacency. `disable_hyperbolic` drops the hyperbolic branch even when
/// parameters are present (the single-space ablation).
pub fn retriever_for<'a>(
    index: &'a IndexData,
    adjacency: &'a NormalizedAdjacency,
    cfg: &AppConfig,
    disable_hyperbolic: bool,
) -> Result<Retriever<'a>> {
    let params = if disable_hyperbolic {
        None
    } else {
        index.params.as_ref()
    };
    Retriever::new(
        &index.graph,
        adjacency,
        &index.passages,
        &index.facts,
        &index.embeddings,
        params,
        cfg.retrieval_config(),
    )
}

/// Full dual-space answer for one query.
#[derive(Debug, Clone, Serialize)]
pub struct RetrieveOutput {
    pub euclidean: RankingList,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperbolic: Option<RankingList>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused: Option<Vec<HybridScore>>,
}

/// Runs both branches and the fusion for one question.
pub fn retrieve(
    index: &IndexData,
    cfg: &AppConfig,
    question: &str,
) -> Result<RetrieveOutput> {
    let adjacency = row_normalize(&index.graph);
    let retriever = retriever_for(index, &adjacency, cfg, cfg.disable_hyperbolic)?;
    let encoder = cfg.make_encoder()?;
    let branches = retriever.retrieve(question, encoder.as_ref())?;
    let fused = branches
        .hyperbolic
        .as_ref()
        .map(|h| fusion::fuse(&branches.euclidean, h));
    Ok(RetrieveOutput {
        euclidean: branches.euclidean,
        hyperbolic: branches.hyperbolic,
        fused,
    })
}

/// Evaluates a dataset against the index.
pub fn evaluate(index: &IndexData, cfg: &AppConfig, dataset: &[EvalQuery]) -> Result<EvalReport> {
    let adjacency = row_normalize(&index.graph);
    let retriever = retriever_for(index, &adjacency, cfg, cfg.disable_hyperbolic)?;
    let encoder = cfg.make_encoder()?;
    run_eval(
        dataset,
        &retriever,
        encoder.as_ref(),
        cfg.k_eval,
        cfg.disable_hyperbolic,
    )
}
