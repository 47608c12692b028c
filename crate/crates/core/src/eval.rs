//! Evaluation: Recall@k over the three retrieval modes, answer exact-match
//! and token F1, and the JSON report harness.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::Encoder;
use crate::error::{EngineError, Result};
use crate::fusion;
use crate::retrieval::{RankingList, Retriever};

/// One dataset row (JSONL).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub question: String,
    pub gold_passage_ids: Vec<String>,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    /// Optional pre-generated answer; EM/F1 are computed when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_answer: Option<String>,
}

/// Fraction of gold passages present in the top-k retrieved.
pub fn recall_at_k(retrieved: &RankingList, gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    if gold.is_empty() {
        return Err(EngineError::EmptyInput("gold passage set is empty".into()));
    }
    let hits = retrieved
        .items()
        .iter()
        .take(k)
        .filter(|r| gold.contains(&r.passage_id))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Answer normalization: lower-case, strip articles (a/an/the), strip
/// punctuation, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let depunct: String = lowered
        .chars()
        .map(|ch| if ch.is_alphanumeric() { ch } else { ' ' })
        .collect();
    depunct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn answer_tokens(s: &str) -> Vec<String> {
    normalize_answer(s)
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

/// 1 iff the normalized prediction equals any normalized gold answer.
pub fn exact_match(pred: &str, gold: &[String]) -> f64 {
    let p = normalize_answer(pred);
    if gold.iter().any(|g| normalize_answer(g) == p) {
        1.0
    } else {
        0.0
    }
}

/// Max over gold answers of the token-multiset F1.
pub fn token_f1(pred: &str, gold: &[String]) -> f64 {
    let p_tokens = answer_tokens(pred);
    let mut best = 0.0f64;
    for g in gold {
        let g_tokens = answer_tokens(g);
        if p_tokens.is_empty() || g_tokens.is_empty() {
            continue;
        }
        let mut g_counts = std::collections::BTreeMap::new();
        for t in &g_tokens {
            *g_counts.entry(t.clone()).or_insert(0usize) += 1;
        }
        let mut common = 0usize;
        for t in &p_tokens {
            if let Some(c) = g_counts.get_mut(t) {
                if *c > 0 {
                    *c -= 1;
                    common += 1;
                }
            }
        }
        if common == 0 {
            continue;
        }
        let precision = common as f64 / p_tokens.len() as f64;
        let recall = common as f64 / g_tokens.len() as f64;
        best = best.max(2.0 * precision * recall / (precision + recall));
    }
    best
}

/// Per-query evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryReport {
    pub query_id: String,
    pub recall_euclidean: f64,
    pub recall_hyperbolic: Option<f64>,
    pub recall_fused: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordError {
    pub query_id: String,
    pub error: String,
}

/// Aggregate means; hyperbolic/EM/F1 are present only when every contributing
/// row produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub num_queries: usize,
    pub queries: Vec<QueryReport>,
    pub errors: Vec<RecordError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_recall_euclidean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_recall_hyperbolic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_recall_fused: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_f1: Option<f64>,
}

enum RowOutcome {
    Ok(Box<QueryReport>),
    Failed(RecordError),
}

fn eval_row(
    row: &EvalQuery,
    retriever: &Retriever<'_>,
    encoder: &dyn Encoder,
    known: &BTreeSet<&str>,
    k: usize,
    disable_hyperbolic: bool,
) -> Result<RowOutcome> {
    if row.gold_passage_ids.is_empty() {
        return Ok(RowOutcome::Failed(RecordError {
            query_id: row.query_id.clone(),
            error: "gold passage set is empty".into(),
        }));
    }
    if let Some(bad) = row
        .gold_passage_ids
        .iter()
        .find(|g| !known.contains(g.as_str()))
    {
        return Ok(RowOutcome::Failed(RecordError {
            query_id: row.query_id.clone(),
            error: format!("unknown gold passage id '{bad}'"),
        }));
    }
    let gold: BTreeSet<String> = row.gold_passage_ids.iter().cloned().collect();
    let branches = match retriever.retrieve(&row.question, encoder) {
        Ok(b) => b,
        Err(e) => {
            return Ok(RowOutcome::Failed(RecordError {
                query_id: row.query_id.clone(),
                error: e.to_string(),
            }));
        }
    };
    let hyperbolic = if disable_hyperbolic {
        None
    } else {
        branches.hyperbolic.clone()
    };
    let fused_ranking = match &hyperbolic {
        Some(h) => fusion::to_ranking(&fusion::fuse(&branches.euclidean, h)),
        None => branches.euclidean.clone(),
    };
    let recall_euclidean = recall_at_k(&branches.euclidean, &gold, k)?;
    let recall_hyperbolic = match &hyperbolic {
        Some(h) => Some(recall_at_k(h, &gold, k)?),
        None => None,
    };
    let recall_fused = recall_at_k(&fused_ranking, &gold, k)?;
    let (em, f1) = match (&row.generated_answer, row.gold_answers.is_empty()) {
        (Some(ans), false) => (
            Some(exact_match(ans, &row.gold_answers)),
            Some(token_f1(ans, &row.gold_answers)),
        ),
        _ => (None, None),
    };
    Ok(RowOutcome::Ok(Box::new(QueryReport {
        query_id: row.query_id.clone(),
        recall_euclidean,
        recall_hyperbolic,
        recall_fused,
        em,
        f1,
    })))
}

/// Runs retrieval + metrics over a dataset, parallel across queries with
/// results aggregated in dataset order. Unknown gold ids produce a
/// per-record error entry and the run continues. When `disable_hyperbolic`
/// is set the fused mode degenerates to the Euclidean ranking, mirroring the
/// single-space ablation.
pub fn run_eval(
    dataset: &[EvalQuery],
    retriever: &Retriever<'_>,
    encoder: &dyn Encoder,
    k: usize,
    disable_hyperbolic: bool,
) -> Result<EvalReport> {
    let known: BTreeSet<&str> = retriever
        .passages
        .iter()
        .map(|p| p.passage_id.as_str())
        .collect();

    let outcomes: Vec<RowOutcome> = dataset
        .par_iter()
        .map(|row| eval_row(row, retriever, encoder, &known, k, disable_hyperbolic))
        .collect::<Result<Vec<_>>>()?;

    let mut queries = Vec::new();
    let mut errors = Vec::new();
    for outcome in outcomes {
        match outcome {
            RowOutcome::Ok(q) => queries.push(*q),
            RowOutcome::Failed(e) => errors.push(e),
        }
    }

    let mean = |xs: Vec<f64>| -> Option<f64> {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    let mean_recall_euclidean = mean(queries.iter().map(|q| q.recall_euclidean).collect());
    let mean_recall_hyperbolic = if queries.iter().all(|q| q.recall_hyperbolic.is_some()) {
        mean(queries
            .iter()
            .filter_map(|q| q.recall_hyperbolic)
            .collect())
    } else {
        None
    };
    let mean_recall_fused = mean(queries.iter().map(|q| q.recall_fused).collect());
    let mean_em = mean(queries.iter().filter_map(|q| q.em).collect());
    let mean_f1 = mean(queries.iter().filter_map(|q| q.f1).collect());

    Ok(EvalReport {
        k,
        num_queries: queries.len(),
        queries,
        errors,
        mean_recall_euclidean,
        mean_recall_hyperbolic,
        mean_recall_fused,
        mean_em,
        mean_f1,
    })
}

/// Reads an eval dataset from JSONL; malformed rows are returned separately
/// so callers can report them without aborting the run.
pub fn read_dataset(path: &std::path::Path) -> Result<(Vec<EvalQuery>, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut malformed = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalQuery>(line) {
            Ok(q) => rows.push(q),
            Err(e) => malformed.push(format!("line {}: {e}", lineno + 1)),
        }
    }
    Ok((rows, malformed))
}
