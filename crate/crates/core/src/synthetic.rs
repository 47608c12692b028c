//! Deterministic synthetic corpora for tests and benchmarks.
//!
//! Both generators are shaped for the offline stub extractor: capitalized
//! tokens become entities, and consecutive entity pairs inside a sentence
//! become facts.

use crate::config::AppConfig;
use crate::corpus::Document;
use crate::eval::EvalQuery;

fn doc(doc_id: &str, text: &str) -> Document {
    Document {
        doc_id: doc_id.to_string(),
        text: text.to_string(),
        metadata: Default::default(),
    }
}

/// Twenty one-sentence documents, three facts each (60 facts total under the
/// stub extractor). Hub entities are shared across documents so the graph is
/// connected.
pub fn toy_corpus() -> Vec<Document> {
    (0..20)
        .map(|i| {
            let text = format!(
                "Node{i} links Hub{h} and marks Leaf{i} and notes Tag{t}.",
                h = i % 5,
                t = i % 4,
            );
            doc(&format!("toy{i:02}"), &text)
        })
        .collect()
}

/// Hub/leaf corpus: one generic hub entity mentioned by 30 near-duplicate
/// hub passages, plus 10 specific leaf passages; queries target the leaves
/// but share most of their vocabulary with the hub passages, so flat cosine
/// retrieval drifts toward the hub.
pub fn hub_leaf_corpus() -> (Vec<Document>, Vec<EvalQuery>) {
    let mut docs = Vec::new();
    for j in 0..30 {
        // Hub passages are dense in the connective scaffolding every query
        // shares ("how does ... relate to ... given"), which is what makes
        // generic hubs crowd flat cosine rankings.
        let text = format!(
            "Hub Topic tells how does one theme relate to another theme given broad research \
             methods across Zone{j}. \
             readers ask how does one area relate to another area given common methods. \
             guides explain how does a topic relate to a nearby topic given shared context."
        );
        docs.push(doc(&format!("hub{j:02}"), &text));
    }
    for q in 0..10 {
        // The second sentence shares generic vocabulary with the hub fact,
        // which is what makes hub facts hard negatives during training.
        let text = format!(
            "Quasar{q} Flux explains Phenomenon{q} Cascade. \
             instrument run{q} notes cover broad research methods in current trials."
        );
        docs.push(doc(&format!("leaf{q}"), &text));
    }
    // Half the queries stay fully specific; the other half lean on the
    // connective scaffolding plus a generic tail, the hub trap.
    let queries = (0..10)
        .map(|q| {
            let question = if q < 5 {
                format!("how does Quasar{q} Flux relate to Phenomenon{q} Cascade in current trials")
            } else {
                format!(
                    "how does Quasar{q} Flux relate to Phenomenon{q} Cascade given broad \
                     research methods"
                )
            };
            EvalQuery {
                query_id: format!("q{q}"),
                question,
                gold_passage_ids: vec![format!("leaf{q}#0")],
                gold_answers: vec![format!("quasar{q} flux")],
                generated_answer: None,
            }
        })
        .collect();
    (docs, queries)
}

/// Pinned configuration for the toy training fixture.
pub fn toy_config() -> AppConfig {
    AppConfig {
        d: 64,
        epochs: 200,
        seed: 42,
        ..AppConfig::default()
    }
}

/// Pinned configuration for the hub/leaf fixture. The larger margin and
/// longer schedule let the containment loss separate the generic hub cluster
/// from the leaves.
pub fn hub_leaf_config() -> AppConfig {
    AppConfig {
        d: 128,
        gamma: 0.6,
        learning_rate: 0.1,
        epochs: 800,
        seed: 42,
        ..AppConfig::default()
    }
}

/// Writes documents as corpus JSONL.
pub fn write_corpus_jsonl(path: &std::path::Path, docs: &[Document]) -> crate::Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes eval queries as dataset JSONL.
pub fn write_queries_jsonl(path: &std::path::Path, queries: &[EvalQuery]) -> crate::Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Extractor, StubExtractor};

    #[test]
    fn toy_corpus_yields_twenty_passages_sixty_facts() {
        let docs = toy_corpus();
        assert_eq!(docs.len(), 20);
        let mut facts = 0;
        for d in &docs {
            let chunks =
                crate::corpus::chunk_document(d, &crate::corpus::ChunkConfig::default()).unwrap();
            assert_eq!(chunks.len(), 1, "doc {} should stay one passage", d.doc_id);
            let ex = StubExtractor.extract("p", &d.text).unwrap();
            facts += ex.triples.len();
        }
        assert_eq!(facts, 60);
    }

    #[test]
    fn hub_leaf_counts() {
        let (docs, queries) = hub_leaf_corpus();
        assert_eq!(docs.len(), 40);
        assert_eq!(queries.len(), 10);
        // Hub entity appears in every hub passage and no leaf passage.
        for d in &docs {
            let ex = StubExtractor.extract("p", &d.text).unwrap();
            let has_hub = ex.entities.iter().any(|e| e == "Hub Topic");
            if d.doc_id.starts_with("hub") {
                assert!(has_hub, "{} should mention the hub", d.doc_id);
            } else {
                assert!(!has_hub, "{} should not mention the hub", d.doc_id);
            }
        }
    }
}
