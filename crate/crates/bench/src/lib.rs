//! Shared fixtures for the criterion benchmarks.

use dualrank_core::corpus::{Entity, Passage};
use dualrank_core::embed::{EmbeddingCache, Encoder, HashedBowEncoder};
use dualrank_core::error::NodeKind;
use dualrank_core::graph::{build_graph, GraphConfig};
use dualrank_core::HeterogeneousGraph;

/// Ring-of-cliques graph: `n_passages` passages, one entity per clique of
/// `clique` passages, consecutive entities tied together through a shared
/// passage. Big enough to exercise sparse PPR without dwarfing bench time.
pub fn ring_graph(n_passages: usize, clique: usize) -> HeterogeneousGraph {
    let encoder = HashedBowEncoder::new(32).unwrap();
    let passages: Vec<Passage> = (0..n_passages)
        .map(|i| Passage {
            passage_id: format!("p{i:05}"),
            doc_id: format!("d{i:05}"),
            ordinal: 0,
            text: format!("passage number {i} body"),
        })
        .collect();
    let n_entities = n_passages.div_ceil(clique);
    let entities: Vec<Entity> = (0..n_entities)
        .map(|e| {
            let mut mentions: Vec<String> = (0..n_passages)
                .filter(|i| i / clique == e || (i + 1) / clique == e)
                .map(|i| format!("p{i:05}"))
                .collect();
            mentions.sort();
            Entity {
                entity_id: format!("e{e:05}"),
                canonical_name: format!("entity {e}"),
                mentions,
            }
        })
        .collect();
    let mut cache = EmbeddingCache::new(32, &encoder.fingerprint());
    for e in &entities {
        cache
            .insert(NodeKind::Entity, &e.entity_id, encoder.encode(&e.canonical_name).unwrap())
            .unwrap();
    }
    build_graph(&passages, &entities, &[], &cache, &GraphConfig::default()).unwrap()
}
