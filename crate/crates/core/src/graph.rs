//! Heterogeneous passage–entity graph and its row-normalized adjacency.
//!
//! Nodes are passages and entities; edges come in three kinds:
//! entity–entity (weight = fact co-occurrence count), passage–entity
//! (mention grounding, weight 1), and synonymy (cosine threshold, weight 1).
//! The graph is undirected: each edge is stored once and traversed both ways.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::corpus::{Entity, Fact, Passage};
use crate::embed::{cosine_similarity, EmbeddingCache};
use crate::error::{EngineError, NodeKind, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    EntityEntity,
    PassageEntity,
    Synonymy,
}

impl EdgeKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            EdgeKind::EntityEntity => 0,
            EdgeKind::PassageEntity => 1,
            EdgeKind::Synonymy => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(EdgeKind::EntityEntity),
            1 => Some(EdgeKind::PassageEntity),
            2 => Some(EdgeKind::Synonymy),
            _ => None,
        }
    }
}

/// Undirected weighted edge between node indexes, stored with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone)]
pub struct GraphConfig {
    /// Cosine threshold for synonymy edges, in (0, 1].
    pub tau_syn: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { tau_syn: 0.8 }
    }
}

/// The finalized graph. Passages occupy node indexes `0..num_passages()`,
/// entities the rest; both blocks are sorted by id so the index layout is
/// canonical for a given node set.
#[derive(Debug, Clone)]
pub struct HeterogeneousGraph {
    passage_ids: Vec<String>,
    entity_ids: Vec<String>,
    edges: Vec<GraphEdge>,
    /// Distinct passages linked to each entity (indexed like `entity_ids`).
    entity_passage_degree: Vec<usize>,
    index: HashMap<(NodeKind, String), usize>,
}

impl HeterogeneousGraph {
    /// Assembles a graph from raw parts (ids assumed sorted and unique, edge
    /// endpoints assumed in range). [`build_graph`] is the checked path for
    /// real corpora; this one serves persistence and synthetic graphs.
    pub fn from_parts(
        passage_ids: Vec<String>,
        entity_ids: Vec<String>,
        edges: Vec<GraphEdge>,
        entity_passage_degree: Vec<usize>,
    ) -> Self {
        let mut index = HashMap::new();
        for (i, id) in passage_ids.iter().enumerate() {
            index.insert((NodeKind::Passage, id.clone()), i);
        }
        for (i, id) in entity_ids.iter().enumerate() {
            index.insert((NodeKind::Entity, id.clone()), passage_ids.len() + i);
        }
        HeterogeneousGraph {
            passage_ids,
            entity_ids,
            edges,
            entity_passage_degree,
            index,
        }
    }

    pub fn num_passages(&self) -> usize {
        self.passage_ids.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.passage_ids.len() + self.entity_ids.len()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.passage_ids
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn node_index(&self, kind: NodeKind, id: &str) -> Option<usize> {
        self.index.get(&(kind, id.to_string())).copied()
    }

    /// Node id and kind for a node index.
    pub fn node_ref(&self, idx: usize) -> (NodeKind, &str) {
        if idx < self.passage_ids.len() {
            (NodeKind::Passage, &self.passage_ids[idx])
        } else {
            (NodeKind::Entity, &self.entity_ids[idx - self.passage_ids.len()])
        }
    }

    pub fn is_passage_node(&self, idx: usize) -> bool {
        idx < self.passage_ids.len()
    }

    /// Number of distinct passages linked to the entity; 0 for unknown ids.
    pub fn passage_degree(&self, entity_id: &str) -> usize {
        self.node_index(NodeKind::Entity, entity_id)
            .map(|i| self.entity_passage_degree[i - self.passage_ids.len()])
            .unwrap_or(0)
    }

    /// Total edge weight between a node pair, any kind.
    pub fn weight_between(&self, a: usize, b: usize) -> f64 {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        self.edges
            .iter()
            .filter(|e| e.u == u && e.v == v)
            .map(|e| e.weight)
            .sum()
    }

    pub(crate) fn edges_mut(&mut self) -> &mut Vec<GraphEdge> {
        &mut self.edges
    }

    /// Restores canonical edge order after insertions.
    pub(crate) fn sort_edges(&mut self) {
        self.edges.sort_by(|a, b| {
            (a.kind.tag(), a.u, a.v)
                .partial_cmp(&(b.kind.tag(), b.u, b.v))
                .unwrap()
        });
    }
}

/// Builds the graph from finalized stores. Every entity must have an
/// embedding (synonymy comparisons need them); every fact must reference
/// known entities and passages.
pub fn build_graph(
    passages: &[Passage],
    entities: &[Entity],
    facts: &[Fact],
    embeddings: &EmbeddingCache,
    _cfg: &GraphConfig,
) -> Result<HeterogeneousGraph> {
    for e in entities {
        if embeddings.get(NodeKind::Entity, &e.entity_id).is_none() {
            return Err(EngineError::MissingEmbedding {
                kind: NodeKind::Entity,
                id: e.entity_id.clone(),
            });
        }
    }

    let mut passage_ids: Vec<String> = passages.iter().map(|p| p.passage_id.clone()).collect();
    passage_ids.sort();
    let mut entity_ids: Vec<String> = entities.iter().map(|e| e.entity_id.clone()).collect();
    entity_ids.sort();

    let passage_pos: HashMap<&str, usize> = passage_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let entity_pos: HashMap<&str, usize> = entity_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let n_pass = passage_ids.len();

    let lookup_entity = |id: &str| -> Result<usize> {
        entity_pos
            .get(id)
            .map(|i| n_pass + i)
            .ok_or_else(|| EngineError::UnknownId(format!("entity '{id}'")))
    };
    let lookup_passage = |id: &str| -> Result<usize> {
        passage_pos
            .get(id)
            .copied()
            .ok_or_else(|| EngineError::UnknownId(format!("passage '{id}'")))
    };

    // Entity–entity edges accumulate one unit of weight per fact over the
    // unordered endpoint pair; self-pairs produce no edge.
    let mut ee: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    // Passage–entity edges are deduplicated at weight 1.
    let mut pe: BTreeSet<(usize, usize)> = BTreeSet::new();

    for f in facts {
        let s = lookup_entity(&f.subject)?;
        let o = lookup_entity(&f.object)?;
        let p = lookup_passage(&f.source_passage)?;
        if s != o {
            let key = if s < o { (s, o) } else { (o, s) };
            *ee.entry(key).or_insert(0.0) += 1.0;
        }
        pe.insert((p, s));
        pe.insert((p, o));
    }

    // Mention grounding: a passage links to every entity mentioned in it,
    // not only to fact endpoints.
    for e in entities {
        let eidx = lookup_entity(&e.entity_id)?;
        for pid in &e.mentions {
            pe.insert((lookup_passage(pid)?, eidx));
        }
    }

    let mut edges: Vec<GraphEdge> = Vec::with_capacity(ee.len() + pe.len());
    for ((u, v), weight) in ee {
        edges.push(GraphEdge {
            u,
            v,
            weight,
            kind: EdgeKind::EntityEntity,
        });
    }
    for (p, e) in &pe {
        edges.push(GraphEdge {
            u: *p,
            v: *e,
            weight: 1.0,
            kind: EdgeKind::PassageEntity,
        });
    }

    let mut degree = vec![0usize; entity_ids.len()];
    for (_, e) in &pe {
        degree[e - n_pass] += 1;
    }

    let mut graph =
        HeterogeneousGraph::from_parts(passage_ids, entity_ids, edges, degree);
    graph.sort_edges();
    Ok(graph)
}

/// Adds a synonymy edge for every distinct entity pair whose embeddings meet
/// the cosine threshold.
pub fn add_synonymy_edges(
    graph: &mut HeterogeneousGraph,
    embeddings: &EmbeddingCache,
    tau_syn: f64,
) -> Result<usize> {
    if !(tau_syn > 0.0 && tau_syn <= 1.0) {
        return Err(EngineError::InvalidParameter(format!(
            "tau_syn must lie in (0, 1], got {tau_syn}"
        )));
    }
    let n_pass = graph.num_passages();
    let entity_ids: Vec<String> = graph.entity_ids().to_vec();
    let mut added = 0;
    for i in 0..entity_ids.len() {
        let zi = embeddings
            .get(NodeKind::Entity, &entity_ids[i])
            .ok_or_else(|| EngineError::MissingEmbedding {
                kind: NodeKind::Entity,
                id: entity_ids[i].clone(),
            })?;
        for j in i + 1..entity_ids.len() {
            let zj = embeddings
                .get(NodeKind::Entity, &entity_ids[j])
                .ok_or_else(|| EngineError::MissingEmbedding {
                    kind: NodeKind::Entity,
                    id: entity_ids[j].clone(),
                })?;
            if cosine_similarity(zi, zj)? >= tau_syn {
                graph.edges_mut().push(GraphEdge {
                    u: n_pass + i,
                    v: n_pass + j,
                    weight: 1.0,
                    kind: EdgeKind::Synonymy,
                });
                added += 1;
            }
        }
    }
    graph.sort_edges();
    Ok(added)
}

/// Sparse row-stochastic adjacency in CSR form. Isolated rows stay all-zero
/// and are flagged; PPR handles them through its restart term.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    isolated: Vec<bool>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.isolated[i]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, w)| w).sum()
    }

    /// `out = x · W` for a row-vector `x` (the PPR propagation step).
    pub fn left_multiply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (j, w) in self.row(i) {
                out[j] += xi * w;
            }
        }
    }
}

/// Row-normalizes the (undirected) graph adjacency: `A[i][j] = w_ij / Σ_j w_ij`.
pub fn row_normalize(graph: &HeterogeneousGraph) -> NormalizedAdjacency {
    let n = graph.num_nodes();
    // Parallel edges of different kinds between one pair sum their weights.
    let mut neighbor: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for e in graph.edges() {
        *neighbor[e.u].entry(e.v).or_insert(0.0) += e.weight;
        *neighbor[e.v].entry(e.u).or_insert(0.0) += e.weight;
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut isolated = Vec::with_capacity(n);
    row_ptr.push(0);
    for row in &neighbor {
        let total: f64 = row.values().sum();
        if total > 0.0 {
            for (&j, &w) in row {
                cols.push(j);
                vals.push(w / total);
            }
            isolated.push(false);
        } else {
            isolated.push(true);
        }
        row_ptr.push(cols.len());
    }
    NormalizedAdjacency {
        n,
        row_ptr,
        cols,
        vals,
        isolated,
    }
}
