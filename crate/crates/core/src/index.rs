//! On-disk index directory: stores, graph, embedding caches, projection
//! parameters, and metadata.
//!
//! Layout: `graph.bin`, `passages.jsonl`, `entities.jsonl`, `facts.jsonl`,
//! `emb_passage.bin`, `emb_entity.bin`, `emb_fact.bin`, `projection.bin`
//! (after training), `meta.json`. All writers emit canonical bytes: records
//! in sorted order, little-endian scalars, so save → load → save round trips
//! are byte-identical.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::AppConfig;
use crate::corpus::{Entity, Fact, Passage};
use crate::embed::{Cursor, EmbeddingCache};
use crate::error::{EngineError, NodeKind, Result};
use crate::graph::{EdgeKind, GraphEdge, HeterogeneousGraph};
use crate::projection::{DepthHead, Matrix, ProjectionParams};

pub const INDEX_FORMAT_VERSION: u32 = 1;
const GRAPH_MAGIC: &[u8; 8] = b"DRNKGRF\0";
const PROJ_MAGIC: &[u8; 8] = b"DRNKPRJ\0";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexMeta {
    pub format_version: u32,
    pub d: usize,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_syn: f64,
    pub seed: u64,
    pub encoder_fingerprint: String,
    pub extractor_fingerprint: String,
    pub num_passages: usize,
    pub num_entities: usize,
    pub num_facts: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
}

/// Everything the engine needs at query time.
pub struct IndexData {
    pub meta: IndexMeta,
    pub passages: Vec<Passage>,
    pub entities: Vec<Entity>,
    pub facts: Vec<Fact>,
    pub graph: HeterogeneousGraph,
    pub embeddings: EmbeddingCache,
    pub params: Option<ProjectionParams>,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| EngineError::CorruptIndex {
            path: path.display().to_string(),
            msg: format!("line {}: {e}", lineno + 1),
        })?);
    }
    Ok(rows)
}

fn graph_to_bytes(graph: &HeterogeneousGraph) -> Vec<u8> {
    use crate::embed::{write_f64, write_string, write_u64};
    let mut buf = Vec::new();
    buf.extend_from_slice(GRAPH_MAGIC);
    buf.extend_from_slice(&INDEX_FORMAT_VERSION.to_le_bytes());
    write_u64(&mut buf, graph.num_passages() as u64);
    for id in graph.passage_ids() {
        write_string(&mut buf, id);
    }
    write_u64(&mut buf, graph.num_entities() as u64);
    for id in graph.entity_ids() {
        write_string(&mut buf, id);
        write_u64(&mut buf, graph.passage_degree(id) as u64);
    }
    write_u64(&mut buf, graph.edges().len() as u64);
    for e in graph.edges() {
        buf.push(e.kind.tag());
        write_u64(&mut buf, e.u as u64);
        write_u64(&mut buf, e.v as u64);
        write_f64(&mut buf, e.weight);
    }
    buf
}

fn graph_from_bytes(path: &Path, data: &[u8]) -> Result<HeterogeneousGraph> {
    let mut r = Cursor::new(path, data);
    if r.take(8)? != GRAPH_MAGIC {
        return Err(r.corrupt("bad graph magic"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != INDEX_FORMAT_VERSION {
        return Err(EngineError::VersionMismatch {
            found: version,
            supported: INDEX_FORMAT_VERSION,
        });
    }
    let n_pass = r.read_u64()? as usize;
    let mut passage_ids = Vec::with_capacity(n_pass);
    for _ in 0..n_pass {
        passage_ids.push(r.read_str()?);
    }
    let n_ent = r.read_u64()? as usize;
    let mut entity_ids = Vec::with_capacity(n_ent);
    let mut degrees = Vec::with_capacity(n_ent);
    for _ in 0..n_ent {
        entity_ids.push(r.read_str()?);
        degrees.push(r.read_u64()? as usize);
    }
    let n_edges = r.read_u64()? as usize;
    let mut edges = Vec::with_capacity(n_edges);
    let n_nodes = n_pass + n_ent;
    for _ in 0..n_edges {
        let kind = EdgeKind::from_tag(r.take(1)?[0]).ok_or_else(|| r.corrupt("bad edge kind"))?;
        let u = r.read_u64()? as usize;
        let v = r.read_u64()? as usize;
        let weight = r.read_f64()?;
        if u >= n_nodes || v >= n_nodes {
            return Err(r.corrupt("edge endpoint out of range"));
        }
        edges.push(GraphEdge { u, v, weight, kind });
    }
    if !r.finished() {
        return Err(r.corrupt("trailing bytes"));
    }
    Ok(HeterogeneousGraph::from_parts(
        passage_ids,
        entity_ids,
        edges,
        degrees,
    ))
}

fn params_to_bytes(p: &ProjectionParams) -> Vec<u8> {
    use crate::embed::{write_f64, write_u64};
    let mut buf = Vec::new();
    buf.extend_from_slice(PROJ_MAGIC);
    buf.extend_from_slice(&INDEX_FORMAT_VERSION.to_le_bytes());
    write_u64(&mut buf, p.dim() as u64);
    write_f64(&mut buf, p.norm_offset());
    write_f64(&mut buf, p.norm_scale());
    write_f64(&mut buf, p.curvature().get());
    let mut tensor = |data: &[f64]| {
        for x in data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    };
    tensor(p.phi_w.data());
    tensor(&p.phi_b);
    for head in [&p.psi_pass, &p.psi_fact, &p.psi_ent] {
        tensor(&head.w);
        tensor(&[head.b]);
    }
    tensor(p.rho_w.data());
    tensor(&p.rho_b);
    tensor(p.gate_w.data());
    buf
}

fn params_from_bytes(path: &Path, data: &[u8]) -> Result<ProjectionParams> {
    let mut r = Cursor::new(path, data);
    if r.take(8)? != PROJ_MAGIC {
        return Err(r.corrupt("bad projection magic"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != INDEX_FORMAT_VERSION {
        return Err(EngineError::VersionMismatch {
            found: version,
            supported: INDEX_FORMAT_VERSION,
        });
    }
    let d = r.read_u64()? as usize;
    let alpha = r.read_f64()?;
    let beta = r.read_f64()?;
    let c = r.read_f64()?;
    let vec_of = |n: usize, r: &mut Cursor| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.read_f64()?);
        }
        Ok(v)
    };
    let phi_w = Matrix::from_data(d, d, vec_of(d * d, &mut r)?);
    let phi_b = vec_of(d, &mut r)?;
    let mut heads = Vec::with_capacity(3);
    for _ in 0..3 {
        let w = vec_of(d, &mut r)?;
        let b = r.read_f64()?;
        heads.push(DepthHead { w, b });
    }
    let psi_ent = heads.pop().unwrap();
    let psi_fact = heads.pop().unwrap();
    let psi_pass = heads.pop().unwrap();
    let rho_w = Matrix::from_data(d, 2 * d, vec_of(d * 2 * d, &mut r)?);
    let rho_b = vec_of(d, &mut r)?;
    let gate_w = Matrix::from_data(d, d, vec_of(d * d, &mut r)?);
    if !r.finished() {
        return Err(r.corrupt("trailing bytes"));
    }
    ProjectionParams::from_parts(
        d,
        phi_w,
        phi_b,
        psi_pass,
        psi_fact,
        psi_ent,
        rho_w,
        rho_b,
        gate_w,
        alpha,
        beta,
        crate::geometry::Curvature::new(c)?,
    )
}

fn cache_of_kind(cache: &EmbeddingCache, kind: NodeKind) -> EmbeddingCache {
    let mut out = EmbeddingCache::new(cache.dim(), cache.fingerprint());
    for ((k, id), v) in cache.iter() {
        if *k == kind {
            out.insert(*k, id, v.clone()).expect("dimensions agree");
        }
    }
    out
}

pub fn save_index(dir: &Path, index: &IndexData) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&index.meta)? + "\n",
    )?;
    write_jsonl(&dir.join("passages.jsonl"), &index.passages)?;
    write_jsonl(&dir.join("entities.jsonl"), &index.entities)?;
    write_jsonl(&dir.join("facts.jsonl"), &index.facts)?;
    std::fs::write(dir.join("graph.bin"), graph_to_bytes(&index.graph))?;
    cache_of_kind(&index.embeddings, NodeKind::Passage).save(&dir.join("emb_passage.bin"))?;
    cache_of_kind(&index.embeddings, NodeKind::Entity).save(&dir.join("emb_entity.bin"))?;
    cache_of_kind(&index.embeddings, NodeKind::Fact).save(&dir.join("emb_fact.bin"))?;
    if let Some(p) = &index.params {
        std::fs::write(dir.join("projection.bin"), params_to_bytes(p))?;
    }
    Ok(())
}

pub fn load_index(dir: &Path) -> Result<IndexData> {
    let meta_path = dir.join("meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| {
        EngineError::CorruptIndex {
            path: meta_path.display().to_string(),
            msg: format!("cannot read index metadata: {e}"),
        }
    })?;
    let meta: IndexMeta =
        serde_json::from_str(&meta_text).map_err(|e| EngineError::CorruptIndex {
            path: meta_path.display().to_string(),
            msg: e.to_string(),
        })?;
    if meta.format_version != INDEX_FORMAT_VERSION {
        return Err(EngineError::VersionMismatch {
            found: meta.format_version,
            supported: INDEX_FORMAT_VERSION,
        });
    }
    let passages: Vec<Passage> = read_jsonl(&dir.join("passages.jsonl"))?;
    let entities: Vec<Entity> = read_jsonl(&dir.join("entities.jsonl"))?;
    let facts: Vec<Fact> = read_jsonl(&dir.join("facts.jsonl"))?;
    let graph_path = dir.join("graph.bin");
    let graph = graph_from_bytes(&graph_path, &std::fs::read(&graph_path)?)?;

    let mut embeddings = EmbeddingCache::load(&dir.join("emb_passage.bin"))?;
    for file in ["emb_entity.bin", "emb_fact.bin"] {
        let other = EmbeddingCache::load(&dir.join(file))?;
        if other.dim() != embeddings.dim() {
            return Err(EngineError::DimensionMismatch {
                expected: embeddings.dim(),
                got: other.dim(),
            });
        }
        for ((k, id), v) in other.iter() {
            embeddings.insert(*k, id, v.clone())?;
        }
    }
    if embeddings.dim() != meta.d {
        return Err(EngineError::Config(format!(
            "embedding dimension {} does not match index metadata d={}",
            embeddings.dim(),
            meta.d
        )));
    }
    if embeddings.fingerprint() != meta.encoder_fingerprint {
        return Err(EngineError::Config(format!(
            "encoder fingerprint '{}' does not match index metadata '{}'",
            embeddings.fingerprint(),
            meta.encoder_fingerprint
        )));
    }

    let proj_path = dir.join("projection.bin");
    let params = if proj_path.exists() {
        Some(params_from_bytes(&proj_path, &std::fs::read(&proj_path)?)?)
    } else {
        None
    };

    Ok(IndexData {
        meta,
        passages,
        entities,
        facts,
        graph,
        embeddings,
        params,
    })
}

/// Resolves the configured index directory or fails with a config error.
pub fn index_dir(cfg: &AppConfig) -> Result<PathBuf> {
    cfg.index_dir
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| EngineError::Config("index_dir is not set".into()))
}
