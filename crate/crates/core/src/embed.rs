//! Euclidean embedding layer: encoder clients, cosine similarity, and the
//! on-disk embedding cache.
//!
//! Two encoders are provided behind one trait: a deterministic hashed
//! bag-of-words encoder for offline use, and an HTTP client speaking
//! `POST {texts: [...]} -> {vectors: [[...]]}`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{EngineError, NodeKind, Result};

/// Produces fixed-dimension Euclidean embeddings for arbitrary text.
///
/// Implementations must be safe to call from multiple threads.
pub trait Encoder: Send + Sync {
    /// Embedding dimension `d`; every vector returned has this length.
    fn dim(&self) -> usize;

    /// Identifies the encoder + configuration; persisted with caches so a
    /// reload against a different encoder fails fast.
    fn fingerprint(&self) -> String;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&[text])?.remove(0))
    }
}

/// FNV-1a, used for bucket and sign hashing so vectors are identical across
/// platforms and runs.
fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    let mut h = basis;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

const FNV_BASIS_BUCKET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_BASIS_SIGN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic hashed bag-of-words encoder.
///
/// Tokenizes on non-alphanumeric characters, lower-cases, hashes each token
/// to one of `d` buckets with a ±1 sign from a second hash, accumulates, and
/// L2-normalizes. Identical token multisets therefore produce identical
/// vectors, regardless of order.
#[derive(Debug, Clone)]
pub struct HashedBowEncoder {
    dim: usize,
}

impl HashedBowEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EngineError::Config("encoder dimension must be > 0".into()));
        }
        Ok(HashedBowEncoder { dim })
    }

    fn encode_one(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(EngineError::EmptyInput("encode() requires non-empty text".into()));
        }
        let mut v = vec![0.0f64; self.dim];
        let mut any = false;
        for token in text
            .split(|ch: char| !ch.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            self.accumulate(&mut v, token.as_bytes());
            any = true;
        }
        if !any {
            // No alphanumeric content: hash the empty token so the result is
            // still a deterministic unit vector.
            self.accumulate(&mut v, b"");
        }
        let n = crate::geometry::dot(&v, &v).sqrt();
        for x in &mut v {
            *x /= n;
        }
        Ok(v)
    }

    fn accumulate(&self, v: &mut [f64], token: &[u8]) {
        let bucket = (fnv1a(token, FNV_BASIS_BUCKET) % self.dim as u64) as usize;
        let sign = if fnv1a(token, FNV_BASIS_SIGN) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        v[bucket] += sign;
    }
}

impl Encoder for HashedBowEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("hashed-bow/v1/d{}", self.dim)
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.encode_one(t)).collect()
    }
}

#[derive(serde::Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(serde::Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP encoder client: `POST url` with `{"texts": [...]}`, expecting
/// `{"vectors": [[...]]}`. Credentials, when configured, are read from the
/// named environment variable and sent as a bearer token.
pub struct HttpEncoder {
    url: String,
    dim: usize,
    batch_size: usize,
    credential_env: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEncoder {
    pub fn new(url: &str, dim: usize, batch_size: usize, credential_env: Option<String>) -> Self {
        HttpEncoder {
            url: url.to_string(),
            dim,
            batch_size: batch_size.max(1),
            credential_env,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn post_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut req = self.client.post(&self.url).json(&EncodeRequest { texts });
        if let Some(var) = &self.credential_env {
            if let Ok(token) = std::env::var(var) {
                req = req.bearer_auth(token);
            }
        }
        let resp = req
            .send()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EngineError::Transport(format!(
                "encoder returned HTTP {status}: {body}"
            )));
        }
        let parsed: EncodeResponse =
            serde_json::from_str(&body).map_err(|e| EngineError::MalformedPayload {
                msg: e.to_string(),
                raw: body.clone(),
            })?;
        if parsed.vectors.len() != texts.len() {
            return Err(EngineError::MalformedPayload {
                msg: format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    parsed.vectors.len()
                ),
                raw: body,
            });
        }
        for v in &parsed.vectors {
            if v.len() != self.dim {
                return Err(EngineError::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        Ok(parsed.vectors)
    }
}

impl Encoder for HttpEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("http/{}/d{}", self.url, self.dim)
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            for t in chunk {
                if t.is_empty() {
                    return Err(EngineError::EmptyInput(
                        "encode() requires non-empty text".into(),
                    ));
                }
            }
            out.extend(self.post_batch(chunk)?);
        }
        Ok(out)
    }
}

/// Cosine similarity `a·b / (||a||·||b||)`; rejects zero vectors and
/// mismatched dimensions.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EngineError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = crate::geometry::dot(a, a).sqrt();
    let nb = crate::geometry::dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EngineError::ZeroVector("cosine_similarity"));
    }
    Ok(crate::geometry::dot(a, b) / (na * nb))
}

const CACHE_MAGIC: &[u8; 8] = b"DRNKEMB\0";
const CACHE_VERSION: u32 = 1;

/// Keyed store of `(kind, id) -> vector`, all vectors sharing one dimension.
///
/// The on-disk form is a small binary file (magic, version, `d`, encoder
/// fingerprint, then length-prefixed records in sorted key order) so that a
/// save → load → save round trip is byte-identical.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingCache {
    dim: usize,
    fingerprint: String,
    entries: BTreeMap<(NodeKind, String), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn new(dim: usize, fingerprint: &str) -> Self {
        EmbeddingCache {
            dim,
            fingerprint: fingerprint.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, kind: NodeKind, id: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(EngineError::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        self.entries.insert((kind, id.to_string()), vector);
        Ok(())
    }

    pub fn get(&self, kind: NodeKind, id: &str) -> Option<&[f64]> {
        self.entries
            .get(&(kind, id.to_string()))
            .map(|v| v.as_slice())
    }

    /// Iterates entries in sorted key order.
    pub fn iter(&self) -> impl Iterator<Item = (&(NodeKind, String), &Vec<f64>)> {
        self.entries.iter()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        write_str(&mut buf, &self.fingerprint);
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for ((kind, id), vec) in &self.entries {
            buf.push(kind_tag(*kind));
            write_str(&mut buf, id);
            for x in vec {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path)?;
        let mut r = Cursor::new(path, &data);
        let magic = r.take(8)?;
        if magic != CACHE_MAGIC {
            return Err(r.corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(EngineError::VersionMismatch {
                found: version,
                supported: CACHE_VERSION,
            });
        }
        let dim = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let fingerprint = r.read_str()?;
        let count = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let mut cache = EmbeddingCache::new(dim, &fingerprint);
        for _ in 0..count {
            let kind = tag_kind(r.take(1)?[0]).ok_or_else(|| r.corrupt("bad node kind tag"))?;
            let id = r.read_str()?;
            let mut vec = Vec::with_capacity(dim);
            for _ in 0..dim {
                vec.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            cache.entries.insert((kind, id), vec);
        }
        Ok(cache)
    }
}

fn kind_tag(kind: NodeKind) -> u8 {
    match kind {
        NodeKind::Passage => 0,
        NodeKind::Entity => 1,
        NodeKind::Fact => 2,
    }
}

fn tag_kind(tag: u8) -> Option<NodeKind> {
    match tag {
        0 => Some(NodeKind::Passage),
        1 => Some(NodeKind::Entity),
        2 => Some(NodeKind::Fact),
        _ => None,
    }
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Bounds-checked reader over an in-memory file image; any overrun maps to a
/// structured corruption error naming the file.
pub(crate) struct Cursor<'a> {
    path: String,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(path: &Path, data: &'a [u8]) -> Self {
        Cursor {
            path: path.display().to_string(),
            data,
            pos: 0,
        }
    }

    pub(crate) fn corrupt(&self, msg: &str) -> EngineError {
        EngineError::CorruptIndex {
            path: self.path.clone(),
            msg: format!("{msg} (offset {})", self.pos),
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(self.corrupt("unexpected end of file"));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn read_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn read_str(&mut self) -> Result<String> {
        let len = self.read_u64()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid utf-8 string"))
    }

    pub(crate) fn finished(&self) -> bool {
        self.pos == self.data.len()
    }
}

/// Shared helpers for the other binary files in the index directory.
pub(crate) fn write_u64(buf: &mut Vec<u8>, x: u64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

pub(crate) fn write_f64(buf: &mut Vec<u8>, x: f64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

pub(crate) fn write_string(buf: &mut Vec<u8>, s: &str) {
    write_str(buf, s);
}
