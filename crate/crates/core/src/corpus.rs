//! Corpus ingestion: sentence-aware chunking, entity/triple extraction via a
//! pluggable extractor, and entity normalization.
//!
//! The offline stub extractor is intentionally crude but bit-deterministic:
//! entities are maximal runs of capitalized tokens, and a triple is emitted
//! for every consecutive entity pair within one sentence, using the
//! intervening lower-case tokens as the relation.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// A raw input document; one JSONL row of the corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub metadata: std::collections::BTreeMap<String, String>,
}

/// A retrieval unit produced by chunking.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
}

/// A canonical entity. `entity_id` equals the canonical name, which is unique
/// by construction; `mentions` lists the passages the entity appears in.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Entity {
    pub entity_id: String,
    pub canonical_name: String,
    pub mentions: Vec<String>,
}

/// A relational triple grounded in one passage. `text` is the rendered
/// "subject relation object" string that gets embedded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Fact {
    pub fact_id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub source_passage: String,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct ChunkConfig {
    /// Maximum passage length in characters.
    pub max_chars: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        // Sentence-boundary-preferred budget; large enough that a handful of
        // sentences stay together, small enough to keep retrieval granular.
        ChunkConfig { max_chars: 1200 }
    }
}

/// Splits text into sentence slices. A sentence ends at `.`, `!` or `?`
/// followed by whitespace or end-of-text; trailing fragments count too.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'.' || b == b'!' || b == b'?' {
            let at_end = i + 1 == bytes.len();
            let next_ws = !at_end && bytes[i + 1].is_ascii_whitespace();
            if at_end || next_ws {
                let s = text[start..=i].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = i + 1;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Hard-splits an over-long sentence into pieces of at most `max_chars`
/// characters, respecting UTF-8 boundaries.
fn hard_split(sentence: &str, max_chars: usize) -> Vec<String> {
    let chars: Vec<char> = sentence.chars().collect();
    chars
        .chunks(max_chars)
        .map(|c| c.iter().collect())
        .collect()
}

/// Chunks one document into passages.
///
/// Sentences are packed greedily; a sentence that would overflow the budget
/// starts a new passage, and a single sentence longer than the budget is
/// hard-split. Joining the passage texts back together reproduces the
/// document text modulo boundary whitespace.
pub fn chunk_document(doc: &Document, cfg: &ChunkConfig) -> Result<Vec<Passage>> {
    if cfg.max_chars == 0 {
        return Err(EngineError::Config("chunk max_chars must be > 0".into()));
    }
    let mut chunks: Vec<String> = Vec::new();
    let mut current = String::new();
    for sentence in split_sentences(&doc.text) {
        let sentence_len = sentence.chars().count();
        if sentence_len > cfg.max_chars {
            if !current.is_empty() {
                chunks.push(std::mem::take(&mut current));
            }
            chunks.extend(hard_split(sentence, cfg.max_chars));
            continue;
        }
        if current.is_empty() {
            current.push_str(sentence);
        } else if current.chars().count() + 1 + sentence_len <= cfg.max_chars {
            current.push(' ');
            current.push_str(sentence);
        } else {
            chunks.push(std::mem::take(&mut current));
            current.push_str(sentence);
        }
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| Passage {
            passage_id: format!("{}#{}", doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text,
        })
        .collect())
}

/// Canonicalizes an entity surface form: lower-case, trim, collapse internal
/// whitespace. Deterministic and idempotent; rejects all-whitespace input.
pub fn normalize_entity(surface: &str) -> Result<String> {
    let collapsed: Vec<&str> = surface.split_whitespace().collect();
    if collapsed.is_empty() {
        return Err(EngineError::EmptyInput(
            "entity surface form is empty or all whitespace".into(),
        ));
    }
    Ok(collapsed.join(" ").to_lowercase())
}

/// Raw per-passage extraction output: surface-form entities and triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub entities: Vec<String>,
    pub triples: Vec<(String, String, String)>,
}

/// Extracts entities and relational triples from one passage.
///
/// Implementations must tolerate concurrent calls.
pub trait Extractor: Send + Sync {
    fn fingerprint(&self) -> String;
    fn extract(&self, passage_id: &str, text: &str) -> Result<Extraction>;
}

/// Runs an extractor and enforces the contract that every triple endpoint
/// appears in the entity list (missing endpoints are appended).
pub fn extract(passage: &Passage, extractor: &dyn Extractor) -> Result<Extraction> {
    let mut ex = extractor.extract(&passage.passage_id, &passage.text)?;
    for (s, _, o) in &ex.triples {
        if !ex.entities.iter().any(|e| e == s) {
            ex.entities.push(s.clone());
        }
        if !ex.entities.iter().any(|e| e == o) {
            ex.entities.push(o.clone());
        }
    }
    Ok(ex)
}

/// Deterministic offline extractor.
///
/// Rules: within each sentence, a token is "capitalized" when its first
/// alphabetic character is upper-case after stripping surrounding
/// punctuation; maximal runs of capitalized tokens form entity mentions
/// (a trailing punctuation mark such as a comma ends the run); each
/// consecutive mention pair with a non-empty intervening lower-case span
/// yields one triple.
#[derive(Debug, Clone, Default)]
pub struct StubExtractor;

struct Token<'a> {
    stripped: &'a str,
    capitalized: bool,
    breaks_run: bool,
}

fn tokenize(sentence: &str) -> Vec<Token<'_>> {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let stripped = raw.trim_matches(|ch: char| !ch.is_alphanumeric());
            if stripped.is_empty() {
                return None;
            }
            let capitalized = stripped.chars().next().is_some_and(|ch| ch.is_uppercase());
            let breaks_run = raw
                .trim_end_matches(['"', '\'', ')', ']'])
                .ends_with([',', ';', ':', '.', '!', '?']);
            Some(Token {
                stripped,
                capitalized,
                breaks_run,
            })
        })
        .collect()
}

impl Extractor for StubExtractor {
    fn fingerprint(&self) -> String {
        "stub-extractor/v1".into()
    }

    fn extract(&self, _passage_id: &str, text: &str) -> Result<Extraction> {
        let mut entities: Vec<String> = Vec::new();
        let mut triples = Vec::new();
        for sentence in split_sentences(text) {
            let tokens = tokenize(sentence);
            // Mentions as (surface, token range); gaps between consecutive
            // mentions become relations.
            let mut mentions: Vec<(String, usize, usize)> = Vec::new();
            let mut i = 0;
            while i < tokens.len() {
                if tokens[i].capitalized {
                    let start = i;
                    let mut words = vec![tokens[i].stripped];
                    while i + 1 < tokens.len() && tokens[i + 1].capitalized && !tokens[i].breaks_run
                    {
                        i += 1;
                        words.push(tokens[i].stripped);
                    }
                    mentions.push((words.join(" "), start, i));
                }
                i += 1;
            }
            for (surface, _, _) in &mentions {
                if !entities.iter().any(|e| e == surface) {
                    entities.push(surface.clone());
                }
            }
            for pair in mentions.windows(2) {
                let (_, _, prev_end) = &pair[0];
                let (_, next_start, _) = &pair[1];
                let span: Vec<&str> = (*prev_end + 1..*next_start)
                    .map(|k| tokens[k].stripped)
                    .collect();
                if !span.is_empty() {
                    triples.push((pair[0].0.clone(), span.join(" "), pair[1].0.clone()));
                }
            }
        }
        Ok(Extraction { entities, triples })
    }
}

#[derive(Serialize)]
struct ExtractRequest<'a> {
    passage_id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct ExtractResponse {
    entities: Vec<String>,
    triples: Vec<(String, String, String)>,
}

/// HTTP extractor client: `POST url` with `{"passage_id", "text"}`, expecting
/// `{"entities": [...], "triples": [[s, r, o], ...]}`.
pub struct HttpExtractor {
    url: String,
    credential_env: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpExtractor {
    pub fn new(url: &str, credential_env: Option<String>) -> Self {
        HttpExtractor {
            url: url.to_string(),
            credential_env,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Extractor for HttpExtractor {
    fn fingerprint(&self) -> String {
        format!("http/{}", self.url)
    }

    fn extract(&self, passage_id: &str, text: &str) -> Result<Extraction> {
        let mut req = self
            .client
            .post(&self.url)
            .json(&ExtractRequest { passage_id, text });
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
                "extractor returned HTTP {status}: {body}"
            )));
        }
        let parsed: ExtractResponse =
            serde_json::from_str(&body).map_err(|e| EngineError::MalformedPayload {
                msg: e.to_string(),
                raw: body,
            })?;
        Ok(Extraction {
            entities: parsed.entities,
            triples: parsed.triples,
        })
    }
}
