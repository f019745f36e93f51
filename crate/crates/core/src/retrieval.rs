//! Guideline retrieval: chunking, deterministic embeddings, and top-k search.
//!
//! The corpus is small (tens of chunks of clinical guidance), so the index
//! is a flat list scanned exhaustively. What matters here is determinism:
//! the default embedder is hash-based rather than learned, so identical
//! inputs produce identical rankings on every machine with no model files.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use thiserror::Error;

use crate::evidence::{EvidencePack, SchoolStatus};

/// Upper bound on chunk length, in characters.
pub const MAX_CHUNK_CHARS: usize = 500;
/// Number of chunks returned per query.
pub const TOP_K: usize = 2;
/// Upper bound on the combined length of retrieved chunk texts, in characters.
pub const MAX_RETRIEVED_CHARS: usize = 1200;
/// Dimensionality of the default hash embedding.
pub const EMBED_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("retrieval index is empty")]
    EmptyIndex,
    #[error("failed to read guideline corpus: {0}")]
    Io(#[from] std::io::Error),
}

/// A passage of guideline text small enough to drop into a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GuidelineChunk {
    pub id: usize,
    pub text: String,
    pub source_doc: String,
}

/// Text embedding backend. Implementations must be deterministic: the same
/// text maps to the same vector on every call.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Default embedding: feature hashing of lowercased word tokens.
///
/// Each token is FNV-1a hashed; the low bits pick a bucket and one more bit
/// picks a sign. No model weights, no I/O, fully reproducible.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(EMBED_DIM)
    }
}

fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for token in text.to_lowercase().split_whitespace() {
            let h = fnv1a32(token.as_bytes());
            let bucket = (h as usize) % self.dim;
            let sign = if (h >> 31) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        v
    }
}

fn l2_normalize(v: &mut [f32]) {
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Splits a document into chunks of at most `max_chars` characters.
///
/// Paragraph boundaries (blank lines) are preferred split points; a single
/// paragraph longer than the cap is hard-split on character boundaries.
/// Re-joining the chunks reproduces the document text up to the whitespace
/// that separated paragraphs.
pub fn chunk_document(doc: &str, max_chars: usize) -> Vec<String> {
    assert!(max_chars > 0, "chunk size must be positive");
    let mut chunks: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_chars = 0usize;

    let flush = |current: &mut String, current_chars: &mut usize, chunks: &mut Vec<String>| {
        if !current.is_empty() {
            chunks.push(std::mem::take(current));
            *current_chars = 0;
        }
    };

    for para in doc.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
        let para_chars = para.chars().count();
        if para_chars > max_chars {
            flush(&mut current, &mut current_chars, &mut chunks);
            let cs: Vec<char> = para.chars().collect();
            for piece in cs.chunks(max_chars) {
                chunks.push(piece.iter().collect());
            }
        } else if current.is_empty() {
            current.push_str(para);
            current_chars = para_chars;
        } else if current_chars + 2 + para_chars <= max_chars {
            current.push_str("\n\n");
            current.push_str(para);
            current_chars += 2 + para_chars;
        } else {
            flush(&mut current, &mut current_chars, &mut chunks);
            current.push_str(para);
            current_chars = para_chars;
        }
    }
    flush(&mut current, &mut current_chars, &mut chunks);
    chunks
}

/// Loads every `.txt` file under `dir` (sorted by file name) and chunks it.
/// Chunk ids are assigned globally in load order.
pub fn load_guideline_dir(dir: &Path, max_chars: usize) -> Result<Vec<GuidelineChunk>, RetrievalError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    paths.sort();
    let mut chunks = Vec::new();
    for path in paths {
        let doc = std::fs::read_to_string(&path)?;
        let source = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for text in chunk_document(&doc, max_chars) {
            chunks.push(GuidelineChunk {
                id: chunks.len(),
                text,
                source_doc: source.clone(),
            });
        }
    }
    Ok(chunks)
}

/// A query assembled from the rule table over season, weather, and schools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetrievalQuery {
    pub terms: Vec<String>,
    pub composed: String,
}

/// Rule table mapping (month, weather present, school status) to query terms.
///
/// Terms are appended in a fixed order: seasonal, then environmental, then
/// social. Months outside the two seasonal bands contribute no seasonal term,
/// and only in-session schools contribute the social term.
pub fn compose_query_terms(
    month: u32,
    weather_present: bool,
    school: Option<SchoolStatus>,
) -> Vec<&'static str> {
    let mut terms = Vec::new();
    match month {
        5..=7 => terms.push("HFMD peak season spring summer"),
        1..=2 => terms.push("winter low transmission"),
        _ => {}
    }
    if weather_present {
        terms.push("weather temperature impact transmission");
    }
    if school == Some(SchoolStatus::InSession) {
        terms.push("school in_session outbreak children");
    }
    terms
}

/// Composes the retrieval query for a forecast origin from its evidence pack.
pub fn compose_query(as_of: NaiveDate, pack: &EvidencePack) -> RetrievalQuery {
    let weather_present = pack.weather.iter().any(|w| w.has_data());
    let school = pack
        .events
        .iter()
        .filter(|e| e.week_start <= as_of)
        .max_by_key(|e| e.week_start)
        .map(|e| e.school_status);
    let terms: Vec<String> = compose_query_terms(as_of.month(), weather_present, school)
        .into_iter()
        .map(str::to_owned)
        .collect();
    let composed = terms.join(" ");
    RetrievalQuery { terms, composed }
}

/// Flat vector index over guideline chunks. Embeddings are L2-normalized at
/// insert time so dot products are cosine similarities.
pub struct VectorIndex {
    chunks: Vec<GuidelineChunk>,
    vectors: Vec<Vec<f32>>,
    dim: usize,
}

impl VectorIndex {
    pub fn build(chunks: Vec<GuidelineChunk>, embedder: &dyn EmbeddingProvider) -> Self {
        let dim = embedder.dim();
        let mut vectors = Vec::with_capacity(chunks.len());
        let mut renumbered = Vec::with_capacity(chunks.len());
        for (i, mut chunk) in chunks.into_iter().enumerate() {
            chunk.id = i;
            let mut v = embedder.embed(&chunk.text);
            debug_assert_eq!(v.len(), dim);
            l2_normalize(&mut v);
            vectors.push(v);
            renumbered.push(chunk);
        }
        VectorIndex {
            chunks: renumbered,
            vectors,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }

    pub fn chunks(&self) -> &[GuidelineChunk] {
        &self.chunks
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exhaustive top-k cosine retrieval.
///
/// Ties are broken toward the lower chunk id. The returned texts are
/// truncated so their combined character count stays within `max_chars`;
/// a chunk that would start past the budget is dropped entirely.
pub fn retrieve(
    index: &VectorIndex,
    query: &RetrievalQuery,
    k: usize,
    max_chars: usize,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<GuidelineChunk>, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let mut qv = embedder.embed(&query.composed);
    l2_normalize(&mut qv);

    let mut scored: Vec<(usize, f32)> = index
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, dot(&qv, v)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine scores are finite")
            .then(a.0.cmp(&b.0))
    });

    let mut out = Vec::new();
    let mut budget = max_chars;
    for &(i, _) in scored.iter().take(k) {
        if budget == 0 {
            break;
        }
        let mut chunk = index.chunks[i].clone();
        let len = chunk.text.chars().count();
        if len > budget {
            chunk.text = chunk.text.chars().take(budget).collect();
            budget = 0;
        } else {
            budget -= len;
        }
        out.push(chunk);
    }
    Ok(out)
}
