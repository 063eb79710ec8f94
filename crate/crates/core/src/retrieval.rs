//! Embeddings, cosine similarity and exact top-k retrieval of proof
//! statements.
//!
//! Everything here is generic over the [`Scalar`] type so callers can keep
//! embeddings in `f32` or `f64`. The index is an exhaustive scan: scores for
//! every record are computed and the `k` best are selected under a total
//! order (score descending, then insertion order), so results are exact and
//! reproducible.

use std::cmp::Ordering;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusRecord;
use crate::proof_ast::Obligation;
use crate::scalar::Scalar;
use crate::text::normalize_whitespace;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("record {0} has no embedding")]
    MissingEmbedding(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

/// A dense embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Embedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    /// The vector scaled to unit length (unchanged when all-zero).
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n.is_zero() {
            return self.clone();
        }
        Self::new(self.values.iter().map(|v| *v / n).collect())
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::new(self.values.iter().map(|v| *v * factor).collect())
    }

    pub fn cast<U: Scalar>(&self) -> Embedding<U> {
        Embedding::new(
            self.values
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        )
    }
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity<T: Scalar>(a: &Embedding<T>, b: &Embedding<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na.is_zero() || nb.is_zero() {
        return Err(RetrievalError::ZeroVector);
    }
    let s = a.dot(b) / (na * nb);
    Ok(s.max(-T::one()).min(T::one()))
}

/// Maps text to a fixed-dimension vector.
pub trait Embedder<T: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding<T>>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<T>>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

pub const DEFAULT_TRIGRAM_DIMENSION: usize = 256;

/// Offline embedder: hashed character-trigram term frequencies, L2-normalized.
///
/// Input is whitespace-normalized first and framed with boundary markers, so
/// every nonempty text yields at least one trigram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_TRIGRAM_DIMENSION,
        }
    }
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension: dimension.max(1),
        }
    }
}

fn fnv1a(chars: &[char]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut buf = [0u8; 4];
    for c in chars {
        for b in c.encode_utf8(&mut buf).bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

impl<T: Scalar> Embedder<T> for TrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding<T>> {
        let normalized = normalize_whitespace(text);
        if normalized.is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut framed = vec!['\u{2}'];
        framed.extend(normalized.chars());
        framed.push('\u{3}');
        let mut counts = vec![0u32; self.dimension];
        for w in framed.windows(3) {
            counts[(fnv1a(w) % self.dimension as u64) as usize] += 1;
        }
        let v = Embedding::new(counts.into_iter().map(|c| T::from_f64_lossy(f64::from(c))).collect());
        Ok(v.normalized())
    }
}

/// Client for an OpenAI-style `/embeddings` endpoint
/// (`{"model", "input": [..]}` → `{"data": [{"index", "embedding"}]}`).
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    batch_size: usize,
    max_in_flight: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| RetrievalError::EmbedderUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            model: model.into(),
            api_key: None,
            dimension,
            batch_size: 64,
            max_in_flight: 4,
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_batching(mut self, batch_size: usize, max_in_flight: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let unavailable = |e: String| RetrievalError::EmbedderUnavailable(e);
        let mut req = self.client.post(&self.url).json(&EmbedRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(unavailable(format!("HTTP {status}")));
        }
        let mut body: EmbedResponse = resp.json().map_err(|e| unavailable(e.to_string()))?;
        if body.data.len() != texts.len() {
            return Err(unavailable(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                body.data.len()
            )));
        }
        body.data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
        Ok(body.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl<T: Scalar> Embedder<T> for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding<T>> {
        let mut v = self.embed_batch(&[text])?;
        Ok(v.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<T>>> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(RetrievalError::EmptyText);
        }
        let chunks: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut raw: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for wave in chunks.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave.iter().map(|c| s.spawn(|| self.request(c))).collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(RetrievalError::EmbedderUnavailable("worker panicked".into())))
                    })
                    .collect()
            });
            for r in results {
                raw.extend(r?);
            }
        }
        raw.into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(RetrievalError::DimensionMismatch {
                        left: v.len(),
                        right: self.dimension,
                    });
                }
                Ok(Embedding::new(v.into_iter().map(T::from_f64_lossy).collect()))
            })
            .collect()
    }
}

/// One retrieved record and its similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord<T: Scalar> {
    pub record: CorpusRecord<T>,
    pub score: T,
}

/// The `k` most similar statements, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet<T: Scalar> {
    pub entries: Vec<ScoredRecord<T>>,
    pub k: usize,
}

impl<T: Scalar> ReferenceSet<T> {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
            k: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.record.statement.text.as_str())
    }
}

/// Text used to embed an obligation for retrieval.
pub fn obligation_query(obl: &Obligation) -> String {
    obl.normalized_assertion()
}

/// An immutable exhaustive-scan index over embedded records.
#[derive(Debug, Clone)]
pub struct RetrievalIndex<T: Scalar> {
    records: Vec<CorpusRecord<T>>,
    dimension: usize,
}

impl<T: Scalar> RetrievalIndex<T> {
    /// Builds an index; every record must already carry an embedding of one
    /// common dimension.
    pub fn new(records: Vec<CorpusRecord<T>>) -> Result<Self> {
        let mut dimension = None;
        for r in &records {
            let e = r
                .embedding
                .as_ref()
                .ok_or_else(|| RetrievalError::MissingEmbedding(r.id.clone()))?;
            match dimension {
                None => dimension = Some(e.dim()),
                Some(d) if d != e.dim() => {
                    return Err(RetrievalError::DimensionMismatch {
                        left: d,
                        right: e.dim(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(Self {
            records,
            dimension: dimension.unwrap_or(0),
        })
    }

    /// Builds an index, embedding records that lack an embedding.
    pub fn build(mut records: Vec<CorpusRecord<T>>, embedder: &dyn Embedder<T>) -> Result<Self> {
        let missing: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].embedding.is_none())
            .collect();
        if !missing.is_empty() {
            let texts: Vec<&str> = missing
                .iter()
                .map(|&i| records[i].statement.normalized_text.as_str())
                .collect();
            let vectors = embedder.embed_batch(&texts)?;
            for (i, v) in missing.into_iter().zip(vectors) {
                records[i].embedding = Some(v);
            }
        }
        Self::new(records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[CorpusRecord<T>] {
        &self.records
    }

    /// The `k` records most similar to `query`.
    pub fn search(&self, query: &Embedding<T>, k: usize) -> Result<ReferenceSet<T>> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.records.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut scored: Vec<(usize, T)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let e = r.embedding.as_ref().expect("checked at construction");
                cosine_similarity(query, e).map(|s| (i, s))
            })
            .collect::<Result<_>>()?;
        let order = |a: &(usize, T), b: &(usize, T)| -> Ordering {
            let (sa, sb) = (a.1.to_f64().unwrap_or(f64::NAN), b.1.to_f64().unwrap_or(f64::NAN));
            sb.total_cmp(&sa).then(a.0.cmp(&b.0))
        };
        let take = k.min(scored.len());
        if take < scored.len() {
            scored.select_nth_unstable_by(take - 1, order);
            scored.truncate(take);
        }
        scored.sort_by(order);
        Ok(ReferenceSet {
            entries: scored
                .into_iter()
                .map(|(i, score)| ScoredRecord {
                    record: self.records[i].clone(),
                    score,
                })
                .collect(),
            k,
        })
    }

    pub fn search_text(&self, query: &str, k: usize, embedder: &dyn Embedder<T>) -> Result<ReferenceSet<T>> {
        let q = embedder.embed(&normalize_whitespace(query))?;
        self.search(&q, k)
    }
}

/// Embeds `query` and returns the `k` most similar records of `corpus`.
pub fn top_k<T: Scalar>(
    query: &str,
    corpus: &[CorpusRecord<T>],
    k: usize,
    embedder: &dyn Embedder<T>,
) -> Result<ReferenceSet<T>> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    RetrievalIndex::build(corpus.to_vec(), embedder)?.search_text(query, k, embedder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proof_ast::{ProofStatement, StatementSource};

    fn e(v: &[f64]) -> Embedding<f64> {
        Embedding::new(v.to_vec())
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&e(&[1.0, 0.0]), &e(&[-1.0, 0.0])).unwrap(), -1.0);
        assert!((cosine_similarity(&e(&[1.0, 2.0, 2.0]), &e(&[2.0, 4.0, 4.0])).unwrap() - 1.0).abs() < 1e-12);
        let a = e(&[0.3, -1.7, 2.2]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&e(&[1.0]), &e(&[1.0, 2.0])),
            Err(RetrievalError::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(
            cosine_similarity(&e(&[0.0, 0.0]), &e(&[1.0, 2.0])),
            Err(RetrievalError::ZeroVector)
        ));
    }

    #[test]
    fn cosine_in_f32() {
        let a = Embedding::<f32>::new(vec![1.0, 2.0, 2.0]);
        let b = a.scaled(3.0);
        assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trigram_embedder_properties() {
        let emb = TrigramEmbedder::default();
        let v: Embedding<f64> = emb.embed("x + x").unwrap();
        assert_eq!(v.dim(), 256);
        assert!(!v.is_zero());
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let again: Embedding<f64> = emb.embed("x + x").unwrap();
        assert_eq!(v, again);
        let spaced: Embedding<f64> = emb.embed("  x\n+\tx ").unwrap();
        assert_eq!(v, spaced);
        let one: Embedding<f64> = emb.embed("x").unwrap();
        assert!(!one.is_zero());
        assert!(matches!(Embedder::<f64>::embed(&emb, "  "), Err(RetrievalError::EmptyText)));
    }

    fn record(text: &str) -> CorpusRecord<f64> {
        CorpusRecord::new(ProofStatement::new(
            text,
            None,
            StatementSource {
                path: "t.tla".into(),
                theorem: None,
            },
        ))
    }

    #[test]
    fn top_k_ranks_exact_match_first() {
        let corpus: Vec<_> = ["x + x = 2 * x OBVIOUS", "Init => i = 1 BY DEF Init", "Cardinality({}) = 0 OBVIOUS"]
            .into_iter()
            .map(record)
            .collect();
        let emb = TrigramEmbedder::default();
        let refs = top_k("Init => i = 1 BY DEF Init", &corpus, 2, &emb).unwrap();
        assert_eq!(refs.len(), 2);
        assert_eq!(refs.entries[0].record.statement.text, "Init => i = 1 BY DEF Init");
        assert!((refs.entries[0].score - 1.0).abs() < 1e-12);
        let all = top_k("x", &corpus, 10, &emb).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.entries.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(matches!(top_k::<f64>("x", &[], 1, &emb), Err(RetrievalError::EmptyCorpus)));
        assert!(matches!(top_k("x", &corpus, 0, &emb), Err(RetrievalError::InvalidK)));
    }

    #[test]
    fn index_requires_uniform_embeddings() {
        let mut a = record("a");
        a.embedding = Some(e(&[1.0, 0.0]));
        let mut b = record("b");
        b.embedding = Some(e(&[1.0]));
        assert!(matches!(
            RetrievalIndex::new(vec![a.clone(), b]),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            RetrievalIndex::new(vec![a, record("c")]),
            Err(RetrievalError::MissingEmbedding(_))
        ));
    }
}
