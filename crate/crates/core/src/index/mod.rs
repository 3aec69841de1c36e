//! Exact cosine top-k retrieval over embedded chunks.
//!
//! The index is a full scan: every search scores every record. Records are
//! keyed by chunk id in a `BTreeMap`, so iteration (and therefore the
//! persisted file) is always in chunk id order.

mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use persist::{IndexHeader, FORMAT_VERSION};

pub const DEFAULT_TOP_K: usize = 5;

/// What a chunk holds: a span of document text or a table summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    Text,
    TableDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub chunk_id: String,
    pub vector: Vec<f64>,
    pub source_path: String,
    pub kind: ChunkKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
    pub source_path: String,
    pub kind: ChunkKind,
    pub text: String,
}

/// Cosine similarity `dot(a, b) / (|a| * |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::InvalidInput("zero-norm vector".into()));
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

fn validate_vector(vector: &[f64]) -> Result<()> {
    if vector.is_empty() {
        return Err(Error::InvalidInput("vector has dimension 0".into()));
    }
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "vector has non-finite components".into(),
        ));
    }
    if vector.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidInput("zero-norm vector".into()));
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
struct Inner {
    dimension: Option<usize>,
    records: BTreeMap<String, EmbeddingRecord>,
}

/// Brute-force vector index guarded by a reader-writer lock: any number of
/// concurrent searches, or one writer.
#[derive(Debug, Default)]
pub struct VectorIndex {
    inner: RwLock<Inner>,
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vector dimension, fixed by the first upsert.
    pub fn dimension(&self) -> Option<usize> {
        self.read().dimension
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.read().records.contains_key(chunk_id)
    }

    pub fn get(&self, chunk_id: &str) -> Option<EmbeddingRecord> {
        self.read().records.get(chunk_id).cloned()
    }

    /// Chunk ids in ascending order.
    pub fn chunk_ids(&self) -> Vec<String> {
        self.read().records.keys().cloned().collect()
    }

    /// Inserts or replaces a record. Returns whether a record with the same
    /// chunk id already existed.
    pub fn upsert(&self, record: EmbeddingRecord) -> Result<bool> {
        validate_vector(&record.vector)?;
        let mut inner = self.write();
        match inner.dimension {
            Some(dim) if dim != record.vector.len() => {
                return Err(Error::InvalidInput(format!(
                    "record {} has dimension {}, index has {}",
                    record.chunk_id,
                    record.vector.len(),
                    dim
                )));
            }
            Some(_) => {}
            None => inner.dimension = Some(record.vector.len()),
        }
        Ok(inner
            .records
            .insert(record.chunk_id.clone(), record)
            .is_some())
    }

    /// The `k` records most similar to `query`, best first. Equal scores are
    /// ordered by chunk id ascending.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let inner = self.read();
        let Some(dim) = inner.dimension else {
            return Ok(Vec::new());
        };
        if query.len() != dim {
            return Err(Error::InvalidInput(format!(
                "query has dimension {}, index has {}",
                query.len(),
                dim
            )));
        }
        validate_vector(query)?;

        let mut scored = inner
            .records
            .values()
            .map(|r| Ok((cosine_similarity(query, &r.vector)?, r)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|(sa, ra), (sb, rb)| {
            sb.partial_cmp(sa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ra.chunk_id.cmp(&rb.chunk_id))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, r)| SearchHit {
                chunk_id: r.chunk_id.clone(),
                score,
                source_path: r.source_path.clone(),
                kind: r.kind,
                text: r.text.clone(),
            })
            .collect())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            chunk_id: id.into(),
            vector: v,
            source_path: format!("{id}.txt"),
            kind: ChunkKind::Text,
            text: id.into(),
        }
    }

    #[test]
    fn cosine_identity_and_orthogonality() {
        let s = cosine_similarity(&[0.6, 0.8], &[0.6, 0.8]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn cosine_diagonal() {
        let s = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_bad_input() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn upsert_reports_replacement() {
        let idx = VectorIndex::new();
        assert!(!idx.upsert(rec("a", vec![1.0, 0.0])).unwrap());
        assert!(idx.upsert(rec("a", vec![0.0, 1.0])).unwrap());
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.get("a").unwrap().vector, vec![0.0, 1.0]);
    }

    #[test]
    fn upsert_dimension_mismatch() {
        let idx = VectorIndex::new();
        idx.upsert(rec("a", vec![1.0; 256])).unwrap();
        assert!(matches!(
            idx.upsert(rec("b", vec![1.0; 3])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn upsert_rejects_zero_and_nan() {
        let idx = VectorIndex::new();
        assert!(idx.upsert(rec("z", vec![0.0, 0.0])).is_err());
        assert!(idx.upsert(rec("n", vec![f64::NAN, 1.0])).is_err());
        assert!(idx.is_empty());
    }

    #[test]
    fn search_small_index_and_exact_match() {
        let idx = VectorIndex::new();
        idx.upsert(rec("a", vec![1.0, 0.0])).unwrap();
        idx.upsert(rec("b", vec![0.3, 0.7])).unwrap();
        let hits = idx.search(&[0.3, 0.7], 5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].chunk_id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_ties_break_on_chunk_id() {
        let idx = VectorIndex::new();
        idx.upsert(rec("c", vec![1.0, 0.0])).unwrap();
        idx.upsert(rec("a", vec![2.0, 0.0])).unwrap();
        idx.upsert(rec("b", vec![3.0, 0.0])).unwrap();
        let ids: Vec<_> = idx
            .search(&[1.0, 0.0], 3)
            .unwrap()
            .into_iter()
            .map(|h| h.chunk_id)
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn search_empty_index_and_bad_k() {
        let idx = VectorIndex::new();
        assert!(idx.search(&[1.0], 5).unwrap().is_empty());
        assert!(idx.search(&[1.0], 0).is_err());
        idx.upsert(rec("a", vec![1.0, 0.0])).unwrap();
        assert!(idx.search(&[1.0, 0.0, 0.0], 1).is_err());
    }
}
