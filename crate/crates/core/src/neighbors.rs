//! Exact cosine-similarity nearest neighbors over the corpus embeddings.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::label::Label;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NeighborError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("k = {k} exceeds the {available} other points in the corpus")]
    KTooLarge { k: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
    pub label: Label,
}

/// The two neighbor boxes shown for a query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub query_id: String,
    /// Most similar points whose gold label differs from the query's.
    pub different_label: Vec<Neighbor>,
    /// Most similar points sharing the query's gold label.
    pub same_label: Vec<Neighbor>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, NeighborError> {
    if a.len() != b.len() {
        return Err(NeighborError::DimensionMismatch(a.len(), b.len()));
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(NeighborError::ZeroNorm);
    }
    Ok(cosine_from_parts(dot(a, b), na, nb))
}

/// The norm product is formed in a fixed operand order so the result is
/// exactly symmetric in `a` and `b`.
fn cosine_from_parts(dot: f64, na: f64, nb: f64) -> f64 {
    let (lo, hi) = if na <= nb { (na, nb) } else { (nb, na) };
    (dot / (lo * hi)).clamp(-1.0, 1.0)
}

/// Descending similarity, then ascending id.
fn rank(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.id.cmp(&b.id))
}

/// Keeps the `k` best candidates in rank order.
fn top_k(mut candidates: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    if k == 0 {
        return Vec::new();
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank);
    candidates
}

/// Full-scan index over a borrowed corpus. Norms are precomputed once.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    corpus: &'a Corpus,
    norms: Vec<f64>,
}

impl<'a> NeighborIndex<'a> {
    pub fn build(corpus: &'a Corpus) -> Self {
        let norms = (0..corpus.len())
            .map(|i| {
                let v = corpus.embedding_at(i);
                dot(v, v).sqrt()
            })
            .collect();
        Self { corpus, norms }
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    fn query_position(&self, query_id: &str, k: usize) -> Result<usize, NeighborError> {
        let pos = self
            .corpus
            .position(query_id)
            .ok_or_else(|| NeighborError::UnknownId(query_id.to_string()))?;
        let available = self.corpus.len() - 1;
        if k > available {
            return Err(NeighborError::KTooLarge { k, available });
        }
        Ok(pos)
    }

    /// Similarity of the query to every other point, in corpus order.
    fn scan(&self, pos: usize) -> impl Iterator<Item = Neighbor> + '_ {
        let q = self.corpus.embedding_at(pos);
        let nq = self.norms[pos];
        (0..self.corpus.len())
            .filter(move |&i| i != pos)
            .map(move |i| {
                let p = self.corpus.point_at(i);
                Neighbor {
                    id: p.id.clone(),
                    similarity: cosine_from_parts(
                        dot(q, self.corpus.embedding_at(i)),
                        nq,
                        self.norms[i],
                    ),
                    label: p.gold_label,
                }
            })
    }

    /// The `k` most similar other points; ties broken by id.
    pub fn knn(&self, query_id: &str, k: usize) -> Result<Vec<Neighbor>, NeighborError> {
        let pos = self.query_position(query_id, k)?;
        Ok(top_k(self.scan(pos).collect(), k))
    }

    /// Top `k_each` neighbors with a different gold label and top `k_each`
    /// with the same gold label. Either list may come back shorter.
    pub fn label_split(&self, query_id: &str, k_each: usize) -> Result<NeighborSet, NeighborError> {
        let pos = self.query_position(query_id, k_each)?;
        let gold = self.corpus.point_at(pos).gold_label;
        let (same, different): (Vec<_>, Vec<_>) = self.scan(pos).partition(|n| n.label == gold);
        Ok(NeighborSet {
            query_id: query_id.to_string(),
            different_label: top_k(different, k_each),
            same_label: top_k(same, k_each),
        })
    }
}
