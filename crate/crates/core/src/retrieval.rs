//! Exact top-k search and Multi-Query Retrieval.
//!
//! MQR retrieves the top `k` rows for each query and keeps a row when its
//! cosine with that query reaches the mean pairwise cosine among the
//! queries. Every score in this module goes through [`cosine`]'s kernel so a
//! row that equals a query scores exactly what the threshold would.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use crate::corpus::DataCollection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredHit {
    pub passage_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MqrResult {
    pub threshold: f64,
    /// Retained rows, deduplicated in first-encounter order.
    pub kept: Vec<usize>,
    pub per_query_hits: Vec<Vec<ScoredHit>>,
}

impl MqrResult {
    /// Number of hits per query that passed the threshold, before dedup.
    pub fn per_query_kept(&self) -> Vec<usize> {
        self.per_query_hits
            .iter()
            .map(|hits| hits.iter().filter(|h| h.score >= self.threshold).count())
            .collect()
    }
}

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum()
}

fn squared_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum()
}

/// `u.v / sqrt(|u|^2 |v|^2)`: a single square root makes `cos(u, u)` exactly 1.
#[inline]
fn cosine_with_sq_norms(u: &[f32], u_sq: f64, v: &[f32], v_sq: f64) -> f64 {
    (dot(u, v) / (u_sq * v_sq).sqrt()).clamp(-1.0, 1.0)
}

fn checked_sq_norm(v: &[f32], row: usize) -> Result<f64> {
    let n = squared_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm { row });
    }
    Ok(n)
}

pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = checked_sq_norm(u, 0)?;
    let nv = checked_sq_norm(v, 1)?;
    Ok(cosine_with_sq_norms(u, nu, v, nv))
}

fn rank_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.passage_index.cmp(&b.passage_index))
}

/// Exhaustive top-k scan, sorted by score descending then row ascending.
pub fn top_k(collection: &DataCollection, query: &[f32], k: usize) -> Result<Vec<ScoredHit>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if query.len() != collection.dim() {
        return Err(Error::DimMismatch {
            expected: collection.dim(),
            actual: query.len(),
        });
    }
    let matrix = collection.embeddings();
    if !matrix.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let q_sq = checked_sq_norm(query, 0)?;
    let mut hits: Vec<ScoredHit> = matrix
        .iter_rows()
        .enumerate()
        .map(|(i, row)| ScoredHit {
            passage_index: i,
            score: cosine_with_sq_norms(query, q_sq, row, squared_norm(row)),
        })
        .collect();
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, rank_order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(rank_order);
    Ok(hits)
}

/// Mean cosine over all unordered pairs of query vectors.
pub fn compute_threshold<V: AsRef<[f32]>>(queries: &[V]) -> Result<f64> {
    if queries.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least 2 queries are required, got {}",
            queries.len()
        )));
    }
    let dim = queries[0].as_ref().len();
    let mut norms = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let q = q.as_ref();
        if q.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: q.len(),
            });
        }
        norms.push(checked_sq_norm(q, i)?);
    }
    let n = queries.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum +=
                cosine_with_sq_norms(queries[i].as_ref(), norms[i], queries[j].as_ref(), norms[j]);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((sum / pairs).clamp(-1.0, 1.0))
}

/// Multi-Query Retrieval over a unit-normalized collection.
pub fn mqr<V: AsRef<[f32]>>(
    collection: &DataCollection,
    queries: &[V],
    k: usize,
) -> Result<MqrResult> {
    let threshold = compute_threshold(queries)?;
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut per_query_hits = Vec::with_capacity(queries.len());
    for q in queries {
        let hits = top_k(collection, q.as_ref(), k)?;
        for hit in &hits {
            if hit.score >= threshold && seen.insert(hit.passage_index) {
                kept.push(hit.passage_index);
            }
        }
        per_query_hits.push(hits);
    }
    Ok(MqrResult {
        threshold,
        kept,
        per_query_hits,
    })
}
