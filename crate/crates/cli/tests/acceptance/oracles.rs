//! Brute-force reference computations, written independently of the
//! library's retrieval and training code.

use std::collections::BTreeSet;

use fewtopic_core::corpus::{bind, normalize_rows, DataCollection, EmbeddingMatrix, PassageRecord};
use fewtopic_core::Rng;
use rand::Rng as _;

pub fn random_rows(rng: &mut Rng, rows: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..rows)
        .map(|_| loop {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            if v.iter().any(|x| x.abs() > 1e-3) {
                break v;
            }
        })
        .collect()
}

pub fn collection(rows: &[Vec<f32>]) -> DataCollection {
    let dim = rows[0].len();
    let m = normalize_rows(&EmbeddingMatrix::from_rows(rows, dim).unwrap()).unwrap();
    let passages = (0..rows.len())
        .map(|i| PassageRecord {
            id: format!("r{i}"),
            text: format!("row {i}"),
            meta: None,
        })
        .collect();
    bind(passages, m).unwrap()
}

pub fn cos(u: &[f32], v: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (f64::from(*a), f64::from(*b));
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// Every row scored, sorted by score descending then row ascending, cut to `k`.
pub fn full_sort_top_k(c: &DataCollection, q: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..c.len()).map(|i| (i, cos(q, c.vector(i)))).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn pair_mean(queries: &[Vec<f32>]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..queries.len() {
        for j in i + 1..queries.len() {
            sum += cos(&queries[i], &queries[j]);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Rows whose score against some query reaches the pair-mean threshold
/// within that query's top `k`.
pub fn mqr_filter(c: &DataCollection, queries: &[Vec<f32>], k: usize) -> BTreeSet<usize> {
    let t = pair_mean(queries);
    queries
        .iter()
        .flat_map(|q| full_sort_top_k(c, q, k))
        .filter(|&(_, s)| s >= t)
        .map(|(i, _)| i)
        .collect()
}
