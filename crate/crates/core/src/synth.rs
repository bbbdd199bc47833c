//! Seeded synthetic embedding worlds.
//!
//! A world is a set of Gaussian clusters on the unit sphere. Cluster 0 is the
//! target topic; when configured, cluster 1 is a hard negative whose center
//! has a fixed cosine with the topic center. Every passage gets a short
//! pseudo-text drawn from its cluster's vocabulary, so keyword baselines have
//! something to match. Nothing here needs a real encoder.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{bind, normalize_rows, DataCollection, EmbeddingMatrix, PassageRecord};
use crate::dataset::{Query, QuerySet};
use crate::eval::{EvalExample, FineClass};
use crate::{derive_seed, seeded_rng};

pub const TOPIC: usize = 0;
pub const HARD_NEGATIVE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dim: usize,
    pub clusters: usize,
    pub per_cluster: usize,
    /// Per-coordinate standard deviation around a unit center.
    pub noise: f64,
    /// Cosine between the topic center and the hard-negative center.
    pub hard_negative_cosine: Option<f64>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            clusters: 8,
            per_cluster: 250,
            noise: 0.1,
            hard_negative_cosine: None,
            seed: 1234,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    config: WorldConfig,
    centers: Vec<Vec<f64>>,
    vocab: Vec<Vec<String>>,
}

const FILLER: &[&str] = &["the", "of", "and", "is", "a", "in", "with", "was"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mer", "vin", "sta", "ru", "del", "qua", "bex", "tor", "nim", "fal", "zu", "ond",
    "pri", "gal",
];

fn unit_gaussian(dim: usize, rng: &mut crate::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl SyntheticWorld {
    pub fn new(config: WorldConfig) -> Self {
        assert!(config.dim >= 2 && config.clusters >= 2, "degenerate world");
        let mut rng = seeded_rng(derive_seed(config.seed, 100));
        let mut centers: Vec<Vec<f64>> = (0..config.clusters)
            .map(|_| unit_gaussian(config.dim, &mut rng))
            .collect();
        if let Some(c) = config.hard_negative_cosine {
            // Gram-Schmidt a random direction against the topic center
            let topic = centers[TOPIC].clone();
            let r = unit_gaussian(config.dim, &mut rng);
            let proj: f64 = r.iter().zip(&topic).map(|(a, b)| a * b).sum();
            let orth: Vec<f64> = r.iter().zip(&topic).map(|(a, b)| a - proj * b).collect();
            let on = orth.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = (1.0 - c * c).max(0.0).sqrt();
            centers[HARD_NEGATIVE] = topic
                .iter()
                .zip(&orth)
                .map(|(t, o)| c * t + s * o / on)
                .collect();
        }
        let mut vocab: Vec<Vec<String>> = (0..config.clusters)
            .map(|_| {
                (0..6)
                    .map(|_| {
                        (0..3)
                            .map(|_| *SYLLABLES.choose(&mut rng).unwrap())
                            .collect::<String>()
                    })
                    .collect()
            })
            .collect();
        if config.hard_negative_cosine.is_some() {
            // related topics share part of their vocabulary
            let shared = vocab[TOPIC][..2].to_vec();
            vocab[HARD_NEGATIVE][..2].clone_from_slice(&shared);
        }
        Self {
            config,
            centers,
            vocab,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn has_hard_negative(&self) -> bool {
        self.config.hard_negative_cosine.is_some()
    }

    pub fn center(&self, cluster: usize) -> &[f64] {
        &self.centers[cluster]
    }

    /// Clusters that are neither the topic nor the hard negative.
    pub fn easy_clusters(&self) -> Vec<usize> {
        let first = if self.has_hard_negative() { 2 } else { 1 };
        (first..self.config.clusters).collect()
    }

    pub fn sample(&self, cluster: usize, rng: &mut crate::Rng) -> Vec<f32> {
        let noise = self.config.noise;
        let v: Vec<f64> = self.centers[cluster]
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(rng);
                c + noise * z
            })
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| (x / n) as f32).collect()
    }

    pub fn text(&self, cluster: usize, rng: &mut crate::Rng) -> String {
        let words = &self.vocab[cluster];
        let mut out: Vec<&str> = Vec::with_capacity(7);
        for i in 0..6 {
            if i % 2 == 0 {
                out.push(words.choose(rng).unwrap());
            } else {
                out.push(FILLER.choose(rng).unwrap());
            }
        }
        let mut s = out.join(" ");
        s.push('.');
        s
    }

    /// The passage corpus (unit-normalized) and each row's cluster.
    pub fn corpus(&self) -> (DataCollection, Vec<usize>) {
        let mut rng = seeded_rng(derive_seed(self.config.seed, 101));
        let mut clusters: Vec<usize> = (0..self.config.clusters)
            .flat_map(|c| std::iter::repeat_n(c, self.config.per_cluster))
            .collect();
        clusters.shuffle(&mut rng);
        let mut data = Vec::with_capacity(clusters.len() * self.config.dim);
        let mut passages = Vec::with_capacity(clusters.len());
        for (i, &c) in clusters.iter().enumerate() {
            data.extend(self.sample(c, &mut rng));
            passages.push(PassageRecord {
                id: format!("p{i:06}"),
                text: self.text(c, &mut rng),
                meta: Some([("cluster".to_string(), c.to_string())].into()),
            });
        }
        let matrix = EmbeddingMatrix::new(clusters.len(), self.config.dim, data, false)
            .and_then(|m| normalize_rows(&m))
            .expect("synthetic rows are finite and nonzero");
        let collection = bind(passages, matrix).expect("counts agree");
        (collection, clusters)
    }

    /// Positive queries from the topic cluster and negative queries from the
    /// hard-negative cluster (or, without one, from easy clusters).
    pub fn queryset(&self, positives: usize, negatives: usize, seed: u64) -> QuerySet {
        let mut rng = seeded_rng(derive_seed(seed, 102));
        let positive_queries = (0..positives)
            .map(|_| Query {
                text: self.text(TOPIC, &mut rng),
                vector: self.sample(TOPIC, &mut rng),
            })
            .collect();
        let easy = self.easy_clusters();
        let negative_queries = (0..negatives)
            .map(|i| {
                let c = if self.has_hard_negative() {
                    HARD_NEGATIVE
                } else {
                    easy[i % easy.len()]
                };
                Query {
                    text: self.text(c, &mut rng),
                    vector: self.sample(c, &mut rng),
                }
            })
            .collect();
        QuerySet {
            topic: "cluster-0".into(),
            positive_queries,
            negative_queries,
        }
    }

    /// Fresh held-out examples: `positives` from the topic, `easy` spread
    /// over easy clusters, `hard` from the hard-negative cluster.
    pub fn eval_set(
        &self,
        positives: usize,
        easy: usize,
        hard: usize,
        seed: u64,
    ) -> Vec<EvalExample> {
        assert!(
            hard == 0 || self.has_hard_negative(),
            "world has no hard-negative cluster"
        );
        let mut rng = seeded_rng(derive_seed(seed, 103));
        let easy_clusters = self.easy_clusters();
        let mut out = Vec::with_capacity(positives + easy + hard);
        let mut push = |cluster: usize, fine_class: FineClass, rng: &mut crate::Rng| {
            out.push(EvalExample {
                vector: self.sample(cluster, rng),
                text: self.text(cluster, rng),
                fine_class,
            });
        };
        for _ in 0..positives {
            push(TOPIC, FineClass::P, &mut rng);
        }
        for _ in 0..easy {
            let c = easy_clusters[rng.random_range(0..easy_clusters.len())];
            push(c, FineClass::EN, &mut rng);
        }
        for _ in 0..hard {
            push(HARD_NEGATIVE, FineClass::HN, &mut rng);
        }
        out
    }
}
