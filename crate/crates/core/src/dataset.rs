//! Customized dataset construction.
//!
//! Positives are the topic queries plus the passages MQR keeps for them.
//! Negatives come from one of three strategies:
//!
//! * `m1`: uniform random passages;
//! * `m2`: MQR over user-supplied negative queries, padded with `m1` when
//!   the pool is short;
//! * `m3`: half `m1`, half `m2` (the odd example goes to `m2`).
//!
//! Negatives never reuse a row that is already a positive.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::DataCollection;
use crate::error::{Error, Result};
use crate::retrieval::{mqr, MqrResult};
use crate::{derive_seed, seeded_rng};

pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub vector: Vec<f32>,
}

/// A topic's example queries. This is also the on-disk queryset format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub topic: String,
    pub positive_queries: Vec<Query>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negative_queries: Vec<Query>,
}

impl QuerySet {
    pub fn validate(&self) -> Result<()> {
        if self.positive_queries.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "topic {:?} needs at least 2 positive queries, got {}",
                self.topic,
                self.positive_queries.len()
            )));
        }
        let dim = self.positive_queries[0].vector.len();
        for q in self.positive_queries.iter().chain(&self.negative_queries) {
            if q.vector.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: q.vector.len(),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.positive_queries.first().map_or(0, |q| q.vector.len())
    }

    pub fn positive_vectors(&self) -> Vec<&[f32]> {
        self.positive_queries
            .iter()
            .map(|q| q.vector.as_slice())
            .collect()
    }

    pub fn negative_vectors(&self) -> Vec<&[f32]> {
        self.negative_queries
            .iter()
            .map(|q| q.vector.as_slice())
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let qs: QuerySet = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        qs.validate()?;
        Ok(qs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("queryset serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// A query vector; `source_index` is the query's ordinal. Negative queries
    /// carry this provenance with the negative label.
    Query,
    MqrPositive,
    RandomNegative,
    NegqueryNegative,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Query => "query",
            Provenance::MqrPositive => "mqr_positive",
            Provenance::RandomNegative => "random_negative",
            Provenance::NegqueryNegative => "negquery_negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub label: usize,
    pub provenance: Provenance,
    pub source_index: usize,
    pub vector: Vec<f32>,
}

impl LabeledExample {
    /// The corpus row this example came from, if it is a passage.
    pub fn passage_row(&self) -> Option<usize> {
        (self.provenance != Provenance::Query).then_some(self.source_index)
    }
}

/// A corpus row retained by more than one class in a multi-class build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedRow {
    pub row: usize,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomizedDataset {
    pub examples: Vec<LabeledExample>,
    pub classes: Vec<String>,
    pub seed: u64,
    pub shared_rows: Vec<SharedRow>,
}

impl CustomizedDataset {
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    pub fn provenance_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for ex in &self.examples {
            *out.entry(ex.provenance.as_str().to_string()).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegStrategy {
    M1,
    M2,
    M3,
}

impl NegStrategy {
    pub fn needs_negative_queries(self) -> bool {
        !matches!(self, NegStrategy::M1)
    }
}

impl fmt::Display for NegStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegStrategy::M1 => "m1",
            NegStrategy::M2 => "m2",
            NegStrategy::M3 => "m3",
        })
    }
}

impl FromStr for NegStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(NegStrategy::M1),
            "m2" => Ok(NegStrategy::M2),
            "m3" => Ok(NegStrategy::M3),
            other => Err(Error::InvalidArgument(format!(
                "unknown negative strategy {other:?} (expected m1, m2 or m3)"
            ))),
        }
    }
}

/// The `n` query vectors plus the `m` kept passages, all labeled positive.
pub fn build_positives(
    queries: &QuerySet,
    mqr_result: &MqrResult,
    collection: &DataCollection,
) -> Vec<LabeledExample> {
    let queries = queries
        .positive_queries
        .iter()
        .enumerate()
        .map(|(i, q)| LabeledExample {
            label: POSITIVE,
            provenance: Provenance::Query,
            source_index: i,
            vector: q.vector.clone(),
        });
    let passages = mqr_result.kept.iter().map(|&row| LabeledExample {
        label: POSITIVE,
        provenance: Provenance::MqrPositive,
        source_index: row,
        vector: collection.vector(row).to_vec(),
    });
    queries.chain(passages).collect()
}

pub fn passage_rows(examples: &[LabeledExample]) -> HashSet<usize> {
    examples
        .iter()
        .filter_map(LabeledExample::passage_row)
        .collect()
}

/// Uniform sample of `count` rows outside `exclude`, without replacement.
pub fn negatives_m1(
    collection: &DataCollection,
    count: usize,
    exclude: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    let eligible: Vec<usize> = (0..collection.len())
        .filter(|r| !exclude.contains(r))
        .collect();
    if count > eligible.len() {
        return Err(Error::NotEnoughRows {
            requested: count,
            available: eligible.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    let picked = index::sample(&mut rng, eligible.len(), count);
    Ok(picked
        .iter()
        .map(|i| {
            let row = eligible[i];
            LabeledExample {
                label: NEGATIVE,
                provenance: Provenance::RandomNegative,
                source_index: row,
                vector: collection.vector(row).to_vec(),
            }
        })
        .collect())
}

/// Negatives mined with MQR over negative queries.
///
/// The pool is the negative query vectors followed by the kept passages that
/// are not in `exclude`. A pool larger than `count` is subsampled uniformly;
/// a short pool is padded with `m1` draws.
pub fn negatives_m2<V: AsRef<[f32]>>(
    collection: &DataCollection,
    negative_queries: &[V],
    k: usize,
    count: usize,
    exclude: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    let mined = mqr(collection, negative_queries, k)?;
    let mut pool: Vec<LabeledExample> = negative_queries
        .iter()
        .enumerate()
        .map(|(i, q)| LabeledExample {
            label: NEGATIVE,
            provenance: Provenance::Query,
            source_index: i,
            vector: q.as_ref().to_vec(),
        })
        .collect();
    pool.extend(
        mined
            .kept
            .iter()
            .filter(|row| !exclude.contains(row))
            .map(|&row| LabeledExample {
                label: NEGATIVE,
                provenance: Provenance::NegqueryNegative,
                source_index: row,
                vector: collection.vector(row).to_vec(),
            }),
    );

    if pool.len() >= count {
        let mut rng = seeded_rng(seed);
        let mut picked = index::sample(&mut rng, pool.len(), count).into_vec();
        picked.sort_unstable();
        return Ok(picked.into_iter().map(|i| pool[i].clone()).collect());
    }

    let mut used = exclude.clone();
    used.extend(passage_rows(&pool));
    let pad = negatives_m1(collection, count - pool.len(), &used, derive_seed(seed, 1))?;
    pool.extend(pad);
    Ok(pool)
}

/// `floor(count/2)` random negatives plus `ceil(count/2)` mined ones, on
/// disjoint rows.
pub fn negatives_m3<V: AsRef<[f32]>>(
    collection: &DataCollection,
    negative_queries: &[V],
    k: usize,
    count: usize,
    exclude: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    let m1_count = count / 2;
    let m2_count = count - m1_count;
    let mined = negatives_m2(
        collection,
        negative_queries,
        k,
        m2_count,
        exclude,
        derive_seed(seed, 2),
    )?;
    let mut used = exclude.clone();
    used.extend(passage_rows(&mined));
    let mut out = negatives_m1(collection, m1_count, &used, derive_seed(seed, 3))?;
    out.extend(mined);
    Ok(out)
}

/// Draws `count` negatives with `strategy`, avoiding rows in `exclude`.
pub fn draw_negatives<V: AsRef<[f32]>>(
    strategy: NegStrategy,
    collection: &DataCollection,
    negative_queries: &[V],
    k: usize,
    count: usize,
    exclude: &HashSet<usize>,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    if strategy.needs_negative_queries() && negative_queries.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "strategy {strategy} needs at least 2 negative queries, got {}",
            negative_queries.len()
        )));
    }
    match strategy {
        NegStrategy::M1 => negatives_m1(collection, count, exclude, seed),
        NegStrategy::M2 => negatives_m2(collection, negative_queries, k, count, exclude, seed),
        NegStrategy::M3 => negatives_m3(collection, negative_queries, k, count, exclude, seed),
    }
}

pub fn assemble_binary(
    positives: Vec<LabeledExample>,
    negatives: Vec<LabeledExample>,
    seed: u64,
) -> Result<CustomizedDataset> {
    if positives.len() != negatives.len() {
        return Err(Error::Imbalance {
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }
    let positive_rows = passage_rows(&positives);
    if let Some(row) = negatives
        .iter()
        .filter_map(LabeledExample::passage_row)
        .find(|r| positive_rows.contains(r))
    {
        return Err(Error::LabelCollision { row });
    }
    let examples = positives
        .into_iter()
        .map(|e| LabeledExample {
            label: POSITIVE,
            ..e
        })
        .chain(negatives.into_iter().map(|e| LabeledExample {
            label: NEGATIVE,
            ..e
        }))
        .collect();
    Ok(CustomizedDataset {
        examples,
        classes: vec!["negative".into(), "positive".into()],
        seed,
        shared_rows: Vec::new(),
    })
}

/// Merges per-class positives into one multi-class dataset. Rows kept by
/// several classes stay under every label and are reported in `shared_rows`.
pub fn assemble_multiclass(
    per_class: Vec<(String, Vec<LabeledExample>)>,
    seed: u64,
) -> Result<CustomizedDataset> {
    if per_class.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "multi-class datasets need at least 2 classes, got {}",
            per_class.len()
        )));
    }
    let mut names = HashSet::new();
    for (name, _) in &per_class {
        if !names.insert(name.as_str()) {
            return Err(Error::DuplicateClass(name.clone()));
        }
    }

    let mut owners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (label, (_, positives)) in per_class.iter().enumerate() {
        for row in positives.iter().filter_map(LabeledExample::passage_row) {
            let entry = owners.entry(row).or_default();
            if entry.last() != Some(&label) {
                entry.push(label);
            }
        }
    }
    let classes: Vec<String> = per_class.iter().map(|(n, _)| n.clone()).collect();
    let shared_rows = owners
        .into_iter()
        .filter(|(_, labels)| labels.len() > 1)
        .map(|(row, labels)| SharedRow {
            row,
            classes: labels.iter().map(|&l| classes[l].clone()).collect(),
        })
        .collect();

    let examples = per_class
        .into_iter()
        .enumerate()
        .flat_map(|(label, (_, positives))| {
            positives
                .into_iter()
                .map(move |e| LabeledExample { label, ..e })
        })
        .collect();
    Ok(CustomizedDataset {
        examples,
        classes,
        seed,
        shared_rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
}

/// Stratified split: per class, `floor(train_ratio * count)` examples train
/// and the rest validate, with at least one validation example for any class
/// of two or more.
pub fn split_train_val(dataset: &CustomizedDataset, train_ratio: f64, seed: u64) -> Result<Split> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train ratio must be in (0, 1), got {train_ratio}"
        )));
    }
    if dataset.examples.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let mut by_class: Vec<Vec<&LabeledExample>> = vec![Vec::new(); dataset.classes.len()];
    for ex in &dataset.examples {
        by_class
            .get_mut(ex.label)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "label {} outside {} classes",
                    ex.label,
                    dataset.classes.len()
                ))
            })?
            .push(ex);
    }
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (label, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyClass(dataset.classes[label].clone()));
        }
        members.shuffle(&mut rng);
        let count = members.len();
        // small epsilon so that e.g. 0.29 * 100 floors to 29
        let mut n_train = (train_ratio * count as f64 + 1e-9).floor() as usize;
        if count >= 2 {
            n_train = n_train.min(count - 1);
        }
        train.extend(members[..n_train].iter().map(|e| (*e).clone()));
        val.extend(members[n_train..].iter().map(|e| (*e).clone()));
    }
    train.shuffle(&mut rng);
    Ok(Split { train, val })
}

pub fn write_dataset(examples: &[LabeledExample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("example serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
