//! End-to-end glue: build a dataset, train a head, evaluate, sweep.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::Serialize;

use crate::classifier::{self, TopicModel, TrainConfig, TrainHistory};
use crate::corpus::{normalize_vector, DataCollection};
use crate::dataset::{
    assemble_binary, assemble_multiclass, build_positives, draw_negatives, passage_rows,
    split_train_val, CustomizedDataset, NegStrategy, Query, QuerySet,
};
use crate::error::{Error, Result};
use crate::eval::{score, EvalExample, EvalReport};
use crate::retrieval::{compute_threshold, mqr};
use crate::{derive_seed, seeded_rng};

// seed streams
const STREAM_NEGATIVES: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_SUBSAMPLE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BuildConfig {
    pub k: usize,
    pub strategy: NegStrategy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildDiagnostics {
    pub topic: String,
    pub n_queries: usize,
    pub threshold: f64,
    /// Distinct passages kept by MQR.
    pub m: usize,
    pub per_query_kept: Vec<usize>,
    pub k_requested: usize,
    pub k_effective: usize,
    pub k_clamped: bool,
    pub strategy: NegStrategy,
    pub negative_threshold: Option<f64>,
    pub examples: usize,
    pub provenance_counts: BTreeMap<String, usize>,
    pub seed: u64,
}

fn effective_k(collection: &DataCollection, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if collection.is_empty() {
        return Err(Error::InvalidArgument("collection is empty".into()));
    }
    Ok(k.min(collection.len()))
}

fn normalized_queries(queries: &[Query]) -> Result<Vec<Query>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            Ok(Query {
                text: q.text.clone(),
                vector: normalize_vector(&q.vector, i)?,
            })
        })
        .collect()
}

/// Query set with every vector scaled to unit length, matching the corpus.
/// Cosine scores and thresholds are unchanged by this.
pub fn normalize_queryset(qs: &QuerySet) -> Result<QuerySet> {
    Ok(QuerySet {
        topic: qs.topic.clone(),
        positive_queries: normalized_queries(&qs.positive_queries)?,
        negative_queries: normalized_queries(&qs.negative_queries)?,
    })
}

/// MQR positives plus `strategy` negatives, balanced to `2(n+m)` examples.
pub fn build_binary(
    collection: &DataCollection,
    queries: &QuerySet,
    config: &BuildConfig,
) -> Result<(CustomizedDataset, BuildDiagnostics)> {
    queries.validate()?;
    let k = effective_k(collection, config.k)?;
    let qs = normalize_queryset(queries)?;
    let result = mqr(collection, &qs.positive_vectors(), k)?;
    let positives = build_positives(&qs, &result, collection);
    let exclude = passage_rows(&positives);
    let negative_vectors = qs.negative_vectors();
    let negatives = draw_negatives(
        config.strategy,
        collection,
        &negative_vectors,
        k,
        positives.len(),
        &exclude,
        derive_seed(config.seed, STREAM_NEGATIVES),
    )?;
    let negative_threshold = if config.strategy.needs_negative_queries() {
        Some(compute_threshold(&negative_vectors)?)
    } else {
        None
    };
    let dataset = assemble_binary(positives, negatives, config.seed)?;
    let diagnostics = BuildDiagnostics {
        topic: qs.topic.clone(),
        n_queries: qs.positive_queries.len(),
        threshold: result.threshold,
        m: result.kept.len(),
        per_query_kept: result.per_query_kept(),
        k_requested: config.k,
        k_effective: k,
        k_clamped: k < config.k,
        strategy: config.strategy,
        negative_threshold,
        examples: dataset.examples.len(),
        provenance_counts: dataset.provenance_counts(),
        seed: config.seed,
    };
    Ok((dataset, diagnostics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDiagnostics {
    pub class: String,
    pub n_queries: usize,
    pub threshold: f64,
    pub m: usize,
    pub per_query_kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MulticlassDiagnostics {
    pub classes: Vec<ClassDiagnostics>,
    pub k_requested: usize,
    pub k_effective: usize,
    pub k_clamped: bool,
    pub shared_rows: Vec<crate::dataset::SharedRow>,
    pub examples: usize,
    pub seed: u64,
}

/// One class per query set; each class contributes its MQR positives.
pub fn build_multiclass(
    collection: &DataCollection,
    querysets: &[QuerySet],
    k_requested: usize,
    seed: u64,
) -> Result<(CustomizedDataset, MulticlassDiagnostics)> {
    let k = effective_k(collection, k_requested)?;
    let mut per_class = Vec::with_capacity(querysets.len());
    let mut classes = Vec::with_capacity(querysets.len());
    for qs in querysets {
        qs.validate()?;
        let qs = normalize_queryset(qs)?;
        let result = mqr(collection, &qs.positive_vectors(), k)?;
        classes.push(ClassDiagnostics {
            class: qs.topic.clone(),
            n_queries: qs.positive_queries.len(),
            threshold: result.threshold,
            m: result.kept.len(),
            per_query_kept: result.per_query_kept(),
        });
        per_class.push((qs.topic.clone(), build_positives(&qs, &result, collection)));
    }
    let dataset = assemble_multiclass(per_class, seed)?;
    let diagnostics = MulticlassDiagnostics {
        classes,
        k_requested,
        k_effective: k,
        k_clamped: k < k_requested,
        shared_rows: dataset.shared_rows.clone(),
        examples: dataset.examples.len(),
        seed,
    };
    Ok((dataset, diagnostics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TopicModel,
    pub history: TrainHistory,
    pub train_size: usize,
    pub val_size: usize,
    pub val_accuracy: f64,
}

/// Stratified split, seeded init, and early-stopped training.
///
/// `val_ratio` is the validation fraction; `config.seed` drives the split,
/// the initial weights and the batch order.
pub fn train_dataset(
    dataset: &CustomizedDataset,
    val_ratio: f64,
    config: &TrainConfig,
    normalized_inputs: bool,
) -> Result<TrainOutcome> {
    let dim = dataset
        .examples
        .first()
        .map(|e| e.vector.len())
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
    let split = split_train_val(
        dataset,
        1.0 - val_ratio,
        derive_seed(config.seed, STREAM_SPLIT),
    )?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split left {} training and {} validation examples",
            split.train.len(),
            split.val.len()
        )));
    }
    let model =
        classifier::init_model(dim, &dataset.classes, derive_seed(config.seed, STREAM_INIT))?;
    let train_config = TrainConfig {
        seed: derive_seed(config.seed, STREAM_TRAIN),
        ..*config
    };
    let (mut model, history) = classifier::train(model, &split.train, &split.val, &train_config)?;
    model.normalized_inputs = normalized_inputs;
    let mut correct = 0;
    for ex in &split.val {
        if classifier::predict(&model, &ex.vector)?.class_index == ex.label {
            correct += 1;
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        train_size: split.train.len(),
        val_size: split.val.len(),
        val_accuracy: correct as f64 / split.val.len() as f64,
    })
}

/// The vector the model should see for `x`: unit-normalized when the model
/// was trained on normalized inputs.
pub fn model_input(model: &TopicModel, x: &[f32], row: usize) -> Result<Vec<f32>> {
    if x.len() != model.dim {
        return Err(Error::DimMismatch {
            expected: model.dim,
            actual: x.len(),
        });
    }
    if model.normalized_inputs {
        normalize_vector(x, row)
    } else {
        Ok(x.to_vec())
    }
}

/// Positive-class decisions of a binary model on eval examples.
pub fn classify_binary(model: &TopicModel, examples: &[EvalExample]) -> Result<Vec<bool>> {
    if !model.is_binary() {
        return Err(Error::InvalidArgument(format!(
            "binary evaluation needs a 2-class model, this one has {} classes",
            model.classes.len()
        )));
    }
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let x = model_input(model, &ex.vector, i)?;
            Ok(classifier::predict(model, &x)?.class_index == 1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicRun {
    pub diagnostics: BuildDiagnostics,
    pub training: TrainOutcome,
    pub report: EvalReport,
}

/// Build, train and score one binary topic classifier.
pub fn run_topic(
    collection: &DataCollection,
    queries: &QuerySet,
    eval_set: &[EvalExample],
    build: &BuildConfig,
    val_ratio: f64,
    train: &TrainConfig,
) -> Result<TopicRun> {
    let (dataset, diagnostics) = build_binary(collection, queries, build)?;
    let training = train_dataset(
        &dataset,
        val_ratio,
        train,
        collection.embeddings().is_normalized(),
    )?;
    let predictions = classify_binary(&training.model, eval_set)?;
    let report = score(&format!("mqr-{}", build.strategy), &predictions, eval_set)?;
    Ok(TopicRun {
        diagnostics,
        training,
        report,
    })
}

/// `n` positive queries drawn uniformly from `pool`, negatives kept whole.
pub fn subsample_queries(pool: &QuerySet, n: usize, seed: u64) -> Result<QuerySet> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a sweep cell needs at least 2 queries, got {n}"
        )));
    }
    if n > pool.positive_queries.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} queries from a pool of {}",
            pool.positive_queries.len()
        )));
    }
    let mut rng = seeded_rng(derive_seed(seed, STREAM_SUBSAMPLE));
    let mut picked = index::sample(&mut rng, pool.positive_queries.len(), n).into_vec();
    picked.sort_unstable();
    Ok(QuerySet {
        topic: pool.topic.clone(),
        positive_queries: picked
            .into_iter()
            .map(|i| pool.positive_queries[i].clone())
            .collect(),
        negative_queries: pool.negative_queries.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub n_queries: usize,
    pub k: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub m: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub strategy: NegStrategy,
    pub val_ratio: f64,
    pub train: TrainConfig,
}

/// One grid cell; failures are recorded in the cell rather than returned.
pub fn sweep_cell(
    collection: &DataCollection,
    pool: &QuerySet,
    eval_set: &[EvalExample],
    n_queries: usize,
    k: usize,
    seed: u64,
    settings: &SweepSettings,
) -> SweepCell {
    let outcome = subsample_queries(pool, n_queries, seed).and_then(|qs| {
        let build = BuildConfig {
            k,
            strategy: settings.strategy,
            seed,
        };
        let train = TrainConfig {
            seed,
            ..settings.train
        };
        run_topic(
            collection,
            &qs,
            eval_set,
            &build,
            settings.val_ratio,
            &train,
        )
    });
    match outcome {
        Ok(run) => SweepCell {
            n_queries,
            k,
            seed,
            accuracy: Some(run.report.accuracy),
            f1: Some(run.report.f1),
            m: Some(run.diagnostics.m),
            error: None,
        },
        Err(e) => SweepCell {
            n_queries,
            k,
            seed,
            accuracy: None,
            f1: None,
            m: None,
            error: Some(e.to_string()),
        },
    }
}
