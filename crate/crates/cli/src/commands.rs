use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fewtopic_core::classifier::{self, TopicModel, TrainConfig, TrainHistory};
use fewtopic_core::corpus::{
    bind, load_embeddings, load_passages, normalize_rows, write_embeddings, write_passages,
    DataCollection, EmbeddingMatrix, UNIT_NORM_TOLERANCE,
};
use fewtopic_core::dataset::{
    load_dataset, write_dataset, CustomizedDataset, NegStrategy, QuerySet,
};
use fewtopic_core::eval::{
    baseline_dense, baseline_keyword, baseline_random, load_eval_set, score, write_eval_lines,
    EvalReport, DEFAULT_STOPWORDS,
};
use fewtopic_core::pipeline::{
    self, build_binary, build_multiclass, model_input, BuildConfig, SweepCell, SweepSettings,
};
use fewtopic_core::synth::{SyntheticWorld, WorldConfig};

use crate::output::{ensure_dir, next_version, read_json, sha256_file, versioned, write_json};
use crate::{
    usage, Baseline, Cli, Command, Common, DEFAULT_K_BINARY, DEFAULT_K_MULTICLASS, DEFAULT_SEED,
    DEFAULT_VAL_RATIO,
};

const MANIFEST: &str = "manifest.json";
const INDEX_PASSAGES: &str = "passages.jsonl";
const INDEX_EMBEDDINGS: &str = "embeddings.drem";
const DATASET: &str = "dataset.jsonl";
const DIAGNOSTICS: &str = "diagnostics.json";
const MODEL: &str = "model.json";
const HISTORY: &str = "history.json";

pub fn dispatch(cli: Cli) -> Result<()> {
    let c = &cli.common;
    check_common(c)?;
    match cli.command {
        Command::Index {
            passages,
            embeddings,
            force,
        } => index(c, &passages, &embeddings, force),
        Command::BuildDataset { index, queryset } => build_dataset(c, &index, &queryset),
        Command::Train { dataset } => train(c, &dataset),
        Command::Refine { index, queryset } => refine(c, &index, &queryset),
        Command::Classify { model, embeddings } => classify(c, &model, &embeddings),
        Command::Evaluate {
            model,
            eval,
            eval_embeddings,
            baselines,
            queryset,
        } => evaluate(
            c,
            &model,
            &eval,
            &eval_embeddings,
            &baselines,
            queryset.as_deref(),
        ),
        Command::Sweep {
            index,
            queryset,
            eval,
            eval_embeddings,
            queries,
            ks,
            repeats,
        } => sweep(
            c,
            &index,
            &queryset,
            &eval,
            &eval_embeddings,
            &queries,
            &ks,
            repeats,
        ),
        Command::Synth {
            dim,
            clusters,
            per_cluster,
            noise,
            hard_negative_cosine,
            queries,
            negative_queries,
            eval_positives,
            eval_negatives,
        } => {
            if dim < 2 || clusters < 2 || per_cluster == 0 {
                return Err(usage(
                    "synth needs dim >= 2, clusters >= 2 and per-cluster >= 1",
                ));
            }
            if hard_negative_cosine.is_some() && clusters < 3 {
                return Err(usage("a hard-negative world needs at least 3 clusters"));
            }
            if let Some(h) = hard_negative_cosine {
                if !(-1.0..=1.0).contains(&h) {
                    return Err(usage("--hard-negative-cosine must lie in [-1, 1]"));
                }
            }
            let world = SyntheticWorld::new(WorldConfig {
                dim,
                clusters,
                per_cluster,
                noise,
                hard_negative_cosine,
                seed: c.seed.unwrap_or(DEFAULT_SEED),
            });
            synth(
                c,
                &world,
                queries,
                negative_queries,
                eval_positives,
                eval_negatives,
            )
        }
    }
}

fn check_common(c: &Common) -> Result<()> {
    if c.k == Some(0) {
        return Err(usage("--k must be at least 1"));
    }
    if let Some(r) = c.val_ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(usage(format!(
                "--val-ratio must lie strictly between 0 and 1, got {r}"
            )));
        }
    }
    if let Some(lr) = c.lr {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(usage(format!("--lr must be positive, got {lr}")));
        }
    }
    if c.max_epochs == Some(0) || c.patience == Some(0) {
        return Err(usage("--max-epochs and --patience must be at least 1"));
    }
    Ok(())
}

fn require_out(c: &Common) -> Result<&Path> {
    c.out.as_deref().ok_or_else(|| usage("--out is required"))
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

// ---------------------------------------------------------------- index

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub rows: usize,
    pub dim: usize,
    pub normalized: bool,
    pub passages: String,
    pub embeddings: String,
    pub passages_sha256: String,
    pub embeddings_sha256: String,
    pub source_passages: String,
    pub source_embeddings: String,
}

fn index(c: &Common, passages: &Path, embeddings: &Path, force: bool) -> Result<()> {
    let out = require_out(c)?;
    if out.join(MANIFEST).exists() && !force {
        bail!(
            "{} already holds an index; pass --force to overwrite it",
            out.display()
        );
    }
    let records = load_passages(passages)?;
    let matrix = load_embeddings(embeddings)?;
    let matrix =
        normalize_rows(&matrix).with_context(|| format!("normalizing {}", embeddings.display()))?;
    let collection = bind(records, matrix)
        .with_context(|| format!("binding {} to {}", passages.display(), embeddings.display()))?;

    ensure_dir(out)?;
    let p_out = out.join(INDEX_PASSAGES);
    let e_out = out.join(INDEX_EMBEDDINGS);
    write_passages(collection.passages(), &p_out)?;
    write_embeddings(collection.embeddings(), &e_out)?;
    let manifest = IndexManifest {
        rows: collection.len(),
        dim: collection.dim(),
        normalized: true,
        passages: INDEX_PASSAGES.into(),
        embeddings: INDEX_EMBEDDINGS.into(),
        passages_sha256: sha256_file(&p_out)?,
        embeddings_sha256: sha256_file(&e_out)?,
        source_passages: show(passages),
        source_embeddings: show(embeddings),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    println!(
        "indexed {} passages (dim {}) into {}",
        manifest.rows,
        manifest.dim,
        out.display()
    );
    Ok(())
}

fn load_index(dir: &Path) -> Result<(DataCollection, IndexManifest)> {
    let manifest: IndexManifest = read_json(&dir.join(MANIFEST))?;
    let e_path = dir.join(&manifest.embeddings);
    let digest = sha256_file(&e_path)?;
    if digest != manifest.embeddings_sha256 {
        bail!(
            "{} does not match the checksum in its manifest",
            e_path.display()
        );
    }
    let collection = bind(
        load_passages(dir.join(&manifest.passages))?,
        load_embeddings(&e_path)?,
    )
    .with_context(|| format!("loading index {}", dir.display()))?;
    Ok((collection, manifest))
}

// ------------------------------------------------------- build-dataset

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BuildSettings {
    index: String,
    querysets: Vec<String>,
    k: usize,
    neg_strategy: Option<NegStrategy>,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiagnosticsFile {
    classes: Vec<String>,
    config: BuildSettings,
    build: serde_json::Value,
}

fn build(
    c: &Common,
    index_dir: &Path,
    qs_paths: &[PathBuf],
    default_strategy: Option<NegStrategy>,
    prior: Option<&BuildSettings>,
) -> Result<(CustomizedDataset, DiagnosticsFile)> {
    let (collection, _) = load_index(index_dir)?;
    let querysets = qs_paths
        .iter()
        .map(QuerySet::load)
        .collect::<fewtopic_core::Result<Vec<_>>>()?;
    for (qs, path) in querysets.iter().zip(qs_paths) {
        if qs.dim() != collection.dim() {
            bail!(
                "query vectors in {} have dim {} but the index has dim {}",
                path.display(),
                qs.dim(),
                collection.dim()
            );
        }
    }
    let seed = c.seed.or(prior.map(|p| p.seed)).unwrap_or(DEFAULT_SEED);
    let settings = |k, neg_strategy| BuildSettings {
        index: show(index_dir),
        querysets: qs_paths.iter().map(|p| show(p)).collect(),
        k,
        neg_strategy,
        seed,
    };
    if querysets.len() == 1 {
        let qs = &querysets[0];
        let strategy =
            c.neg_strategy
                .or(default_strategy)
                .unwrap_or(if qs.negative_queries.is_empty() {
                    NegStrategy::M1
                } else {
                    NegStrategy::M3
                });
        let k = c.k.or(prior.map(|p| p.k)).unwrap_or(DEFAULT_K_BINARY);
        let (dataset, diag) = build_binary(&collection, qs, &BuildConfig { k, strategy, seed })?;
        println!(
            "topic {:?}: {} queries, threshold {:.4}, {} passages kept (k {}{}), {} negatives, {} examples",
            diag.topic,
            diag.n_queries,
            diag.threshold,
            diag.m,
            diag.k_effective,
            if diag.k_clamped { ", clamped to corpus size" } else { "" },
            strategy,
            diag.examples
        );
        let file = DiagnosticsFile {
            classes: dataset.classes.clone(),
            config: settings(k, Some(strategy)),
            build: serde_json::to_value(&diag)?,
        };
        Ok((dataset, file))
    } else {
        if c.neg_strategy.is_some() {
            return Err(usage("--neg-strategy applies only to single-topic builds"));
        }
        let k = c.k.or(prior.map(|p| p.k)).unwrap_or(DEFAULT_K_MULTICLASS);
        let (dataset, diag) = build_multiclass(&collection, &querysets, k, seed)?;
        for cd in &diag.classes {
            println!(
                "class {:?}: {} queries, threshold {:.4}, {} passages kept",
                cd.class, cd.n_queries, cd.threshold, cd.m
            );
        }
        println!(
            "{} classes, {} examples, {} rows shared between classes (k {}{})",
            diag.classes.len(),
            diag.examples,
            diag.shared_rows.len(),
            diag.k_effective,
            if diag.k_clamped {
                ", clamped to corpus size"
            } else {
                ""
            }
        );
        let file = DiagnosticsFile {
            classes: dataset.classes.clone(),
            config: settings(k, None),
            build: serde_json::to_value(&diag)?,
        };
        Ok((dataset, file))
    }
}

fn build_dataset(c: &Common, index_dir: &Path, qs_paths: &[PathBuf]) -> Result<()> {
    let out = require_out(c)?;
    let (dataset, diag) = build(c, index_dir, qs_paths, None, None)?;
    ensure_dir(out)?;
    write_dataset(&dataset.examples, out.join(DATASET))?;
    write_json(&out.join(DIAGNOSTICS), &diag)?;
    println!(
        "wrote {} and {}",
        show(&out.join(DATASET)),
        show(&out.join(DIAGNOSTICS))
    );
    Ok(())
}

// --------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct TrainSettings {
    val_ratio: f64,
    learning_rate: f64,
    max_epochs: usize,
    patience: usize,
    batch_size: usize,
    seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct HistoryFile {
    dataset: String,
    config: TrainSettings,
    train_size: usize,
    val_size: usize,
    val_accuracy: f64,
    normalized_inputs: bool,
    history: TrainHistory,
}

#[derive(Deserialize)]
struct PriorHistory {
    config: TrainSettings,
}

fn train_settings(c: &Common, prior: Option<&TrainSettings>) -> Result<TrainSettings> {
    let d = TrainConfig::default();
    let s = TrainSettings {
        val_ratio: c
            .val_ratio
            .or(prior.map(|p| p.val_ratio))
            .unwrap_or(DEFAULT_VAL_RATIO),
        learning_rate: c
            .lr
            .or(prior.map(|p| p.learning_rate))
            .unwrap_or(d.learning_rate),
        max_epochs: c
            .max_epochs
            .or(prior.map(|p| p.max_epochs))
            .unwrap_or(d.max_epochs),
        patience: c
            .patience
            .or(prior.map(|p| p.patience))
            .unwrap_or(d.patience),
        batch_size: prior.map_or(d.batch_size, |p| p.batch_size),
        seed: c.seed.or(prior.map(|p| p.seed)).unwrap_or(DEFAULT_SEED),
    };
    Ok(s)
}

fn fit(
    dataset: &CustomizedDataset,
    settings: TrainSettings,
    dataset_label: String,
) -> Result<(TopicModel, HistoryFile)> {
    let normalized = dataset.examples.iter().all(|e| {
        let n = e
            .vector
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        (n - 1.0).abs() <= UNIT_NORM_TOLERANCE
    });
    let cfg = TrainConfig {
        learning_rate: settings.learning_rate,
        max_epochs: settings.max_epochs,
        patience: settings.patience,
        batch_size: settings.batch_size,
        seed: settings.seed,
    };
    let outcome = pipeline::train_dataset(dataset, settings.val_ratio, &cfg, normalized)?;
    let h = &outcome.history;
    println!(
        "trained {} epochs (best {}{}), val loss {:.5}, val accuracy {:.4} on {} held-out examples",
        h.epochs.len(),
        h.best_epoch,
        if h.stopped_early {
            ", stopped early"
        } else {
            ""
        },
        h.best_val_loss,
        outcome.val_accuracy,
        outcome.val_size
    );
    let file = HistoryFile {
        dataset: dataset_label,
        config: settings,
        train_size: outcome.train_size,
        val_size: outcome.val_size,
        val_accuracy: outcome.val_accuracy,
        normalized_inputs: normalized,
        history: outcome.history,
    };
    Ok((outcome.model, file))
}

fn train(c: &Common, dataset_path: &Path) -> Result<()> {
    let out = require_out(c)?;
    let examples = load_dataset(dataset_path)?;
    if examples.is_empty() {
        bail!("{} holds no examples", dataset_path.display());
    }
    let sibling = dataset_path.with_file_name(DIAGNOSTICS);
    let classes = if sibling.exists() {
        read_json::<DiagnosticsFile>(&sibling)?.classes
    } else {
        let units = examples.iter().map(|e| e.label).max().unwrap_or(0) + 1;
        if units == 2 {
            vec!["negative".into(), "positive".into()]
        } else {
            (0..units).map(|i| format!("class-{i}")).collect()
        }
    };
    if let Some(e) = examples.iter().find(|e| e.label >= classes.len()) {
        bail!(
            "{}: label {} is out of range for {} classes",
            dataset_path.display(),
            e.label,
            classes.len()
        );
    }
    let settings = train_settings(c, None)?;
    let dataset = CustomizedDataset {
        examples,
        classes,
        seed: settings.seed,
        shared_rows: Vec::new(),
    };
    let (model, history) = fit(&dataset, settings, show(dataset_path))?;
    ensure_dir(out)?;
    classifier::save_model(&model, out.join(MODEL))?;
    write_json(&out.join(HISTORY), &history)?;
    println!(
        "wrote {} and {}",
        show(&out.join(MODEL)),
        show(&out.join(HISTORY))
    );
    Ok(())
}

// -------------------------------------------------------------- refine

fn refine(c: &Common, index_dir: &Path, qs_path: &Path) -> Result<()> {
    let out = require_out(c)?;
    let qs = QuerySet::load(qs_path)?;
    if qs.negative_queries.is_empty() {
        bail!(
            "refine needs negative queries and {} has none",
            qs_path.display()
        );
    }
    let prior_build = out
        .join(DIAGNOSTICS)
        .exists()
        .then(|| read_json::<DiagnosticsFile>(&out.join(DIAGNOSTICS)))
        .transpose()?
        .map(|d| d.config);
    let prior_train = out
        .join(HISTORY)
        .exists()
        .then(|| read_json::<PriorHistory>(&out.join(HISTORY)))
        .transpose()?
        .map(|h| h.config);

    let (dataset, diag) = build(
        c,
        index_dir,
        &[qs_path.to_path_buf()],
        Some(NegStrategy::M3),
        prior_build.as_ref(),
    )?;
    let settings = train_settings(c, prior_train.as_ref())?;
    let (model, history) = fit(&dataset, settings, show(&out.join(DATASET)))?;

    ensure_dir(out)?;
    let artifacts = [MODEL, HISTORY, DATASET, DIAGNOSTICS];
    if artifacts.iter().any(|a| out.join(a).exists()) {
        let n = next_version(out, &artifacts);
        for a in artifacts {
            let from = out.join(a);
            if from.exists() {
                let to = versioned(out, a, n);
                fs::rename(&from, &to)
                    .with_context(|| format!("moving {} to {}", from.display(), to.display()))?;
            }
        }
        println!("previous run kept as version {n}");
    }
    write_dataset(&dataset.examples, out.join(DATASET))?;
    write_json(&out.join(DIAGNOSTICS), &diag)?;
    classifier::save_model(&model, out.join(MODEL))?;
    write_json(&out.join(HISTORY), &history)?;
    println!("wrote refined model to {}", show(&out.join(MODEL)));
    Ok(())
}

// ------------------------------------------------------------ classify

#[derive(Serialize)]
struct PredictionLine<'a> {
    row: usize,
    class: &'a str,
    class_index: usize,
    probability: f64,
    probabilities: Vec<f64>,
}

fn check_model_dim(
    model: &TopicModel,
    model_path: &Path,
    dim: usize,
    data_path: &Path,
) -> Result<()> {
    if model.dim != dim {
        return Err(anyhow!(fewtopic_core::Error::DimMismatch {
            expected: model.dim,
            actual: dim,
        }))
        .with_context(|| {
            format!(
                "model {} expects dim {} but {} has dim {}",
                model_path.display(),
                model.dim,
                data_path.display(),
                dim
            )
        });
    }
    Ok(())
}

fn classify(c: &Common, model_path: &Path, embeddings: &Path) -> Result<()> {
    let out = require_out(c)?;
    let model = classifier::load_model(model_path)?;
    let matrix = load_embeddings(embeddings)?;
    check_model_dim(&model, model_path, matrix.dim(), embeddings)?;
    let mut text = String::new();
    let mut counts = vec![0usize; model.classes.len()];
    for (row, v) in matrix.iter_rows().enumerate() {
        let x = model_input(&model, v, row)?;
        let probabilities = classifier::forward(&model, &x)?;
        let p = classifier::predict(&model, &x)?;
        counts[p.class_index] += 1;
        text.push_str(&serde_json::to_string(&PredictionLine {
            row,
            class: &p.class,
            class_index: p.class_index,
            probability: p.probability,
            probabilities,
        })?);
        text.push('\n');
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    let summary: Vec<String> = model
        .classes
        .iter()
        .zip(&counts)
        .map(|(name, n)| format!("{name} {n}"))
        .collect();
    println!("classified {} rows: {}", matrix.rows(), summary.join(", "));
    Ok(())
}

// ------------------------------------------------------------ evaluate

#[derive(Serialize)]
struct EvaluateSettings {
    model: String,
    eval: String,
    eval_embeddings: String,
    queryset: Option<String>,
    baselines: Vec<&'static str>,
    seed: u64,
}

#[derive(Serialize)]
struct EvaluationFile {
    config: EvaluateSettings,
    topic: Option<String>,
    examples: usize,
    methods: Vec<EvalReport>,
    dense_threshold: Option<f64>,
    keywords: Option<Vec<String>>,
    warnings: Vec<String>,
}

fn evaluate(
    c: &Common,
    model_path: &Path,
    eval_path: &Path,
    eval_embeddings: &Path,
    baselines: &[Baseline],
    qs_path: Option<&Path>,
) -> Result<()> {
    let out = require_out(c)?;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let mut wanted = baselines.to_vec();
    wanted.dedup();
    let needs_queries = wanted.iter().any(|b| *b != Baseline::Random);
    if needs_queries && qs_path.is_none() {
        return Err(usage("the keyword and dense baselines need --queryset"));
    }
    let model = classifier::load_model(model_path)?;
    let examples = load_eval_set(eval_path, eval_embeddings)?;
    if let Some(first) = examples.first() {
        check_model_dim(&model, model_path, first.vector.len(), eval_embeddings)?;
    }
    let queryset = qs_path.map(QuerySet::load).transpose()?;

    let mut methods = vec![score(
        "model",
        &pipeline::classify_binary(&model, &examples)?,
        &examples,
    )?];
    let mut dense_threshold = None;
    let mut keywords = None;
    let mut warnings = Vec::new();
    for b in &wanted {
        let predictions = match b {
            Baseline::Random => baseline_random(examples.len(), seed),
            Baseline::Keyword => {
                let qs = queryset.as_ref().expect("checked above");
                let texts: Vec<&str> = qs
                    .positive_queries
                    .iter()
                    .map(|q| q.text.as_str())
                    .collect();
                let outcome = baseline_keyword(&examples, &texts, DEFAULT_STOPWORDS);
                warnings.extend(outcome.warning);
                keywords = Some(outcome.keywords);
                outcome.predictions
            }
            Baseline::Dense => {
                let qs = queryset.as_ref().expect("checked above");
                let outcome = baseline_dense(&examples, &qs.positive_vectors())?;
                dense_threshold = Some(outcome.threshold);
                outcome.predictions
            }
        };
        methods.push(score(b.name(), &predictions, &examples)?);
    }
    for m in &methods {
        println!(
            "{:<8} f1 {:.4}  accuracy {:.4}  precision {:.4}  recall {:.4}",
            m.method, m.f1, m.accuracy, m.precision, m.recall
        );
    }
    let report = EvaluationFile {
        config: EvaluateSettings {
            model: show(model_path),
            eval: show(eval_path),
            eval_embeddings: show(eval_embeddings),
            queryset: qs_path.map(show),
            baselines: wanted.iter().map(|b| b.name()).collect(),
            seed,
        },
        topic: queryset.map(|q| q.topic),
        examples: examples.len(),
        methods,
        dense_threshold,
        keywords,
        warnings,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_json(out, &report)?;
    println!("wrote {}", out.display());
    Ok(())
}

// --------------------------------------------------------------- sweep

#[derive(Serialize)]
struct SweepSettingsFile {
    index: String,
    queryset: String,
    eval: String,
    eval_embeddings: String,
    neg_strategy: NegStrategy,
    val_ratio: f64,
    train: TrainConfig,
    seed: u64,
    repeats: usize,
}

#[derive(Serialize)]
struct SweepFile {
    config: SweepSettingsFile,
    query_counts: Vec<usize>,
    ks: Vec<usize>,
    /// Mean accuracy over successful repeats; rows follow `query_counts`,
    /// columns follow `ks`.
    accuracy: Vec<Vec<Option<f64>>>,
    f1: Vec<Vec<Option<f64>>>,
    failed_cells: usize,
    cells: Vec<SweepCell>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let ok: Vec<f64> = values.flatten().collect();
    (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    c: &Common,
    index_dir: &Path,
    qs_path: &Path,
    eval_path: &Path,
    eval_embeddings: &Path,
    queries: &[usize],
    ks: &[usize],
    repeats: usize,
) -> Result<()> {
    let out = require_out(c)?;
    if queries.is_empty() || ks.is_empty() || repeats == 0 {
        return Err(usage("the sweep grid is empty"));
    }
    if let Some(n) = queries.iter().find(|&&n| n < 2) {
        return Err(usage(format!(
            "every grid cell needs at least 2 queries, got {n}"
        )));
    }
    if ks.contains(&0) {
        return Err(usage("every k in the grid must be at least 1"));
    }
    if c.k.is_some() {
        return Err(usage("sweep takes its k values from --ks"));
    }
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let t = train_settings(c, None)?;
    let settings = SweepSettings {
        strategy: c.neg_strategy.unwrap_or(NegStrategy::M1),
        val_ratio: t.val_ratio,
        train: TrainConfig {
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            seed,
        },
    };
    let (collection, _) = load_index(index_dir)?;
    let pool = QuerySet::load(qs_path)?;
    let examples = load_eval_set(eval_path, eval_embeddings)?;

    let grid: Vec<(usize, usize)> = queries
        .iter()
        .flat_map(|&n| ks.iter().map(move |&k| (n, k)))
        .flat_map(|cell| std::iter::repeat_n(cell, repeats))
        .collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(n, k))| {
            let cell_seed = seed.wrapping_add(i as u64);
            pipeline::sweep_cell(&collection, &pool, &examples, n, k, cell_seed, &settings)
        })
        .collect();

    let table = |metric: fn(&SweepCell) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        queries
            .iter()
            .map(|&n| {
                ks.iter()
                    .map(|&k| {
                        mean(
                            cells
                                .iter()
                                .filter(|c| c.n_queries == n && c.k == k)
                                .map(metric),
                        )
                    })
                    .collect()
            })
            .collect()
    };
    let accuracy = table(|c| c.accuracy);
    let f1 = table(|c| c.f1);
    let failed_cells = cells.iter().filter(|c| c.error.is_some()).count();

    let header: Vec<String> = ks
        .iter()
        .map(|k| format!("{:>8}", format!("k={k}")))
        .collect();
    println!("{:>6} {}", "n", header.join(""));
    for (n, row) in queries.iter().zip(&accuracy) {
        let cols: Vec<String> = row
            .iter()
            .map(|a| a.map_or(format!("{:>8}", "-"), |a| format!("{a:>8.4}")))
            .collect();
        println!("{n:>6} {}", cols.join(""));
    }
    if failed_cells > 0 {
        println!("{failed_cells} cell runs failed; see the report for reasons");
    }

    let file = SweepFile {
        config: SweepSettingsFile {
            index: show(index_dir),
            queryset: show(qs_path),
            eval: show(eval_path),
            eval_embeddings: show(eval_embeddings),
            neg_strategy: settings.strategy,
            val_ratio: settings.val_ratio,
            train: settings.train,
            seed,
            repeats,
        },
        query_counts: queries.to_vec(),
        ks: ks.to_vec(),
        accuracy,
        f1,
        failed_cells,
        cells,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_json(out, &file)?;
    println!("wrote {}", out.display());
    Ok(())
}

// --------------------------------------------------------------- synth

fn synth(
    c: &Common,
    world: &SyntheticWorld,
    queries: usize,
    negative_queries: usize,
    eval_positives: usize,
    eval_negatives: usize,
) -> Result<()> {
    let out = require_out(c)?;
    let seed = world.config().seed;
    let (collection, _) = world.corpus();
    let qs = world.queryset(queries, negative_queries, seed);
    let hard = if world.has_hard_negative() {
        eval_negatives / 2
    } else {
        0
    };
    let eval = world.eval_set(eval_positives, eval_negatives - hard, hard, seed);
    let dim = world.config().dim;
    let eval_matrix = EmbeddingMatrix::new(
        eval.len(),
        dim,
        eval.iter().flat_map(|e| e.vector.iter().copied()).collect(),
        false,
    )?;

    ensure_dir(out)?;
    write_passages(collection.passages(), out.join("passages.jsonl"))?;
    write_embeddings(collection.embeddings(), out.join("embeddings.drem"))?;
    qs.save(out.join("queryset.json"))?;
    write_eval_lines(&eval, out.join("eval.jsonl"))?;
    write_embeddings(&eval_matrix, out.join("eval.drem"))?;
    println!(
        "wrote {} passages, {} + {} queries and {} eval examples (dim {}) to {}",
        collection.len(),
        qs.positive_queries.len(),
        qs.negative_queries.len(),
        eval.len(),
        dim,
        out.display()
    );
    Ok(())
}
