//! Metrics and ablation baselines.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::retrieval::{compute_threshold, cosine};
use crate::seeded_rng;

/// Fine-grained class of an evaluation example: positive, easy negative or
/// hard negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FineClass {
    P,
    EN,
    HN,
}

impl FineClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FineClass::P => "P",
            FineClass::EN => "EN",
            FineClass::HN => "HN",
        }
    }

    pub fn is_positive(self) -> bool {
        self == FineClass::P
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalExample {
    pub vector: Vec<f32>,
    pub text: String,
    pub fine_class: FineClass,
}

impl EvalExample {
    pub fn gold_positive(&self) -> bool {
        self.fine_class.is_positive()
    }
}

#[derive(Debug, Deserialize)]
struct EvalLine {
    text: String,
    fine_class: FineClass,
}

/// Reads an eval JSONL file plus its parallel embedding file.
pub fn load_eval_set(
    examples_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<Vec<EvalExample>> {
    let path = examples_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<EvalLine> = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let matrix = load_embeddings(embeddings_path)?;
    join_eval_set(lines, &matrix)
}

fn join_eval_set(lines: Vec<EvalLine>, matrix: &EmbeddingMatrix) -> Result<Vec<EvalExample>> {
    if lines.len() != matrix.rows() {
        return Err(Error::CountMismatch {
            passages: lines.len(),
            rows: matrix.rows(),
        });
    }
    Ok(lines
        .into_iter()
        .zip(matrix.iter_rows())
        .map(|(l, v)| EvalExample {
            vector: v.to_vec(),
            text: l.text,
            fine_class: l.fine_class,
        })
        .collect())
}

/// Writes the eval JSONL half of an eval set (vectors go to a DREM file).
pub fn write_eval_lines(examples: &[EvalExample], path: impl AsRef<Path>) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        text: &'a str,
        fine_class: FineClass,
    }
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        out.push_str(
            &serde_json::to_string(&Line {
                text: &ex.text,
                fine_class: ex.fine_class,
            })
            .expect("eval line serializes"),
        );
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Fraction of each fine class given its correct coarse label. Classes
    /// absent from the examples are omitted.
    pub per_fine_class_accuracy: BTreeMap<String, f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion counts and derived metrics for positive-class predictions.
pub fn score(method: &str, predictions: &[bool], examples: &[EvalExample]) -> Result<EvalReport> {
    if predictions.len() != examples.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} examples",
            predictions.len(),
            examples.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut fine: BTreeMap<FineClass, (usize, usize)> = BTreeMap::new();
    for (&pred, ex) in predictions.iter().zip(examples) {
        let gold = ex.gold_positive();
        match (pred, gold) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
        let entry = fine.entry(ex.fine_class).or_default();
        entry.1 += 1;
        if pred == gold {
            entry.0 += 1;
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        method: method.to_string(),
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, examples.len()),
        per_fine_class_accuracy: fine
            .into_iter()
            .map(|(c, (ok, n))| (c.as_str().to_string(), ratio(ok, n)))
            .collect(),
    })
}

/// `method -> category -> score`.
pub type ScoreTable = BTreeMap<String, BTreeMap<String, f64>>;

/// Mean competition rank of each method across categories (rank 1 is the
/// highest score; tied methods share the smallest rank of their block).
pub fn average_rank(table: &ScoreTable) -> Result<BTreeMap<String, f64>> {
    let categories: BTreeSet<&String> = table.values().flat_map(|row| row.keys()).collect();
    let mut cells: BTreeMap<&String, Vec<f64>> = BTreeMap::new();
    for category in &categories {
        let mut column = Vec::with_capacity(table.len());
        for (method, row) in table {
            let v = row.get(*category).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("method {method:?} has no score for {category:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "score for {method:?} / {category:?}"
                )));
            }
            column.push(v);
        }
        for (method, &v) in table.keys().zip(&column) {
            let rank = 1 + column.iter().filter(|&&o| o > v).count();
            cells.entry(method).or_default().push(rank as f64);
        }
    }
    Ok(table
        .keys()
        .map(|m| {
            let ranks = cells.get(m).map(Vec::as_slice).unwrap_or(&[]);
            let mean = if ranks.is_empty() {
                1.0
            } else {
                ranks.iter().sum::<f64>() / ranks.len() as f64
            };
            (m.clone(), mean)
        })
        .collect())
}

/// Fair-coin prediction per example.
pub fn baseline_random(count: usize, seed: u64) -> Vec<bool> {
    let mut rng = seeded_rng(seed);
    (0..count).map(|_| rng.random_bool(0.5)).collect()
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "also",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "known",
    "many",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "one",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

const MIN_TOKEN_CHARS: usize = 3;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordOutcome {
    pub predictions: Vec<bool>,
    /// Surviving query tokens, sorted.
    pub keywords: Vec<String>,
    pub warning: Option<String>,
}

/// Keyword-overlap baseline: positive iff the example shares any
/// non-stopword query token of three or more characters.
pub fn baseline_keyword<S: AsRef<str>>(
    examples: &[EvalExample],
    query_texts: &[S],
    stopwords: &[&str],
) -> KeywordOutcome {
    let stop: HashSet<String> = stopwords.iter().map(|s| s.to_lowercase()).collect();
    let keywords: BTreeSet<String> = query_texts
        .iter()
        .flat_map(|q| tokenize(q.as_ref()).collect::<Vec<_>>())
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS && !stop.contains(t))
        .collect();
    let warning = keywords
        .is_empty()
        .then(|| "no query tokens survive filtering; every example predicted negative".to_string());
    let predictions = examples
        .iter()
        .map(|ex| tokenize(&ex.text).any(|t| keywords.contains(&t)))
        .collect();
    KeywordOutcome {
        predictions,
        keywords: keywords.into_iter().collect(),
        warning,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOutcome {
    pub predictions: Vec<bool>,
    pub threshold: f64,
}

/// Positive iff the best cosine against any query reaches the MQR threshold.
pub fn baseline_dense<V: AsRef<[f32]>>(
    examples: &[EvalExample],
    query_vecs: &[V],
) -> Result<DenseOutcome> {
    let threshold = compute_threshold(query_vecs)?;
    let mut predictions = Vec::with_capacity(examples.len());
    for ex in examples {
        let mut hit = false;
        for q in query_vecs {
            if cosine(q.as_ref(), &ex.vector)? >= threshold {
                hit = true;
                break;
            }
        }
        predictions.push(hit);
    }
    Ok(DenseOutcome {
        predictions,
        threshold,
    })
}
