//! The `fewtopic` command line.
//!
//! Every subcommand reads files, writes JSON reports to `--out` and prints a
//! short human summary. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error, 3 numeric failure.

mod commands;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fewtopic_core::dataset::NegStrategy;

pub use commands::IndexManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const DEFAULT_SEED: u64 = 1234;
pub const DEFAULT_K_BINARY: usize = 10_000;
pub const DEFAULT_K_MULTICLASS: usize = 50;
pub const DEFAULT_VAL_RATIO: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(
    name = "fewtopic",
    version,
    about = "Few-shot topic classifiers from example queries"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand. Unset values fall back to the
/// command's own default (or, for `refine`, the prior run's settings).
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Per-query retrieval depth.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_parser = parse_strategy)]
    pub neg_strategy: Option<NegStrategy>,
    #[arg(long, global = true)]
    pub val_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    /// Output directory or file, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<NegStrategy, String> {
    s.parse().map_err(|e: fewtopic_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a passage corpus into an index directory.
    Index {
        #[arg(long)]
        passages: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Overwrite an existing index.
        #[arg(long)]
        force: bool,
    },
    /// Build a labeled dataset by multi-query retrieval.
    BuildDataset {
        #[arg(long)]
        index: PathBuf,
        /// One file builds a binary topic dataset; several build a
        /// multi-class dataset with one class per file.
        #[arg(long, required = true)]
        queryset: Vec<PathBuf>,
    },
    /// Train a classifier head on a dataset file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Rebuild the dataset with negative queries and retrain; the previous
    /// model in `--out` is kept under a versioned name.
    Refine {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queryset: PathBuf,
    },
    /// Predict a label and probability for every row of an embedding file.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Score a model and optional baselines on a labeled eval set.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        eval_embeddings: PathBuf,
        /// Comma-separated subset of random, keyword, dense.
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<Baseline>,
        /// Query set for the keyword and dense baselines.
        #[arg(long)]
        queryset: Option<PathBuf>,
    },
    /// Accuracy over a grid of query counts and retrieval depths.
    Sweep {
        #[arg(long)]
        index: PathBuf,
        /// Pool the query subsets are drawn from.
        #[arg(long)]
        queryset: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        eval_embeddings: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,50")]
        queries: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,50,200")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Write a synthetic corpus, query set and eval set for trying things out.
    Synth {
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        #[arg(long, default_value_t = 250)]
        per_cluster: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Add a hard-negative cluster at this center cosine to the topic.
        #[arg(long)]
        hard_negative_cosine: Option<f64>,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long, default_value_t = 3)]
        negative_queries: usize,
        #[arg(long, default_value_t = 200)]
        eval_positives: usize,
        #[arg(long, default_value_t = 200)]
        eval_negatives: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Baseline {
    Random,
    Keyword,
    Dense,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Keyword => "keyword",
            Baseline::Dense => "dense",
        }
    }
}

/// Bad flags or flag combinations. Maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    let numeric = err
        .chain()
        .filter_map(|c| c.downcast_ref::<fewtopic_core::Error>())
        .any(fewtopic_core::Error::is_numeric);
    if numeric {
        EXIT_NUMERIC
    } else {
        EXIT_DATA
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    commands::dispatch(cli)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
