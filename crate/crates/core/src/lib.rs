//! Corpus quality filtering with contrasting n-gram language models.
//!
//! The idea: train one smoothed n-gram model on text you trust (the "good"
//! model) and one on text you don't (the "bad" model). Score every document
//! by its perplexity under each, z-score standardize the two columns over
//! the corpus, and combine them as
//! `ens = alpha * z_good - (1 - alpha) * z_bad`. Documents that look like
//! the clean corpus *and* unlike the noisy one get low scores; keeping the
//! bottom percentiles filters the corpus. Against labeled data, recall of
//! high-quality documents measures how well a filter works.
//!
//! Module map, roughly in pipeline order:
//!
//! - [`tokenize`]: normalization and tokenization, versioned.
//! - [`corpus`]: documents and JSONL shard reading.
//! - [`vocab`]: frequency-ranked vocabulary with reserved marker ids.
//! - [`counts`]: raw n-gram counting with document wrapping.
//! - [`estimate`]: interpolated modified Kneser-Ney estimation.
//! - [`model`]: trained models — queries, perplexity, binary format.
//! - [`ensemble`]: standardization statistics and score combination.
//! - [`filter`]: percentile filtering and recall evaluation.
//! - [`pipeline`]: sharded scoring/filtering runs and benchmarks.
//!
//! Everything is deterministic by construction: training, scoring, and
//! filtering produce byte-identical outputs for identical inputs and
//! configuration, regardless of worker count.

pub mod corpus;
pub mod counts;
pub mod ensemble;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod io_util;
pub mod model;
pub mod pipeline;
pub mod tokenize;
pub mod vocab;

pub use corpus::{Document, ShardStats};
pub use ensemble::{EnsembleConfig, NormalizationStats, ScoreRecord, DEFAULT_ALPHA};
pub use error::{Error, ErrorKind, Result};
pub use estimate::{DiscountMode, TrainingConfig, DEFAULT_ORDER};
pub use filter::{FilterReport, FilterSpec, ScoreField, DEFAULT_GT_THRESHOLD, DEFAULT_PERCENTILES};
pub use model::NGramModel;
pub use pipeline::{BenchMode, BenchResult, FilterOptions, PipelineConfig};
pub use vocab::{Vocabulary, DEFAULT_MAX_VOCAB};
