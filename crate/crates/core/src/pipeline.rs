//! Sharded scoring runs, filtering runs, and throughput benchmarks.
//!
//! Scoring makes two passes. Pass one reads every shard in parallel,
//! tokenizes each document once, computes its perplexity under the good
//! model (and the bad model when present), and folds per-shard moment
//! accumulators in document order. The per-shard partials are then merged
//! in sorted-shard order, so the resulting statistics — and everything
//! derived from them — are byte-identical no matter how many workers ran.
//! Pass two writes one `scores-<shard>.jsonl` per input shard, in input
//! order, plus `stats.json` and `run.json`.
//!
//! Filtering reads the persisted score files, picks percentile thresholds,
//! and writes `kept-<p>.jsonl` / `dropped-<p>.jsonl` / `report-<p>.json`.
//! Because the ensemble weight only enters at this stage when re-deriving
//! `ens` from persisted statistics, sweeps over alpha never re-score.
//!
//! All outputs are written to a temp file and renamed into place, so an
//! interrupted run never leaves a truncated file behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Document, ShardStats};
use crate::ensemble::{
    ensemble_score, score_corpus, EnsembleConfig, NormalizationStats, RunningMoments,
    ScoreRecord, DEFAULT_ALPHA,
};
use crate::error::{Error, Result};
use crate::filter::{partition_report, validate_percentile, FilterReport, FilterSpec, ScoreField};
use crate::io_util::{atomic_write, atomic_write_json};
use crate::model::NGramModel;
use crate::tokenize::tokenize;

/// Abort scoring when more than this percentage of input lines is malformed.
pub const MALFORMED_ABORT_PERCENT: f64 = 1.0;

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub good_model: PathBuf,
    pub bad_model: Option<PathBuf>,
    /// Input shard paths or glob patterns.
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    pub alpha: f64,
    pub workers: usize,
}

impl PipelineConfig {
    pub fn new(
        good_model: impl Into<PathBuf>,
        inputs: Vec<String>,
        output_dir: impl Into<PathBuf>,
    ) -> PipelineConfig {
        PipelineConfig {
            good_model: good_model.into(),
            bad_model: None,
            inputs,
            output_dir: output_dir.into(),
            alpha: DEFAULT_ALPHA,
            workers: default_workers(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || self.alpha.is_nan() {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.workers == 0 {
            return Err(Error::InvalidWorkers);
        }
        Ok(())
    }
}

/// Resolves paths and glob patterns into a sorted, deduplicated file list.
/// Every pattern must match something; silently scoring half the corpus is
/// worse than failing.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    if patterns.is_empty() {
        return Err(Error::EmptyList("input"));
    }
    let mut files = Vec::new();
    for pattern in patterns {
        let direct = Path::new(pattern);
        if direct.is_file() {
            files.push(direct.to_path_buf());
            continue;
        }
        let mut any = false;
        let matches = glob::glob(pattern)
            .map_err(|e| Error::BadPattern { pattern: pattern.clone(), reason: e.to_string() })?;
        for entry in matches {
            let path = entry.map_err(|e| {
                let at = e.path().to_path_buf();
                Error::file(at, e.into())
            })?;
            if path.is_file() {
                files.push(path);
                any = true;
            }
        }
        if !any {
            return Err(Error::NoInputs(pattern.clone()));
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

/// Shard names used in output file names: the file stem, disambiguated
/// with a numeric suffix when two shards in different directories share one.
fn shard_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "shard".to_string())
        })
        .collect();
    let mut names = Vec::with_capacity(stems.len());
    for (i, stem) in stems.iter().enumerate() {
        let clashes = stems[..i].iter().filter(|s| *s == stem).count();
        if clashes == 0 {
            names.push(stem.clone());
        } else {
            names.push(format!("{stem}-{}", clashes + 1));
        }
    }
    names
}

struct ScoredDoc {
    id: String,
    ppl_good: f64,
    ppl_bad: Option<f64>,
    quality_score: Option<f64>,
}

struct ScoredShard {
    name: String,
    stats: ShardStats,
    rows: Vec<ScoredDoc>,
    good: RunningMoments,
    bad: RunningMoments,
}

/// Written as `run.json` next to the score files: the knobs and tallies of
/// one scoring run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub alpha: f64,
    pub workers: usize,
    pub single_model: bool,
    pub shards: Vec<String>,
    pub totals: ShardStats,
}

/// Written as `stats.json`: the standardization statistics plus the
/// fingerprints of the models' training corpora, so a filter run can tell
/// which models its scores came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsFile {
    #[serde(flatten)]
    pub stats: NormalizationStats,
    pub good_model_fingerprint: String,
    pub bad_model_fingerprint: String,
}

#[derive(Debug)]
pub struct ScoringSummary {
    pub score_files: Vec<PathBuf>,
    pub stats: Option<NormalizationStats>,
    pub stats_file: Option<PathBuf>,
    pub run_file: PathBuf,
    pub totals: ShardStats,
}

/// Scores every input shard. With only a good model, score records carry
/// just `ppl_good` and no `stats.json` is written — there is nothing to
/// standardize against a missing column.
pub fn run_scoring(config: &PipelineConfig) -> Result<ScoringSummary> {
    config.validate()?;
    let good = NGramModel::load(&config.good_model)?;
    let bad = match &config.bad_model {
        Some(path) => Some(NGramModel::load(path)?),
        None => None,
    };
    if let Some(b) = &bad {
        let (gv, bv) = (good.metadata().tokenizer_version, b.metadata().tokenizer_version);
        if gv != bv {
            return Err(Error::TokenizerMismatch { good: gv, bad: bv });
        }
    }
    let shards = expand_inputs(&config.inputs)?;
    let names = shard_names(&shards);
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::file(&config.output_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let scored: Vec<ScoredShard> = pool.install(|| {
        shards
            .par_iter()
            .zip(names.par_iter())
            .map(|(path, name)| score_shard(path, name, &good, bad.as_ref()))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut totals = ShardStats::default();
    for shard in &scored {
        totals.absorb(&shard.stats);
    }
    check_malformed(&totals)?;
    if totals.docs == 0 {
        return Err(Error::EmptyCorpus);
    }

    // Merge per-shard partials in sorted-shard order; worker scheduling
    // cannot change the result.
    let stats = match &bad {
        Some(_) => {
            let mut g = RunningMoments::default();
            let mut b = RunningMoments::default();
            for shard in &scored {
                g.merge(&shard.good);
                b.merge(&shard.bad);
            }
            Some(NormalizationStats::from_moments(&g, &b)?)
        }
        None => None,
    };
    let ens_config = match stats {
        Some(st) => Some(EnsembleConfig::new(config.alpha, st)?),
        None => None,
    };

    let score_files: Vec<PathBuf> = pool.install(|| {
        scored
            .par_iter()
            .map(|shard| write_scores(&config.output_dir, shard, ens_config.as_ref()))
            .collect::<Result<Vec<_>>>()
    })?;

    let stats_file = match (&stats, &bad) {
        (Some(st), Some(b)) => {
            let path = config.output_dir.join("stats.json");
            let payload = StatsFile {
                stats: *st,
                good_model_fingerprint: good.metadata().fingerprint_hex(),
                bad_model_fingerprint: b.metadata().fingerprint_hex(),
            };
            atomic_write_json(&path, &payload)?;
            Some(path)
        }
        _ => None,
    };

    let run_file = config.output_dir.join("run.json");
    atomic_write_json(
        &run_file,
        &RunMetadata {
            alpha: config.alpha,
            workers: config.workers,
            single_model: bad.is_none(),
            shards: names,
            totals,
        },
    )?;

    Ok(ScoringSummary { score_files, stats, stats_file, run_file, totals })
}

/// Enforces the [`MALFORMED_ABORT_PERCENT`] threshold on aggregated shard
/// tallies. Training and scoring both refuse corpora that are mostly noise.
pub fn check_malformed(totals: &ShardStats) -> Result<()> {
    if totals.malformed as f64 * 100.0 > totals.lines as f64 * MALFORMED_ABORT_PERCENT {
        return Err(Error::TooManyMalformed {
            malformed: totals.malformed,
            lines: totals.lines,
            percent: MALFORMED_ABORT_PERCENT,
        });
    }
    Ok(())
}

fn score_shard(
    path: &Path,
    name: &str,
    good: &NGramModel,
    bad: Option<&NGramModel>,
) -> Result<ScoredShard> {
    let (docs, stats) = read_jsonl(path)?;
    let rows: Vec<ScoredDoc> = docs
        .par_iter()
        .map(|doc| {
            let tokens = tokenize(&doc.text);
            let ids_good = good.vocab().encode(tokens.iter().map(String::as_str));
            let ppl_good = good.perplexity_ids(&ids_good);
            let ppl_bad = bad.map(|m| {
                let ids = m.vocab().encode(tokens.iter().map(String::as_str));
                m.perplexity_ids(&ids)
            });
            ScoredDoc { id: doc.id.clone(), ppl_good, ppl_bad, quality_score: doc.quality_score }
        })
        .collect();
    let mut good_moments = RunningMoments::default();
    let mut bad_moments = RunningMoments::default();
    for row in &rows {
        good_moments.push(row.ppl_good);
        if let Some(pb) = row.ppl_bad {
            bad_moments.push(pb);
        }
    }
    Ok(ScoredShard { name: name.to_string(), stats, rows, good: good_moments, bad: bad_moments })
}

fn write_scores(
    dir: &Path,
    shard: &ScoredShard,
    ens_config: Option<&EnsembleConfig>,
) -> Result<PathBuf> {
    let path = dir.join(format!("scores-{}.jsonl", shard.name));
    atomic_write(&path, |w| {
        use std::io::Write;
        for row in &shard.rows {
            let ens = match (ens_config, row.ppl_bad) {
                (Some(cfg), Some(ppl_bad)) => Some(ensemble_score(row.ppl_good, ppl_bad, cfg)?),
                _ => None,
            };
            let record = ScoreRecord {
                doc_id: row.id.clone(),
                ppl_good: row.ppl_good,
                ppl_bad: row.ppl_bad,
                ens,
                quality_score: row.quality_score,
            };
            serde_json::to_writer(&mut *w, &record)
                .map_err(|e| Error::file(&path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::file(&path, e))?;
        }
        Ok(())
    })?;
    Ok(path)
}

/// Reads every `scores-*.jsonl` in a directory, in sorted filename order.
pub fn load_score_records(score_dir: &Path) -> Result<Vec<ScoreRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(score_dir)
        .map_err(|e| Error::file(score_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("scores-") && n.ends_with(".jsonl"))
        })
        .collect();
    if paths.is_empty() {
        return Err(Error::NoInputs(score_dir.join("scores-*.jsonl").display().to_string()));
    }
    paths.sort();
    let mut records = Vec::new();
    for path in &paths {
        let contents = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScoreRecord = serde_json::from_str(line).map_err(|_| {
                Error::BadScoreRecord { path: path.clone(), line: i as u64 + 1 }
            })?;
            records.push(record);
        }
    }
    Ok(records)
}

pub fn load_stats(path: &Path) -> Result<StatsFile> {
    let contents = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let parsed: StatsFile = serde_json::from_str(&contents)
        .map_err(|e| Error::BadStatsFile { path: path.to_path_buf(), reason: e.to_string() })?;
    parsed.stats.validate()?;
    Ok(parsed)
}

#[derive(Debug, Clone)]
pub struct FilterOptions {
    pub percentiles: Vec<f64>,
    pub score_field: ScoreField,
    pub gt_threshold: f64,
    /// Re-derive `ens` at this alpha from the persisted statistics instead
    /// of using the stored column.
    pub alpha: Option<f64>,
    /// Write `kept-<p>.jsonl` / `dropped-<p>.jsonl` next to the reports.
    pub write_corpora: bool,
    /// Fail when no record meets the ground-truth threshold (evaluation)
    /// instead of reporting without recall (filtering).
    pub strict_recall: bool,
}

#[derive(Debug)]
pub struct FilterOutcome {
    pub reports: Vec<FilterReport>,
    pub average_recall: Option<f64>,
    pub report_files: Vec<PathBuf>,
    pub kept_files: Vec<PathBuf>,
    pub dropped_files: Vec<PathBuf>,
    pub total_records: u64,
    pub missing_ground_truth: bool,
}

/// Filters persisted scores at each percentile and writes reports.
pub fn run_filter(score_dir: &Path, out_dir: &Path, opts: &FilterOptions) -> Result<FilterOutcome> {
    if opts.percentiles.is_empty() {
        return Err(Error::EmptyList("percentile"));
    }
    for &p in &opts.percentiles {
        validate_percentile(p)?;
    }
    let mut records = load_score_records(score_dir)?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(alpha) = opts.alpha {
        let stats = load_stats(&score_dir.join("stats.json"))?;
        let config = EnsembleConfig::new(alpha, stats.stats)?;
        score_corpus(&mut records, &config)?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;

    let mut outcome = FilterOutcome {
        reports: Vec::new(),
        average_recall: None,
        report_files: Vec::new(),
        kept_files: Vec::new(),
        dropped_files: Vec::new(),
        total_records: records.len() as u64,
        missing_ground_truth: false,
    };
    for &p in &opts.percentiles {
        let spec = FilterSpec::new(p, opts.score_field)?;
        let (report, kept, dropped) = partition_report(&records, &spec, opts.gt_threshold)?;
        if report.recall.is_none() {
            if opts.strict_recall {
                return Err(Error::NoGroundTruth(opts.gt_threshold));
            }
            outcome.missing_ground_truth = true;
        }
        let tag = p.to_string();
        if opts.write_corpora {
            let kept_path = out_dir.join(format!("kept-{tag}.jsonl"));
            let dropped_path = out_dir.join(format!("dropped-{tag}.jsonl"));
            write_record_file(&kept_path, &kept)?;
            write_record_file(&dropped_path, &dropped)?;
            outcome.kept_files.push(kept_path);
            outcome.dropped_files.push(dropped_path);
        }
        let report_path = out_dir.join(format!("report-{tag}.json"));
        atomic_write_json(&report_path, &report)?;
        outcome.report_files.push(report_path);
        outcome.reports.push(report);
    }
    if !outcome.missing_ground_truth {
        let mean = outcome.reports.iter().filter_map(|r| r.recall).sum::<f64>()
            / outcome.reports.len() as f64;
        outcome.average_recall = Some(mean);
    }
    Ok(outcome)
}

fn write_record_file(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    atomic_write(path, |w| {
        use std::io::Write;
        for record in records {
            serde_json::to_writer(&mut *w, record).map_err(|e| Error::file(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::file(path, e))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    SingleGood,
    Ensemble,
}

impl BenchMode {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMode::SingleGood => "single_good",
            BenchMode::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub mode: BenchMode,
    pub docs_processed: u64,
    pub wall_seconds: f64,
    pub throughput_docs_per_s: f64,
}

/// Times pass-one scoring (tokenize + perplexity) over pre-loaded
/// documents; file I/O happens before the clock starts so the two modes
/// compare model cost, not disk speed.
pub fn bench(config: &PipelineConfig, mode: BenchMode) -> Result<BenchResult> {
    config.validate()?;
    let good = NGramModel::load(&config.good_model)?;
    let bad = match (mode, &config.bad_model) {
        (BenchMode::Ensemble, Some(path)) => Some(NGramModel::load(path)?),
        (BenchMode::Ensemble, None) => return Err(Error::MissingBadModel),
        (BenchMode::SingleGood, _) => None,
    };
    if let Some(b) = &bad {
        let (gv, bv) = (good.metadata().tokenizer_version, b.metadata().tokenizer_version);
        if gv != bv {
            return Err(Error::TokenizerMismatch { good: gv, bad: bv });
        }
    }
    let shards = expand_inputs(&config.inputs)?;
    let mut docs: Vec<Document> = Vec::new();
    let mut totals = ShardStats::default();
    for path in &shards {
        let (mut d, s) = read_jsonl(path)?;
        docs.append(&mut d);
        totals.absorb(&s);
    }
    check_malformed(&totals)?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let start = Instant::now();
    let checksum: f64 = pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                let tokens = tokenize(&doc.text);
                let ids = good.vocab().encode(tokens.iter().map(String::as_str));
                let mut ppl = good.perplexity_ids(&ids);
                if let Some(b) = &bad {
                    let ids = b.vocab().encode(tokens.iter().map(String::as_str));
                    ppl += b.perplexity_ids(&ids);
                }
                ppl
            })
            .sum()
    });
    let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
    std::hint::black_box(checksum);
    Ok(BenchResult {
        mode,
        docs_processed: docs.len() as u64,
        wall_seconds,
        throughput_docs_per_s: docs.len() as f64 / wall_seconds,
    })
}
