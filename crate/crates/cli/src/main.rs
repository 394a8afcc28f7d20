//! The `cgnm` binary: corpus quality filtering from the shell.
//!
//! Six subcommands cover the whole workflow. `train` fits a smoothed
//! n-gram model to JSONL shards; `score` computes per-document perplexities
//! and ensemble scores; `filter` keeps the lowest-scoring percentiles;
//! `eval` reports recall of labeled high-quality documents; `sweep`
//! re-evaluates the ensemble weight across a grid without re-scoring; and
//! `bench` times scoring throughput.
//!
//! The binary stays a thin shell: each subcommand parses flags, calls one
//! library entry point, prints a short human summary to stdout, and leaves
//! machine-readable JSON files behind — written atomically, so an
//! interrupted or failed run never leaves a truncated artifact. Warnings
//! and errors go to stderr. Exit codes classify failures so scripts can
//! tell a typo from a broken corpus: 1 for usage errors, 2 for unusable
//! data, 3 for I/O. Worker parallelism lives entirely inside the pipeline
//! library; the shell itself is single-threaded.

use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cgnm_core::corpus::read_jsonl;
use cgnm_core::counts::count_ngrams;
use cgnm_core::ensemble::{alpha_sweep, default_alpha_grid};
use cgnm_core::estimate::estimate_model;
use cgnm_core::io_util::atomic_write_json;
use cgnm_core::pipeline::{
    bench, check_malformed, default_workers, expand_inputs, load_score_records, load_stats,
    run_filter, run_scoring, FilterOutcome,
};
use cgnm_core::{
    BenchMode, DiscountMode, Error, ErrorKind, FilterOptions, PipelineConfig, Result, ScoreField,
    ShardStats, TrainingConfig, Vocabulary, DEFAULT_ALPHA, DEFAULT_GT_THRESHOLD,
    DEFAULT_MAX_VOCAB, DEFAULT_ORDER, DEFAULT_PERCENTILES,
};

#[derive(Parser)]
#[command(
    name = "cgnm",
    version,
    about = "Corpus quality filtering with contrasting n-gram language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Kneser-Ney smoothed n-gram model on JSONL corpus shards
    Train(TrainArgs),
    /// Score documents by perplexity under one or two trained models
    Score(ScoreArgs),
    /// Keep the lowest-scoring percentiles of a scored corpus
    Filter(SelectArgs),
    /// Report recall of labeled high-quality documents after filtering
    Eval(SelectArgs),
    /// Re-evaluate recall across a grid of ensemble weights
    Sweep(SweepArgs),
    /// Time scoring throughput in single-model and ensemble modes
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus shards to train on (paths or glob patterns)
    #[arg(required = true)]
    inputs: Vec<String>,

    /// Maximum n-gram length
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,

    /// Vocabulary size cap, including the three reserved marker ids
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    vocab_size: usize,

    /// Fixed absolute discount in (0, 1) instead of count-of-counts estimates
    #[arg(long)]
    fixed_discount: Option<f64>,

    /// Output model file
    #[arg(long, default_value = "model.cgnm")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Model trained on clean text
    #[arg(long)]
    good: PathBuf,

    /// Model trained on noisy text; omit for single-model scoring
    #[arg(long)]
    bad: Option<PathBuf>,

    /// Corpus shards to score (paths or glob patterns)
    #[arg(required = true)]
    inputs: Vec<String>,

    /// Weight on the good model's z-score in the ensemble
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,

    /// Directory for score files, stats.json, and run.json
    #[arg(long, default_value = "scores")]
    out_dir: PathBuf,

    /// Worker threads for the scoring pipeline
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

/// Shared surface of `filter` and `eval`: both rank persisted scores and
/// cut at percentiles; they differ in what they write and how strictly
/// they treat missing ground truth.
#[derive(Args)]
struct SelectArgs {
    /// Directory holding scores-*.jsonl from a scoring run
    score_dir: PathBuf,

    /// Percentile cutoffs, comma-separated or repeated
    #[arg(long = "percentile", value_delimiter = ',', default_values_t = DEFAULT_PERCENTILES)]
    percentiles: Vec<f64>,

    /// Quality label at or above which a document is a ground-truth positive
    #[arg(long, default_value_t = DEFAULT_GT_THRESHOLD)]
    gt_threshold: f64,

    /// Score column to rank documents by
    #[arg(long, value_enum, default_value_t = ScoreFieldArg::Ens)]
    score_field: ScoreFieldArg,

    /// Re-derive ens at this weight from stats.json instead of the stored column
    #[arg(long)]
    alpha: Option<f64>,

    /// Output directory for reports and filtered corpora (default: the score directory)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory holding scores-*.jsonl and stats.json from a scoring run
    score_dir: PathBuf,

    /// Ensemble weights to sweep (default: 0.0 through 1.0 in steps of 0.1)
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,

    /// Percentile cutoffs, comma-separated or repeated
    #[arg(long = "percentile", value_delimiter = ',', default_values_t = DEFAULT_PERCENTILES)]
    percentiles: Vec<f64>,

    /// Quality label at or above which a document is a ground-truth positive
    #[arg(long, default_value_t = DEFAULT_GT_THRESHOLD)]
    gt_threshold: f64,

    /// Output file for the sweep rows (default: <score_dir>/sweep.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Model trained on clean text
    #[arg(long)]
    good: PathBuf,

    /// Model trained on noisy text; required for the ensemble mode
    #[arg(long)]
    bad: Option<PathBuf>,

    /// Corpus shards to time scoring on (paths or glob patterns)
    #[arg(required = true)]
    inputs: Vec<String>,

    /// Which scoring pipeline to time
    #[arg(long, value_enum, default_value_t = BenchModeArg::Both)]
    mode: BenchModeArg,

    /// Worker threads for the scoring pipeline
    #[arg(long, default_value_t = default_workers())]
    workers: usize,

    /// Output file for the timing results
    #[arg(long, default_value = "bench.json")]
    out: PathBuf,
}

/// Score column names as they appear in scores-*.jsonl.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoreFieldArg {
    /// Ensembled z-score combination
    Ens,
    /// Perplexity under the good model
    PplGood,
    /// Perplexity under the bad model
    PplBad,
}

impl From<ScoreFieldArg> for ScoreField {
    fn from(arg: ScoreFieldArg) -> ScoreField {
        match arg {
            ScoreFieldArg::Ens => ScoreField::Ens,
            ScoreFieldArg::PplGood => ScoreField::PplGood,
            ScoreFieldArg::PplBad => ScoreField::PplBad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchModeArg {
    /// Good model only
    SingleGood,
    /// Good and bad models with ensemble combination
    Ensemble,
    /// Both pipelines, plus their wall-time ratio
    Both,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap reserves exit code 2 for usage errors; this tool uses 2
            // for data errors, so remap: help and version are successes,
            // everything else is a usage failure.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            process::exit(code);
        }
    };
    if let Err(err) = run(cli.command) {
        eprintln!("cgnm: {err}");
        process::exit(exit_code(err.kind()));
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Io => 3,
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = TrainingConfig {
        order: args.order,
        max_vocab: args.vocab_size,
        discount_mode: match args.fixed_discount {
            Some(d) => DiscountMode::Fixed(d),
            None => DiscountMode::CountOfCounts,
        },
    };
    config.validate()?;
    let shards = expand_inputs(&args.inputs)?;
    let mut docs = Vec::new();
    let mut totals = ShardStats::default();
    for path in &shards {
        let (mut shard_docs, stats) = read_jsonl(path)?;
        docs.append(&mut shard_docs);
        totals.absorb(&stats);
    }
    check_malformed(&totals)?;
    warn_skipped(&totals);
    let vocab = Vocabulary::build(&docs, config.max_vocab)?;
    let counts = count_ngrams(&docs, &vocab, config.order)?;
    let model = estimate_model(&counts, vocab, &config)?;
    model.save(&args.out)?;

    println!("wrote {}", args.out.display());
    println!("order {}  max vocab {}", model.order(), model.metadata().max_vocab);
    println!(
        "documents {}  tokens {}  vocab {}",
        counts.doc_count(),
        counts.total_tokens(),
        model.vocab().len()
    );
    for n in 1..=model.order() {
        let table = counts.table(n);
        let tokens: u64 = table.values().sum();
        println!("{n}-grams: {} types, {tokens} tokens", table.len());
    }
    println!("corpus fingerprint {}", model.metadata().fingerprint_hex());
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    if args.bad.is_none() {
        eprintln!(
            "cgnm: warning: no --bad model; scoring in single-model mode \
             (records carry ppl_good only, no stats.json)"
        );
    }
    let mut config = PipelineConfig::new(args.good, args.inputs, args.out_dir);
    config.bad_model = args.bad;
    config.alpha = args.alpha;
    config.workers = args.workers;
    let summary = run_scoring(&config)?;
    warn_skipped(&summary.totals);
    println!(
        "scored {} documents across {} shards",
        summary.totals.docs,
        summary.score_files.len()
    );
    for path in &summary.score_files {
        println!("wrote {}", path.display());
    }
    if let Some(stats) = &summary.stats {
        println!(
            "standardization over {} documents: \
             mu_good {:.6} sigma_good {:.6} mu_bad {:.6} sigma_bad {:.6}",
            stats.sample_count, stats.mu_good, stats.sigma_good, stats.mu_bad, stats.sigma_bad
        );
    }
    if let Some(path) = &summary.stats_file {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", summary.run_file.display());
    Ok(())
}

fn cmd_filter(args: SelectArgs) -> Result<()> {
    let outcome = run_selection(&args, true, false)?;
    for report in &outcome.reports {
        let recall = report.recall.map(|r| format!("  recall {r:.4}")).unwrap_or_default();
        println!(
            "p{}: kept {} of {} ({} <= {:.6}){}",
            report.percentile,
            report.kept_count,
            report.total_count,
            report.score_field.name(),
            report.threshold_value,
            recall
        );
    }
    if outcome.missing_ground_truth {
        eprintln!("cgnm: note: no ground-truth labels; reports omit recall");
    }
    for path in outcome
        .kept_files
        .iter()
        .chain(&outcome.dropped_files)
        .chain(&outcome.report_files)
    {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: SelectArgs) -> Result<()> {
    let outcome = run_selection(&args, false, true)?;
    let mut header: Vec<String> = outcome
        .reports
        .iter()
        .map(|r| format!("Recall@{}", r.percentile))
        .collect();
    header.push("Average".to_string());
    let mut row: Vec<String> = outcome
        .reports
        .iter()
        .map(|r| format!("{:.4}", r.recall.expect("strict run_filter guarantees recall")))
        .collect();
    row.push(format!(
        "{:.4}",
        outcome.average_recall.expect("strict run_filter guarantees recall")
    ));
    print_table(&[header, row]);
    for path in &outcome.report_files {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// The shared half of `filter` and `eval`.
fn run_selection(args: &SelectArgs, write_corpora: bool, strict_recall: bool) -> Result<FilterOutcome> {
    if let Some(alpha) = args.alpha {
        validate_alpha(alpha)?;
    }
    let out_dir = args.out_dir.clone().unwrap_or_else(|| args.score_dir.clone());
    let opts = FilterOptions {
        percentiles: args.percentiles.clone(),
        score_field: args.score_field.into(),
        gt_threshold: args.gt_threshold,
        alpha: args.alpha,
        write_corpora,
        strict_recall,
    };
    run_filter(&args.score_dir, &out_dir, &opts)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let alphas = args.alphas.unwrap_or_else(default_alpha_grid);
    for &alpha in &alphas {
        validate_alpha(alpha)?;
    }
    let records = load_score_records(&args.score_dir)?;
    let stats = load_stats(&args.score_dir.join("stats.json"))?;
    let rows = alpha_sweep(&records, &alphas, &args.percentiles, args.gt_threshold, &stats.stats)?;

    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    let mut header = vec!["alpha".to_string()];
    header.extend(args.percentiles.iter().map(|p| format!("recall@{p}")));
    header.push("average".to_string());
    table.push(header);
    for row in &rows {
        let mut cells = vec![format!("{:.2}", row.alpha)];
        cells.extend(row.recalls.iter().map(|r| format!("{:.4}", r.recall)));
        cells.push(format!("{:.4}", row.average_recall));
        table.push(cells);
    }
    print_table(&table);

    let out = args.out.unwrap_or_else(|| args.score_dir.join("sweep.json"));
    atomic_write_json(&out, &rows)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut config = PipelineConfig::new(args.good, args.inputs, PathBuf::from("."));
    config.bad_model = args.bad;
    config.workers = args.workers;
    let modes: &[BenchMode] = match args.mode {
        BenchModeArg::SingleGood => &[BenchMode::SingleGood],
        BenchModeArg::Ensemble => &[BenchMode::Ensemble],
        BenchModeArg::Both => &[BenchMode::SingleGood, BenchMode::Ensemble],
    };
    let mut results = Vec::with_capacity(modes.len());
    for &mode in modes {
        let result = bench(&config, mode)?;
        println!(
            "{}: {} documents in {:.3}s ({:.0} docs/s)",
            result.mode.name(),
            result.docs_processed,
            result.wall_seconds,
            result.throughput_docs_per_s
        );
        results.push(result);
    }
    if let [single, ens] = results.as_slice() {
        println!(
            "ensemble/single wall-time ratio: {:.2}x",
            ens.wall_seconds / single.wall_seconds
        );
    }
    atomic_write_json(&args.out, &results)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Range-checks an ensemble weight before any files are read, so a typo
/// fails fast instead of after loading a large score directory.
fn validate_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

fn warn_skipped(totals: &ShardStats) {
    if totals.malformed > 0 {
        eprintln!(
            "cgnm: warning: skipped {} malformed of {} input lines",
            totals.malformed, totals.lines
        );
    }
    if totals.lossy_utf8 > 0 {
        eprintln!(
            "cgnm: warning: {} lines held invalid UTF-8 and were repaired",
            totals.lossy_utf8
        );
    }
}

/// Pads every cell to its column's widest entry and prints one line per row.
fn print_table(rows: &[Vec<String>]) {
    let widths = column_widths(rows);
    for row in rows {
        println!("{}", aligned_row(row, &widths));
    }
}

fn column_widths(rows: &[Vec<String>]) -> Vec<usize> {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    widths
}

fn aligned_row(cells: &[String], widths: &[usize]) -> String {
    let mut line = String::new();
    for (i, (cell, width)) in cells.iter().zip(widths).enumerate() {
        if i > 0 {
            line.push_str("  ");
        }
        line.push_str(cell);
        line.extend(std::iter::repeat(' ').take(width.saturating_sub(cell.len())));
    }
    line.truncate(line.trim_end().len());
    line
}
