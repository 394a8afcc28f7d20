//! Percentile filtering and recall evaluation.
//!
//! Filtering keeps the documents at or below a score threshold, where the
//! threshold is the nearest-rank percentile of the chosen score column:
//! rank `ceil(p * N / 100)` of the ascending sort, so kept documents are
//! the "best" `p` percent (ties included). Evaluation measures recall of
//! ground-truth positives — documents whose human quality label meets a
//! threshold — among the kept set.

use serde::Serialize;

use crate::ensemble::ScoreRecord;
use crate::error::{Error, Result};

pub const DEFAULT_PERCENTILES: [f64; 2] = [30.0, 60.0];
/// Documents labeled at or above this quality score count as ground-truth
/// positives during evaluation.
pub const DEFAULT_GT_THRESHOLD: f64 = 2.5;

/// Which column of a [`ScoreRecord`] to filter on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreField {
    Ens,
    PplGood,
    PplBad,
}

impl ScoreField {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreField::Ens => "ens",
            ScoreField::PplGood => "ppl_good",
            ScoreField::PplBad => "ppl_bad",
        }
    }
}

impl std::str::FromStr for ScoreField {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScoreField> {
        match s {
            "ens" => Ok(ScoreField::Ens),
            "ppl-good" | "ppl_good" => Ok(ScoreField::PplGood),
            "ppl-bad" | "ppl_bad" => Ok(ScoreField::PplBad),
            other => Err(Error::UnknownScoreField(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FilterSpec {
    pub percentile: f64,
    pub score_field: ScoreField,
}

impl FilterSpec {
    pub fn new(percentile: f64, score_field: ScoreField) -> Result<FilterSpec> {
        validate_percentile(percentile)?;
        Ok(FilterSpec { percentile, score_field })
    }
}

pub fn validate_percentile(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::InvalidPercentile(p));
    }
    Ok(())
}

/// Extracts the requested column, erroring if the record does not have it
/// (single-model score files have no `ens` or `ppl_bad`).
pub fn score_of(record: &ScoreRecord, field: ScoreField) -> Result<f64> {
    let value = match field {
        ScoreField::Ens => record.ens,
        ScoreField::PplGood => Some(record.ppl_good),
        ScoreField::PplBad => record.ppl_bad,
    };
    value.ok_or_else(|| Error::MissingField { id: record.doc_id.clone(), field: field.name() })
}

/// Nearest-rank percentile: the value at rank `ceil(p * N / 100)` (1-based)
/// of the ascending sort.
pub fn percentile_threshold(scores: &[f64], percentile: f64) -> Result<f64> {
    validate_percentile(percentile)?;
    if scores.is_empty() {
        return Err(Error::EmptyList("score"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let rank = (percentile * sorted.len() as f64 / 100.0).ceil() as usize;
    let rank = rank.clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Splits records into (kept, dropped): kept means the selected score is at
/// or below the threshold, so ties at the threshold are kept.
pub fn apply_filter(
    records: Vec<ScoreRecord>,
    spec: &FilterSpec,
    threshold: f64,
) -> Result<(Vec<ScoreRecord>, Vec<ScoreRecord>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for rec in records {
        if score_of(&rec, spec.score_field)? <= threshold {
            kept.push(rec);
        } else {
            dropped.push(rec);
        }
    }
    Ok((kept, dropped))
}

/// Everything `report-<p>.json` holds about one filtering run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FilterReport {
    pub percentile: f64,
    pub score_field: ScoreField,
    pub threshold_value: f64,
    pub kept_count: u64,
    pub total_count: u64,
    pub gt_threshold: f64,
    pub ground_truth_total: u64,
    pub ground_truth_kept: u64,
    /// Absent when the corpus carries no ground-truth labels at all.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PercentileRecall {
    pub percentile: f64,
    pub recall: f64,
}

/// Filters at the spec percentile and reports counts and recall. Recall is
/// `None` when there are no positives; [`recall_at`] makes that an error.
pub fn partition_report(
    records: &[ScoreRecord],
    spec: &FilterSpec,
    gt_threshold: f64,
) -> Result<(FilterReport, Vec<ScoreRecord>, Vec<ScoreRecord>)> {
    let scores: Vec<f64> = records
        .iter()
        .map(|r| score_of(r, spec.score_field))
        .collect::<Result<_>>()?;
    let threshold = percentile_threshold(&scores, spec.percentile)?;
    let (kept, dropped) = apply_filter(records.to_vec(), spec, threshold)?;
    let is_positive =
        |r: &ScoreRecord| r.quality_score.is_some_and(|q| q >= gt_threshold);
    let ground_truth_total = records.iter().filter(|r| is_positive(r)).count() as u64;
    let ground_truth_kept = kept.iter().filter(|r| is_positive(r)).count() as u64;
    let recall = if ground_truth_total > 0 {
        Some(ground_truth_kept as f64 / ground_truth_total as f64)
    } else {
        None
    };
    let report = FilterReport {
        percentile: spec.percentile,
        score_field: spec.score_field,
        threshold_value: threshold,
        kept_count: kept.len() as u64,
        total_count: records.len() as u64,
        gt_threshold,
        ground_truth_total,
        ground_truth_kept,
        recall,
    };
    Ok((report, kept, dropped))
}

/// Recall of ground-truth positives within the kept set. Errors when the
/// corpus has no positives at all — recall would be 0/0.
pub fn recall_at(
    records: &[ScoreRecord],
    spec: &FilterSpec,
    gt_threshold: f64,
) -> Result<FilterReport> {
    let (report, _, _) = partition_report(records, spec, gt_threshold)?;
    if report.recall.is_none() {
        return Err(Error::NoGroundTruth(gt_threshold));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub reports: Vec<FilterReport>,
    /// Arithmetic mean of the recalls, the headline number for comparing
    /// scoring variants.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_recall: Option<f64>,
}

/// Evaluates recall at several percentiles of the same score column.
pub fn recall_summary(
    records: &[ScoreRecord],
    percentiles: &[f64],
    score_field: ScoreField,
    gt_threshold: f64,
) -> Result<EvalSummary> {
    if percentiles.is_empty() {
        return Err(Error::EmptyList("percentile"));
    }
    let mut reports = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        let spec = FilterSpec::new(p, score_field)?;
        reports.push(recall_at(records, &spec, gt_threshold)?);
    }
    let mean =
        reports.iter().filter_map(|r| r.recall).sum::<f64>() / reports.len() as f64;
    Ok(EvalSummary { reports, average_recall: Some(mean) })
}
