//! Combining two perplexity columns into one quality score.
//!
//! Perplexities from the good and bad models live on incomparable scales,
//! so each column is z-score standardized against corpus-level statistics
//! and combined as
//!
//! ```text
//! ens = alpha * z_good - (1 - alpha) * z_bad
//! ```
//!
//! Low `z_good` means the document looks like the clean corpus; high
//! `z_bad` means it does not look like the noisy one. Both pull `ens` down,
//! and filtering keeps the lowest-scoring documents. `alpha` trades the two
//! signals off: 1.0 ignores the bad model, 0.0 ignores the good one.
//!
//! Statistics are collected with Welford's online algorithm and merged
//! across shards with the parallel-variance formula, always in a canonical
//! shard order, so results do not depend on the worker count. Sigma uses
//! the population form (divide by N): the corpus being scored *is* the
//! population of interest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{recall_summary, PercentileRecall, ScoreField};

pub const DEFAULT_ALPHA: f64 = 0.7;

/// The 11-point grid swept when no explicit alphas are given.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// One scored document, as persisted in `scores-*.jsonl`. `ppl_bad` and
/// `ens` are absent when scoring ran without a bad model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreRecord {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub ppl_good: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl_bad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ens: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
}

/// Welford accumulator for a running mean and (population) variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. parallel merge. Merging the same partials in the same
    /// order is bit-reproducible, which the pipeline relies on.
    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn population_std(&self) -> f64 {
        self.population_variance().sqrt()
    }
}

/// Corpus-level standardization statistics, as persisted in `stats.json`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NormalizationStats {
    pub mu_good: f64,
    pub sigma_good: f64,
    pub mu_bad: f64,
    pub sigma_bad: f64,
    pub sample_count: u64,
}

impl NormalizationStats {
    pub fn from_moments(good: &RunningMoments, bad: &RunningMoments) -> Result<NormalizationStats> {
        debug_assert_eq!(good.count(), bad.count());
        if good.count() < 2 {
            return Err(Error::InsufficientSamples(good.count()));
        }
        let stats = NormalizationStats {
            mu_good: good.mean(),
            sigma_good: good.population_std(),
            mu_bad: bad.mean(),
            sigma_bad: bad.population_std(),
            sample_count: good.count(),
        };
        stats.validate()?;
        Ok(stats)
    }

    /// Rejects statistics that would make standardization meaningless,
    /// including degenerate ones read back from disk.
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 2 {
            return Err(Error::InsufficientSamples(self.sample_count));
        }
        if !(self.sigma_good > 0.0 && self.sigma_good.is_finite() && self.mu_good.is_finite()) {
            return Err(Error::ZeroVariance("ppl_good"));
        }
        if !(self.sigma_bad > 0.0 && self.sigma_bad.is_finite() && self.mu_bad.is_finite()) {
            return Err(Error::ZeroVariance("ppl_bad"));
        }
        Ok(())
    }

    pub fn z_good(&self, ppl: f64) -> f64 {
        (ppl - self.mu_good) / self.sigma_good
    }

    pub fn z_bad(&self, ppl: f64) -> f64 {
        (ppl - self.mu_bad) / self.sigma_bad
    }
}

/// Standardizes two perplexity columns in one pass.
pub fn compute_stats<I>(pairs: I) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut good = RunningMoments::default();
    let mut bad = RunningMoments::default();
    for (i, (g, b)) in pairs.into_iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::NonFinite { context: format!("ppl_good at record index {i}") });
        }
        if !b.is_finite() {
            return Err(Error::NonFinite { context: format!("ppl_bad at record index {i}") });
        }
        good.push(g);
        bad.push(b);
    }
    NormalizationStats::from_moments(&good, &bad)
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub alpha: f64,
    pub stats: NormalizationStats,
}

impl EnsembleConfig {
    pub fn new(alpha: f64, stats: NormalizationStats) -> Result<EnsembleConfig> {
        if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
            return Err(Error::InvalidAlpha(alpha));
        }
        stats.validate()?;
        Ok(EnsembleConfig { alpha, stats })
    }
}

/// The weighted z-score subtraction. Inputs must be finite.
pub fn ensemble_score(ppl_good: f64, ppl_bad: f64, config: &EnsembleConfig) -> Result<f64> {
    if !ppl_good.is_finite() {
        return Err(Error::NonFinite { context: "ppl_good passed to ensemble_score".into() });
    }
    if !ppl_bad.is_finite() {
        return Err(Error::NonFinite { context: "ppl_bad passed to ensemble_score".into() });
    }
    let z_good = config.stats.z_good(ppl_good);
    let z_bad = config.stats.z_bad(ppl_bad);
    Ok(config.alpha * z_good - (1.0 - config.alpha) * z_bad)
}

/// Fills in `ens` for every record. Records must carry `ppl_bad`.
pub fn score_corpus(records: &mut [ScoreRecord], config: &EnsembleConfig) -> Result<()> {
    for rec in records.iter_mut() {
        let ppl_bad = rec.ppl_bad.ok_or_else(|| Error::MissingField {
            id: rec.doc_id.clone(),
            field: "ppl_bad",
        })?;
        rec.ens = Some(ensemble_score(rec.ppl_good, ppl_bad, config)?);
    }
    Ok(())
}

/// Recall at each percentile for one alpha of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub recalls: Vec<PercentileRecall>,
    pub average_recall: f64,
}

/// Re-ensembles the records at each alpha and evaluates recall. Requires
/// ground-truth labels; sweeping an unlabeled corpus is meaningless.
pub fn alpha_sweep(
    records: &[ScoreRecord],
    alphas: &[f64],
    percentiles: &[f64],
    gt_threshold: f64,
    stats: &NormalizationStats,
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::EmptyList("alpha"));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    let mut scratch = records.to_vec();
    for &alpha in alphas {
        let config = EnsembleConfig::new(alpha, *stats)?;
        scratch.clone_from_slice(records);
        score_corpus(&mut scratch, &config)?;
        let summary = recall_summary(&scratch, percentiles, ScoreField::Ens, gt_threshold)?;
        let recalls: Vec<PercentileRecall> = summary
            .reports
            .iter()
            .map(|r| PercentileRecall {
                percentile: r.percentile,
                recall: r.recall.expect("recall_summary is strict about ground truth"),
            })
            .collect();
        let average_recall = summary
            .average_recall
            .expect("recall_summary is strict about ground truth");
        rows.push(SweepRow { alpha, recalls, average_recall });
    }
    Ok(rows)
}
