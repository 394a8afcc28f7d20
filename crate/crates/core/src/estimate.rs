//! Interpolated modified Kneser-Ney estimation.
//!
//! Counts are first converted to *adjusted* counts: the top order and any
//! n-gram starting with BOS keep their raw occurrence counts, while every
//! other lower-order n-gram is counted by the number of distinct tokens
//! that extend it to the left. Left-extension counting is what makes
//! Kneser-Ney work: a token that appears often but only after one specific
//! word ("francisco") gets a small continuation count and stops leaking
//! probability into unrelated contexts.
//!
//! Each order then discounts its adjusted counts and redistributes the
//! removed mass through interpolation with the next-lower order, ending at
//! a uniform distribution over the prediction support (all ids except
//! BOS). By construction every context's distribution sums to exactly 1.
//!
//! Discounts come in two modes: per-count discounts D1, D2, D3+ estimated
//! from each order's count-of-counts, or a single fixed discount. When the
//! count-of-counts are too sparse to give usable estimates (any of n1..n4
//! zero, or a derived discount outside its valid range), the order falls
//! back to a fixed 0.75.

use std::collections::HashMap;

use crate::counts::NGramCounts;
use crate::error::{Error, Result};
use crate::model::{ModelMetadata, NGramModel};
use crate::tokenize::TOKENIZER_VERSION;
use crate::vocab::{Vocabulary, BOS_ID, DEFAULT_MAX_VOCAB};

/// Discount used when count-of-counts estimation is degenerate.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

pub const DEFAULT_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscountMode {
    /// Estimate D1, D2, D3+ per order from count-of-counts.
    CountOfCounts,
    /// One absolute discount for every count, must lie in (0, 1).
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub order: usize,
    pub max_vocab: usize,
    pub discount_mode: DiscountMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            order: DEFAULT_ORDER,
            max_vocab: DEFAULT_MAX_VOCAB,
            discount_mode: DiscountMode::CountOfCounts,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidOrder);
        }
        if self.max_vocab < 4 {
            return Err(Error::VocabTooSmall(self.max_vocab));
        }
        if let DiscountMode::Fixed(d) = self.discount_mode {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidDiscount(d));
            }
        }
        Ok(())
    }
}

enum Discounts {
    PerCount { d1: f64, d2: f64, d3plus: f64 },
    Flat(f64),
}

impl Discounts {
    fn of(&self, count: u64) -> f64 {
        match (self, count) {
            (_, 0) => 0.0,
            (Discounts::PerCount { d1, .. }, 1) => *d1,
            (Discounts::PerCount { d2, .. }, 2) => *d2,
            (Discounts::PerCount { d3plus, .. }, _) => *d3plus,
            (Discounts::Flat(d), _) => *d,
        }
    }

    fn from_count_of_counts(table: &HashMap<Vec<u32>, u64>) -> Discounts {
        let mut n = [0u64; 4];
        for &c in table.values() {
            if (1..=4).contains(&c) {
                n[c as usize - 1] += 1;
            }
        }
        if n.contains(&0) {
            return Discounts::Flat(FALLBACK_DISCOUNT);
        }
        let (n1, n2, n3, n4) = (n[0] as f64, n[1] as f64, n[2] as f64, n[3] as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d1 = 1.0 - 2.0 * y * n2 / n1;
        let d2 = 2.0 - 3.0 * y * n3 / n2;
        let d3plus = 3.0 - 4.0 * y * n4 / n3;
        for (k, d) in [(1.0, d1), (2.0, d2), (3.0, d3plus)] {
            if !(d > 0.0 && d <= k) {
                return Discounts::Flat(FALLBACK_DISCOUNT);
            }
        }
        Discounts::PerCount { d1, d2, d3plus }
    }
}

/// Estimates a smoothed model from raw counts. The vocabulary is taken by
/// value because the model owns it from here on.
pub fn estimate_model(
    counts: &NGramCounts,
    vocab: Vocabulary,
    config: &TrainingConfig,
) -> Result<NGramModel> {
    config.validate()?;
    let order = counts.order();
    if order != config.order {
        return Err(Error::OrderMismatch { counted: order, requested: config.order });
    }
    for n in 1..=order {
        if counts.table(n).is_empty() {
            return Err(Error::EmptyCounts);
        }
    }

    let adjusted = adjusted_counts(counts);
    let discounts: Vec<Discounts> = adjusted
        .iter()
        .map(|table| match config.discount_mode {
            DiscountMode::Fixed(d) => Discounts::Flat(d),
            DiscountMode::CountOfCounts => Discounts::from_count_of_counts(table),
        })
        .collect();

    let mut probs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];
    let mut backoffs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order.saturating_sub(1)];

    // All floating-point accumulation walks keys in sorted order so that
    // retraining on the same corpus reproduces the model bit for bit.
    let unigrams = sorted_entries(&adjusted[0]);
    let disc1 = &discounts[0];
    let total1: u64 = unigrams.iter().map(|(_, c)| *c).sum();
    let dmass1: f64 = unigrams.iter().map(|(_, c)| disc1.of(*c)).sum();
    let gamma1 = dmass1 / total1 as f64;
    let uniform = 1.0 / vocab.support_size() as f64;
    for id in vocab.support() {
        let c = adjusted[0].get([id].as_slice()).copied().unwrap_or(0);
        let p = (c as f64 - disc1.of(c)) / total1 as f64 + gamma1 * uniform;
        probs[0].insert(vec![id], p.ln());
    }

    for m in 2..=order {
        let entries = sorted_entries(&adjusted[m - 1]);
        let disc = &discounts[m - 1];
        let mut i = 0;
        while i < entries.len() {
            let ctx = &entries[i].0[..m - 1];
            let mut j = i;
            let mut total = 0u64;
            let mut dmass = 0.0;
            while j < entries.len() && &entries[j].0[..m - 1] == ctx {
                total += entries[j].1;
                dmass += disc.of(entries[j].1);
                j += 1;
            }
            let gamma = dmass / total as f64;
            backoffs[m - 2].insert(ctx.to_vec(), gamma.ln());
            for (key, c) in &entries[i..j] {
                let lower = probs[m - 2]
                    .get(&key[1..])
                    .copied()
                    .expect("lower-order n-gram missing; count tables are not nested");
                let p = (*c as f64 - disc.of(*c)) / total as f64 + gamma * lower.exp();
                probs[m - 1].insert((*key).clone(), p.ln());
            }
            i = j;
        }
    }

    let metadata = ModelMetadata {
        training_tokens: counts.total_tokens(),
        corpus_fingerprint: counts.fingerprint(),
        max_vocab: vocab.max_size() as u32,
        tokenizer_version: TOKENIZER_VERSION,
    };
    Ok(NGramModel::from_parts(order, vocab, probs, backoffs, metadata))
}

/// Adjusted count tables, indexed by order - 1.
fn adjusted_counts(counts: &NGramCounts) -> Vec<HashMap<Vec<u32>, u64>> {
    let order = counts.order();
    let mut adjusted = Vec::with_capacity(order);
    for m in 1..=order {
        if m == order {
            adjusted.push(counts.table(m).clone());
            continue;
        }
        let mut table: HashMap<Vec<u32>, u64> = HashMap::new();
        for key in counts.table(m + 1).keys() {
            let suffix = &key[1..];
            if suffix[0] != BOS_ID {
                // One distinct left extension per (m+1)-gram type.
                match table.get_mut(suffix) {
                    Some(c) => *c += 1,
                    None => {
                        table.insert(suffix.to_vec(), 1);
                    }
                }
            }
        }
        for (key, &c) in counts.table(m) {
            if key[0] == BOS_ID {
                table.insert(key.clone(), c);
            }
        }
        adjusted.push(table);
    }
    adjusted
}

fn sorted_entries(table: &HashMap<Vec<u32>, u64>) -> Vec<(&Vec<u32>, u64)> {
    let mut entries: Vec<(&Vec<u32>, u64)> = table.iter().map(|(k, &c)| (k, c)).collect();
    entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
    entries
}
