//! Shared test fixtures: a brute-force smoothing oracle, random corpus
//! helpers, and a two-source synthetic world for end-to-end filtering
//! tests.
#![allow(dead_code)]

use cgnm_core::corpus::Document;
use cgnm_core::estimate::{DiscountMode, TrainingConfig};
use cgnm_core::model::NGramModel;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const UNK: u32 = 2;

/// Reference smoothing implementation, written directly from the
/// definition: every count is recomputed by scanning the wrapped documents
/// and every sum enumerates the vocabulary, with no shared tables, no
/// backoff weights, and no reuse of the production estimator. Slow on
/// purpose; use only on tiny corpora.
pub struct KnOracle {
    order: usize,
    wrapped: Vec<Vec<u32>>,
    vocab_len: u32,
    discounts: Vec<OracleDiscounts>,
}

#[derive(Debug, Clone, Copy)]
enum OracleDiscounts {
    PerCount(f64, f64, f64),
    Flat(f64),
}

impl KnOracle {
    pub fn new(id_docs: &[Vec<u32>], order: usize, vocab_len: u32, mode: DiscountMode) -> KnOracle {
        let wrapped: Vec<Vec<u32>> = id_docs
            .iter()
            .map(|ids| {
                let mut w = vec![BOS; order - 1];
                w.extend_from_slice(ids);
                w.push(EOS);
                w
            })
            .collect();
        let mut oracle = KnOracle { order, wrapped, vocab_len, discounts: Vec::new() };
        oracle.discounts = (1..=order)
            .map(|m| match mode {
                DiscountMode::Fixed(d) => OracleDiscounts::Flat(d),
                DiscountMode::CountOfCounts => oracle.estimate_discounts(m),
            })
            .collect();
        oracle
    }

    /// Occurrences of `ngram` ending at a scored (non-BOS) position.
    fn raw_count(&self, ngram: &[u32]) -> u64 {
        let n = ngram.len();
        let mut count = 0;
        for doc in &self.wrapped {
            for end in (self.order - 1)..doc.len() {
                if &doc[end + 1 - n..=end] == ngram {
                    count += 1;
                }
            }
        }
        count
    }

    /// Adjusted count: raw at the top order and for BOS-initial n-grams,
    /// otherwise the number of distinct left extensions.
    fn adjusted_count(&self, ngram: &[u32]) -> u64 {
        if ngram.len() == self.order || ngram[0] == BOS {
            return self.raw_count(ngram);
        }
        let mut extensions = 0;
        for v in 0..self.vocab_len {
            let mut ext = Vec::with_capacity(ngram.len() + 1);
            ext.push(v);
            ext.extend_from_slice(ngram);
            if self.raw_count(&ext) > 0 {
                extensions += 1;
            }
        }
        extensions
    }

    /// Every m-gram window that occurs, i.e. everything with a positive
    /// adjusted count.
    fn observed(&self, m: usize) -> Vec<Vec<u32>> {
        let mut seen = std::collections::BTreeSet::new();
        for doc in &self.wrapped {
            for end in (self.order - 1)..doc.len() {
                seen.insert(doc[end + 1 - m..=end].to_vec());
            }
        }
        seen.into_iter().collect()
    }

    fn estimate_discounts(&self, m: usize) -> OracleDiscounts {
        let mut n = [0u64; 4];
        for gram in self.observed(m) {
            let c = self.adjusted_count(&gram);
            if (1..=4).contains(&c) {
                n[c as usize - 1] += 1;
            }
        }
        if n.contains(&0) {
            return OracleDiscounts::Flat(0.75);
        }
        let (n1, n2, n3, n4) = (n[0] as f64, n[1] as f64, n[2] as f64, n[3] as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d1 = 1.0 - 2.0 * y * n2 / n1;
        let d2 = 2.0 - 3.0 * y * n3 / n2;
        let d3 = 3.0 - 4.0 * y * n4 / n3;
        for (k, d) in [(1.0, d1), (2.0, d2), (3.0, d3)] {
            if !(d > 0.0 && d <= k) {
                return OracleDiscounts::Flat(0.75);
            }
        }
        OracleDiscounts::PerCount(d1, d2, d3)
    }

    fn discount(&self, m: usize, count: u64) -> f64 {
        if count == 0 {
            return 0.0;
        }
        match self.discounts[m - 1] {
            OracleDiscounts::Flat(d) => d,
            OracleDiscounts::PerCount(d1, d2, d3) => match count {
                1 => d1,
                2 => d2,
                _ => d3,
            },
        }
    }

    /// The interpolated probability, evaluated by direct recursion.
    /// `ctx.len()` must be below the order; callers truncate beforehand.
    pub fn prob(&self, ctx: &[u32], w: u32) -> f64 {
        let m = ctx.len() + 1;
        assert!(m <= self.order, "context too long for the oracle");
        let support_size = (self.vocab_len - 1) as f64;
        if m == 1 {
            let mut total = 0u64;
            let mut removed = 0.0;
            for gram in self.observed(1) {
                let c = self.adjusted_count(&gram);
                total += c;
                removed += self.discount(1, c);
            }
            let c = self.adjusted_count(&[w]);
            return (c as f64 - self.discount(1, c)) / total as f64
                + (removed / total as f64) / support_size;
        }
        let mut total = 0u64;
        let mut removed = 0.0;
        for v in 1..self.vocab_len {
            let mut gram = ctx.to_vec();
            gram.push(v);
            let c = self.adjusted_count(&gram);
            total += c;
            removed += self.discount(m, c);
        }
        if total == 0 {
            return self.prob(&ctx[1..], w);
        }
        let mut gram = ctx.to_vec();
        gram.push(w);
        let c = self.adjusted_count(&gram);
        (c as f64 - self.discount(m, c)) / total as f64
            + (removed / total as f64) * self.prob(&ctx[1..], w)
    }

    /// Reference perplexity via the same recursion.
    pub fn perplexity(&self, ids: &[u32]) -> f64 {
        let k = self.order - 1;
        let mut wrapped = vec![BOS; k];
        wrapped.extend_from_slice(ids);
        wrapped.push(EOS);
        let mut sum = 0.0;
        for end in k..wrapped.len() {
            sum += self.prob(&wrapped[end - k..end], wrapped[end]).ln();
        }
        (-(sum / (ids.len() + 1) as f64)).exp()
    }
}

/// Trains a model on `texts`, then compares every stored probability and
/// every query over all contexts of length < order built from the full
/// vocabulary (seen or unseen, interior BOS included) against the oracle's
/// direct recursion. Returns the number of comparisons made.
pub fn assert_matches_oracle(texts: &[&str], order: usize, mode: DiscountMode, tol: f64) -> u64 {
    let docs = docs_from_texts(texts);
    let model = train_model(&docs, order, mode);
    let ids = encode_docs(&model, &docs);
    let vocab_len = model.vocab().len() as u32;
    let oracle = KnOracle::new(&ids, order, vocab_len, mode);
    let mut checked = 0;

    for n in 1..=order {
        for (key, lp) in model.prob_entries(n) {
            let want = oracle.prob(&key[..n - 1], key[n - 1]);
            assert!(
                (lp.exp() - want).abs() < tol,
                "stored {key:?} (order {order}, {mode:?}): {} vs oracle {want}",
                lp.exp(),
            );
            checked += 1;
        }
    }

    let mut contexts: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 1..order {
        let extended: Vec<Vec<u32>> = contexts
            .iter()
            .flat_map(|c| {
                (0..vocab_len).map(move |v| {
                    let mut longer = c.clone();
                    longer.push(v);
                    longer
                })
            })
            .collect();
        contexts.extend(extended);
    }
    for ctx in &contexts {
        for w in 1..vocab_len {
            let got = model.log_prob(ctx, w).exp();
            let want = oracle.prob(ctx, w);
            assert!(
                (got - want).abs() < tol,
                "query p({w} | {ctx:?}) (order {order}, {mode:?}): {got} vs oracle {want}",
            );
            checked += 1;
        }
        assert_eq!(model.log_prob(ctx, BOS), f64::NEG_INFINITY, "BOS must never be predictable");
    }
    checked
}

pub fn docs_from_texts(texts: &[&str]) -> Vec<Document> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("d{i}"), *t))
        .collect()
}

/// Encodes documents with the model's own vocabulary, for feeding the
/// oracle the exact id sequences the model was trained on.
pub fn encode_docs(model: &NGramModel, docs: &[Document]) -> Vec<Vec<u32>> {
    docs.iter()
        .map(|d| {
            let tokens = cgnm_core::tokenize::tokenize(&d.text);
            model.vocab().encode(tokens.iter().map(String::as_str))
        })
        .collect()
}

pub fn train_model(docs: &[Document], order: usize, mode: DiscountMode) -> NGramModel {
    let config = TrainingConfig { order, max_vocab: 4096, discount_mode: mode };
    NGramModel::train(docs, &config).expect("training fixture corpus")
}

/// Random corpus of letter-only tokens drawn from a small pool.
pub fn random_docs(rng: &mut ChaCha8Rng, n_docs: usize, max_doc_len: usize, pool: usize) -> Vec<Document> {
    let vocab: Vec<String> = (0..pool).map(letter_token).collect();
    (0..n_docs)
        .map(|i| {
            let len = rng.random_range(0..=max_doc_len);
            let text: Vec<&str> =
                (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            Document::new(format!("r{i}"), text.join(" "))
        })
        .collect()
}

/// Deterministic letter-only token: "aa", "ab", ..., "ba", ...
pub fn letter_token(i: usize) -> String {
    let a = b'a' + (i / 26 % 26) as u8;
    let b = b'a' + (i % 26) as u8;
    String::from_utf8(vec![a, b]).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A synthetic world with two text sources built from sentence-shaped
/// Markov walks, where sentences are separated by a shared "." token and
/// every sentence starts at a random chain state. The restart cost at "."
/// is therefore identical for every source, so documents differ only in
/// their statistics, not in surface structure.
///
/// The clean source walks a bigram chain over the clean vocabulary. The
/// noisy source mixes two flavors:
///
/// * "boilerplate": sentences drawn verbatim from a fixed pool of
///   templates, themselves clean-chain walks. A model of clean text finds
///   them statistically unremarkable, while a model trained on the noise
///   sees them thousands of times and learns them by heart — so only the
///   contrast between the two models can separate them from clean text.
/// * "junk": a distinct transition matrix over a wider vocabulary, with
///   occasional word salad and repeated spam-token bursts spliced in.
///   Alien words and transitions make it obvious to the good model, while
///   the bad model, trained on the same process, finds it unremarkable.
pub struct TwoSourceWorld {
    clean_vocab: Vec<String>,
    junk_vocab: Vec<String>,
    spam: Vec<String>,
    clean_chain: Vec<Vec<usize>>,
    junk_chain: Vec<Vec<usize>>,
    templates: Vec<Vec<String>>,
}

const SUCCESSORS: usize = 5;
const SUCCESSOR_WEIGHTS: [f64; SUCCESSORS] = [0.38, 0.27, 0.17, 0.11, 0.07];
const TEMPLATE_COUNT: usize = 250;
const BOILERPLATE_SHARE: f64 = 0.45;
const SALAD_RATE: f64 = 0.10;
const BURST_PROB: f64 = 0.40;

impl TwoSourceWorld {
    pub fn new(seed: u64) -> TwoSourceWorld {
        let mut rng = seeded(seed);
        let clean_vocab: Vec<String> = (0..40).map(letter_token).collect();
        // The junk chain walks the clean vocabulary plus its own word pool,
        // so the sources overlap in words but disagree in transitions.
        let mut junk_vocab: Vec<String> = (0..40).map(letter_token).collect();
        junk_vocab.extend((100..160).map(letter_token));
        let spam: Vec<String> = [
            "buy", "cheap", "click", "free", "win", "now", "offer", "deal", "sale", "cash",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let clean_chain = random_chain(&mut rng, clean_vocab.len());
        let junk_chain = random_chain(&mut rng, junk_vocab.len());
        let mut world = TwoSourceWorld {
            clean_vocab,
            junk_vocab,
            spam,
            clean_chain,
            junk_chain,
            templates: Vec::new(),
        };
        world.templates = (0..TEMPLATE_COUNT)
            .map(|_| {
                let len = rng.random_range(7..=12);
                world.clean_sentence(&mut rng, len)
            })
            .collect();
        world
    }

    fn clean_sentence(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
        let mut state = rng.random_range(0..self.clean_vocab.len());
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            tokens.push(self.clean_vocab[state].clone());
            state = self.clean_chain[state][pick_weighted(rng)];
        }
        tokens
    }

    pub fn clean_doc(&self, rng: &mut ChaCha8Rng) -> String {
        let target = rng.random_range(14..=34);
        let mut tokens: Vec<String> = Vec::with_capacity(target + 4);
        while tokens.len() < target {
            if !tokens.is_empty() {
                tokens.push(".".to_string());
            }
            let len = rng.random_range(9..=16);
            tokens.extend(self.clean_sentence(rng, len));
        }
        tokens.join(" ")
    }

    /// Verbatim template sentences, occasionally mixed with a fresh clean
    /// sentence, separated by the same "." as everything else.
    pub fn boilerplate_doc(&self, rng: &mut ChaCha8Rng) -> String {
        let target = rng.random_range(16..=36);
        let mut tokens: Vec<String> = Vec::new();
        while tokens.len() < target {
            if !tokens.is_empty() {
                tokens.push(".".to_string());
            }
            if rng.random_bool(0.25) {
                let len = rng.random_range(9..=16);
                tokens.extend(self.clean_sentence(rng, len));
            } else {
                tokens.extend_from_slice(
                    &self.templates[rng.random_range(0..self.templates.len())],
                );
            }
        }
        tokens.join(" ")
    }

    /// Sentences from the junk chain with a sprinkle of word salad, often
    /// with a repeated spam burst spliced in.
    pub fn junk_doc(&self, rng: &mut ChaCha8Rng) -> String {
        let target = rng.random_range(14..=34);
        let mut tokens: Vec<String> = Vec::with_capacity(target + 9);
        while tokens.len() < target {
            if !tokens.is_empty() {
                tokens.push(".".to_string());
            }
            let len = rng.random_range(6..=14);
            let mut state = rng.random_range(0..self.junk_vocab.len());
            for _ in 0..len {
                if rng.random_bool(SALAD_RATE) {
                    tokens.push(self.junk_vocab[rng.random_range(0..self.junk_vocab.len())].clone());
                } else {
                    tokens.push(self.junk_vocab[state].clone());
                }
                state = self.junk_chain[state][pick_weighted(rng)];
            }
        }
        if rng.random_bool(BURST_PROB) {
            let word = self.spam[rng.random_range(0..self.spam.len())].clone();
            let at = rng.random_range(0..=tokens.len());
            let burst = vec![word; rng.random_range(4..=9)];
            tokens.splice(at..at, burst);
        }
        tokens.join(" ")
    }

    pub fn noisy_doc(&self, rng: &mut ChaCha8Rng) -> String {
        if rng.random_bool(BOILERPLATE_SHARE) {
            self.boilerplate_doc(rng)
        } else {
            self.junk_doc(rng)
        }
    }

    pub fn clean_corpus(&self, n: usize, seed: u64) -> Vec<Document> {
        let mut rng = seeded(seed);
        (0..n).map(|i| Document::new(format!("clean-{i}"), self.clean_doc(&mut rng))).collect()
    }

    pub fn noisy_corpus(&self, n: usize, seed: u64) -> Vec<Document> {
        let mut rng = seeded(seed);
        (0..n).map(|i| Document::new(format!("noisy-{i}"), self.noisy_doc(&mut rng))).collect()
    }

    /// Mixed evaluation set: `clean_fraction` of the documents come from
    /// the clean source and are labeled 3.0; the rest are noisy, labeled 0.
    pub fn test_corpus(&self, n: usize, clean_fraction: f64, seed: u64) -> Vec<Document> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|i| {
                let clean = rng.random_bool(clean_fraction);
                let text = if clean { self.clean_doc(&mut rng) } else { self.noisy_doc(&mut rng) };
                let mut doc = Document::new(format!("test-{i}"), text);
                doc.quality_score = Some(if clean { 3.0 } else { 0.0 });
                doc
            })
            .collect()
    }
}

fn random_chain(rng: &mut ChaCha8Rng, states: usize) -> Vec<Vec<usize>> {
    (0..states).map(|_| (0..SUCCESSORS).map(|_| rng.random_range(0..states)).collect()).collect()
}

fn pick_weighted(rng: &mut ChaCha8Rng) -> usize {
    let roll: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, w) in SUCCESSOR_WEIGHTS.iter().enumerate() {
        cumulative += w;
        if roll < cumulative {
            return i;
        }
    }
    SUCCESSORS - 1
}

/// Writes documents as a JSONL shard.
pub fn write_shard(path: &std::path::Path, docs: &[Document]) {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// Independent nearest-rank filter/recall oracle: sort, index, count.
/// Returns (kept_count, recall) for keeping scores at or below the p-th
/// percentile, with positives defined by `labels`.
pub fn oracle_recall(scores: &[f64], labels: &[bool], p: f64) -> (usize, f64) {
    let n = scores.len();
    assert!(n > 0 && labels.len() == n);
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((p * n as f64 / 100.0).ceil() as usize).clamp(1, n);
    let threshold = sorted[rank - 1];
    let kept: Vec<usize> = (0..n).filter(|&i| scores[i] <= threshold).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    let kept_positives = kept.iter().filter(|&&i| labels[i]).count();
    (kept.len(), kept_positives as f64 / positives as f64)
}
