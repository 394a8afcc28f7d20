//! Raw n-gram counting over id sequences.
//!
//! Each document is wrapped as `order - 1` BOS markers, the token ids, then
//! one EOS marker, and every n-gram ending at a token or EOS position is
//! counted for n = 1..=order. BOS positions never end an n-gram — they are
//! context, not events — so unigram counts contain no BOS and document
//! boundaries are never crossed.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tokenize::tokenize;
use crate::vocab::{Vocabulary, BOS_ID, EOS_ID};

#[derive(Debug, Clone)]
pub struct NGramCounts {
    order: usize,
    /// `tables[n - 1]` maps n-grams (as id vectors) to occurrence counts.
    tables: Vec<HashMap<Vec<u32>, u64>>,
    total_tokens: u64,
    doc_count: u64,
    fingerprint: [u8; 32],
}

impl NGramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn table(&self, n: usize) -> &HashMap<Vec<u32>, u64> {
        &self.tables[n - 1]
    }

    pub fn get(&self, ngram: &[u32]) -> u64 {
        self.tables[ngram.len() - 1].get(ngram).copied().unwrap_or(0)
    }

    /// Tokens counted before wrapping; EOS and BOS markers excluded.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    /// SHA-256 over the (id, text) stream, stamped into trained models so
    /// downstream stats files can say which corpus a model came from.
    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }
}

/// Counts wrapped n-grams for every order up to `order`.
pub fn count_ngrams<'a, I>(docs: I, vocab: &Vocabulary, order: usize) -> Result<NGramCounts>
where
    I: IntoIterator<Item = &'a Document>,
{
    if order == 0 {
        return Err(Error::InvalidOrder);
    }
    let mut tables: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    let mut total_tokens = 0u64;
    let mut doc_count = 0u64;
    let mut hasher = Sha256::new();
    let mut wrapped: Vec<u32> = Vec::new();
    for doc in docs {
        doc_count += 1;
        hasher.update(doc.id.as_bytes());
        hasher.update([0x1f]);
        hasher.update(doc.text.as_bytes());
        hasher.update([0x1e]);

        wrapped.clear();
        wrapped.resize(order - 1, BOS_ID);
        for tok in tokenize(&doc.text) {
            wrapped.push(vocab.lookup(&tok));
            total_tokens += 1;
        }
        wrapped.push(EOS_ID);

        for end in (order - 1)..wrapped.len() {
            for n in 1..=order {
                bump(&mut tables[n - 1], &wrapped[end + 1 - n..=end]);
            }
        }
    }
    if doc_count == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(NGramCounts {
        order,
        tables,
        total_tokens,
        doc_count,
        fingerprint: hasher.finalize().into(),
    })
}

fn bump(table: &mut HashMap<Vec<u32>, u64>, key: &[u32]) {
    // Two lookups on a miss, one on a hit; skewed corpora mostly hit, and
    // this avoids allocating a key vector per increment.
    match table.get_mut(key) {
        Some(c) => *c += 1,
        None => {
            table.insert(key.to_vec(), 1);
        }
    }
}
