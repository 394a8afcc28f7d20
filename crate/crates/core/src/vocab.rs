//! Token vocabulary with reserved marker ids.
//!
//! Ids 0, 1, 2 are pinned to `<s>`, `</s>`, and `<unk>` in every model, so
//! serialized models and in-memory code agree without a lookup. The markers
//! mix alphanumerics and punctuation, which the tokenizer always splits, so
//! no real token can ever collide with them.

use std::collections::HashMap;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tokenize::tokenize;

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

pub const RESERVED: usize = 3;

/// Default vocabulary capacity, including the three reserved ids.
pub const DEFAULT_MAX_VOCAB: usize = 65_536;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from the `max_size - 3` most frequent tokens in
    /// the corpus. Frequency ties break toward the lexicographically
    /// smaller token so that rebuilding from the same corpus is
    /// reproducible. A corpus with documents but no tokens is legal and
    /// yields just the reserved ids; a corpus with no documents is not.
    pub fn build<'a, I>(docs: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        if max_size < RESERVED + 1 {
            return Err(Error::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut doc_count = 0u64;
        for doc in docs {
            doc_count += 1;
            for tok in tokenize(&doc.text) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        if doc_count == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
        ranked.truncate(max_size - RESERVED);
        Self::from_content_tokens(ranked.into_iter().map(|(t, _)| t), max_size)
    }

    /// Assembles a vocabulary from pre-selected content tokens, in order.
    /// Callers are trusted on ordering; `build` is the usual entry point.
    pub fn from_content_tokens<I>(content: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
    {
        if max_size < RESERVED + 1 {
            return Err(Error::VocabTooSmall(max_size));
        }
        let mut tokens = vec![
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        tokens.extend(content);
        assert!(tokens.len() <= max_size, "more content tokens than max_size allows");
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary { tokens, index, max_size })
    }

    /// Reassembles a vocabulary read back from a model file; the loader has
    /// already checked the markers, uniqueness, and capacity.
    pub(crate) fn from_loaded(tokens: Vec<String>, max_size: usize) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index, max_size }
    }

    /// Total lookup: unknown tokens map to [`UNK_ID`].
    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Maps a token stream onto ids.
    pub fn encode<'a, I>(&self, tokens: I) -> Vec<u32>
    where
        I: IntoIterator<Item = &'a str>,
    {
        tokens.into_iter().map(|t| self.lookup(t)).collect()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Number of ids in use, reserved ids included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved ids are always present
    }

    /// The capacity this vocabulary was built with, not the ids in use.
    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Ids a model predicts over: everything except BOS, which only ever
    /// appears as left padding. BOS is id 0, so this is a plain range.
    pub fn support(&self) -> std::ops::Range<u32> {
        EOS_ID..self.tokens.len() as u32
    }

    pub fn support_size(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
