//! Trained n-gram models: queries, perplexity, and the `CGNM` file format.
//!
//! A model stores natural-log probabilities for every n-gram retained at
//! estimation time plus a log backoff weight for every observed context.
//! Queries walk from the longest matching suffix of the requested context
//! downward, accumulating backoff weights on the way; the unigram table
//! covers every predictable id, so a query always resolves. BOS is context
//! only — asking for its probability returns negative infinity.
//!
//! The serialized form is little-endian and fully sorted, so saving the
//! same model twice — or retraining on the same corpus with the same
//! configuration — produces byte-identical files.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use crate::corpus::Document;
use crate::counts::count_ngrams;
use crate::error::{Error, Result};
use crate::estimate::{estimate_model, TrainingConfig};
use crate::io_util::atomic_write;
use crate::tokenize::tokenize;
use crate::vocab::{Vocabulary, BOS_ID, BOS_TOKEN, EOS_ID, EOS_TOKEN, UNK_TOKEN};

pub const MODEL_MAGIC: [u8; 4] = *b"CGNM";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelMetadata {
    pub training_tokens: u64,
    /// SHA-256 of the training corpus (ids and texts, in order).
    pub corpus_fingerprint: [u8; 32],
    pub max_vocab: u32,
    pub tokenizer_version: u32,
}

impl ModelMetadata {
    pub fn fingerprint_hex(&self) -> String {
        self.corpus_fingerprint.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab: Vocabulary,
    /// `probs[n - 1]` maps n-grams to log probabilities.
    probs: Vec<HashMap<Vec<u32>, f64>>,
    /// `backoffs[len - 1]` maps contexts of `len` ids to log backoff weights.
    backoffs: Vec<HashMap<Vec<u32>, f64>>,
    metadata: ModelMetadata,
}

impl NGramModel {
    /// Tokenizes, builds a vocabulary, counts, and estimates in one call.
    pub fn train(docs: &[Document], config: &TrainingConfig) -> Result<NGramModel> {
        config.validate()?;
        let vocab = Vocabulary::build(docs, config.max_vocab)?;
        let counts = count_ngrams(docs, &vocab, config.order)?;
        estimate_model(&counts, vocab, config)
    }

    /// Assembles a model from raw tables. Shape violations are programming
    /// errors and panic; file parsing validates before calling this.
    pub fn from_parts(
        order: usize,
        vocab: Vocabulary,
        probs: Vec<HashMap<Vec<u32>, f64>>,
        backoffs: Vec<HashMap<Vec<u32>, f64>>,
        metadata: ModelMetadata,
    ) -> NGramModel {
        assert!(order >= 1, "order must be at least 1");
        assert_eq!(probs.len(), order, "one probability table per order");
        assert_eq!(backoffs.len(), order - 1, "one backoff table per context length");
        debug_assert!(probs
            .iter()
            .enumerate()
            .all(|(i, t)| t.keys().all(|k| k.len() == i + 1 && *k.last().unwrap() != BOS_ID)));
        debug_assert!(backoffs
            .iter()
            .enumerate()
            .all(|(i, t)| t.keys().all(|k| k.len() == i + 1)));
        NGramModel { order, vocab, probs, backoffs, metadata }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    /// Stored n-grams of length `n` with their log probabilities.
    pub fn prob_entries(&self, n: usize) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.probs[n - 1].iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Stored contexts of length `len` with their log backoff weights.
    pub fn backoff_entries(&self, len: usize) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.backoffs[len - 1].iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Number of stored n-grams at each order, index 0 = unigrams.
    pub fn ngram_type_counts(&self) -> Vec<usize> {
        self.probs.iter().map(HashMap::len).collect()
    }

    /// Natural-log probability of `token` after `context`. Contexts longer
    /// than `order - 1` ids are truncated to their tail; unseen ids are
    /// fine (UNK has a probability of its own). Asking for BOS returns
    /// `-inf` — it is padding, never an event.
    pub fn log_prob(&self, context: &[u32], token: u32) -> f64 {
        let start = context.len().saturating_sub(self.order - 1);
        let mut buf = Vec::with_capacity(self.order);
        buf.extend_from_slice(&context[start..]);
        buf.push(token);
        self.log_prob_query(&buf)
    }

    /// Longest-suffix-match evaluation over `buf = context ++ [token]`.
    fn log_prob_query(&self, buf: &[u32]) -> f64 {
        let n = buf.len();
        let mut acc = 0.0;
        for s in 0..n {
            let key = &buf[s..];
            if key.len() == 1 {
                return match self.probs[0].get(key) {
                    Some(lp) => acc + lp,
                    None => f64::NEG_INFINITY,
                };
            }
            if let Some(lp) = self.probs[key.len() - 1].get(key) {
                return acc + lp;
            }
            if let Some(bo) = self.backoffs[key.len() - 2].get(&key[..key.len() - 1]) {
                acc += bo;
            }
        }
        unreachable!("the unigram level always resolves");
    }

    /// Perplexity of a raw text under this model.
    pub fn perplexity(&self, text: &str) -> f64 {
        let tokens = tokenize(text);
        let ids = self.vocab.encode(tokens.iter().map(String::as_str));
        self.perplexity_ids(&ids)
    }

    /// Perplexity of a pre-encoded document: `exp(-mean log prob)` over the
    /// tokens plus the closing EOS, so an empty document still has one
    /// scored event and the result is always finite and positive.
    pub fn perplexity_ids(&self, ids: &[u32]) -> f64 {
        let k = self.order - 1;
        let mut wrapped = Vec::with_capacity(ids.len() + k + 1);
        wrapped.resize(k, BOS_ID);
        wrapped.extend_from_slice(ids);
        wrapped.push(EOS_ID);
        let mut sum = 0.0;
        for end in k..wrapped.len() {
            sum += self.log_prob_query(&wrapped[end - k..=end]);
        }
        let events = (ids.len() + 1) as f64;
        (-(sum / events)).exp()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, |w| self.write_to(w).map_err(|e| Error::file(path, e)))
    }

    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&MODEL_MAGIC)?;
        w32(w, MODEL_FORMAT_VERSION)?;
        w32(w, self.order as u32)?;
        w32(w, self.vocab.len() as u32)?;
        w32(w, self.metadata.max_vocab)?;
        w32(w, self.metadata.tokenizer_version)?;
        w64(w, self.metadata.training_tokens)?;
        w.write_all(&self.metadata.corpus_fingerprint)?;
        for tok in self.vocab.tokens() {
            w32(w, tok.len() as u32)?;
            w.write_all(tok.as_bytes())?;
        }
        for n in 1..=self.order {
            let keys = self.sorted_keys(n);
            w64(w, keys.len() as u64)?;
            for key in keys {
                for &id in key {
                    w32(w, id)?;
                }
                // Context-only keys (ending in BOS) carry no probability;
                // a zero placeholder keeps entries fixed-width.
                wf64(w, self.probs[n - 1].get(key).copied().unwrap_or(0.0))?;
                if n < self.order {
                    wf64(w, self.backoffs[n - 1].get(key).copied().unwrap_or(0.0))?;
                }
            }
        }
        Ok(())
    }

    /// Union of n-gram and context keys at length `n`, sorted.
    fn sorted_keys(&self, n: usize) -> Vec<&Vec<u32>> {
        let mut keys: Vec<&Vec<u32>> = self.probs[n - 1].keys().collect();
        if n < self.order {
            keys.extend(self.backoffs[n - 1].keys());
        }
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    pub fn load(path: &Path) -> Result<NGramModel> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let mut reader = BufReader::new(file);
        let model = Self::read_from(&mut reader, path)?;
        let mut probe = [0u8; 1];
        if reader.read(&mut probe).map_err(|e| Error::file(path, e))? != 0 {
            return Err(bad_file(path, "trailing bytes after model data"));
        }
        Ok(model)
    }

    fn read_from<R: Read>(r: &mut R, path: &Path) -> Result<NGramModel> {
        let mut magic = [0u8; 4];
        read_bytes(r, &mut magic, path)?;
        if magic != MODEL_MAGIC {
            return Err(bad_file(path, "bad magic bytes"));
        }
        let version = r32(r, path)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(bad_file(path, &format!("unsupported format version {version}")));
        }
        let order = r32(r, path)? as usize;
        if order == 0 {
            return Err(bad_file(path, "order is zero"));
        }
        let vocab_len = r32(r, path)? as usize;
        if vocab_len < 3 {
            return Err(bad_file(path, "vocabulary smaller than the reserved ids"));
        }
        let max_vocab = r32(r, path)?;
        if (max_vocab as usize) < vocab_len {
            return Err(bad_file(path, "vocabulary exceeds its declared capacity"));
        }
        let tokenizer_version = r32(r, path)?;
        let training_tokens = r64(r, path)?;
        let mut corpus_fingerprint = [0u8; 32];
        read_bytes(r, &mut corpus_fingerprint, path)?;

        let mut tokens = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = r32(r, path)? as usize;
            if len > (1 << 20) {
                return Err(bad_file(path, "unreasonably long vocabulary entry"));
            }
            let mut bytes = vec![0u8; len];
            read_bytes(r, &mut bytes, path)?;
            let tok = String::from_utf8(bytes)
                .map_err(|_| bad_file(path, "vocabulary entry is not UTF-8"))?;
            tokens.push(tok);
        }
        if tokens[0] != BOS_TOKEN || tokens[1] != EOS_TOKEN || tokens[2] != UNK_TOKEN {
            return Err(bad_file(path, "reserved marker tokens are missing"));
        }
        let mut seen: HashSet<&str> = HashSet::with_capacity(tokens.len());
        if !tokens.iter().all(|t| seen.insert(t)) {
            return Err(bad_file(path, "duplicate vocabulary entries"));
        }
        drop(seen);
        let vocab = Vocabulary::from_loaded(tokens, max_vocab as usize);

        let mut probs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];
        let mut backoffs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order - 1];
        for n in 1..=order {
            let entry_count = r64(r, path)?;
            for _ in 0..entry_count {
                let mut key = Vec::with_capacity(n);
                for _ in 0..n {
                    let id = r32(r, path)?;
                    if id as usize >= vocab_len {
                        return Err(bad_file(path, "n-gram id outside the vocabulary"));
                    }
                    key.push(id);
                }
                let prob = rf64(r, path)?;
                let is_context_only = *key.last().unwrap() == BOS_ID;
                if !is_context_only {
                    if !prob.is_finite() {
                        return Err(bad_file(path, "non-finite log probability"));
                    }
                    probs[n - 1].insert(key.clone(), prob);
                }
                if n < order {
                    let backoff = rf64(r, path)?;
                    if !backoff.is_finite() {
                        return Err(bad_file(path, "non-finite backoff weight"));
                    }
                    backoffs[n - 1].insert(key, backoff);
                }
            }
        }

        let metadata = ModelMetadata {
            training_tokens,
            corpus_fingerprint,
            max_vocab,
            tokenizer_version,
        };
        Ok(NGramModel::from_parts(order, vocab, probs, backoffs, metadata))
    }
}

fn bad_file(path: &Path, reason: &str) -> Error {
    Error::BadModelFile { path: path.to_path_buf(), reason: reason.to_string() }
}

fn read_bytes<R: Read>(r: &mut R, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            bad_file(path, "truncated file")
        } else {
            Error::file(path, e)
        }
    })
}

fn w32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn wf64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn r32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_bytes(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn r64<R: Read>(r: &mut R, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn rf64<R: Read>(r: &mut R, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}
