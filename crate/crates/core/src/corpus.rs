//! Documents and newline-delimited JSON corpus files.
//!
//! A corpus shard is a `.jsonl` file with one record per line:
//! `{"id": "...", "text": "...", "score": 3.2}`, where `score` is an
//! optional quality label used only for evaluation. Real corpora are dirty,
//! so the reader never aborts on a single bad line: blank lines are
//! skipped, malformed lines (bad JSON, missing fields, empty or duplicate
//! ids) are counted, and invalid UTF-8 is lossy-replaced. Callers decide
//! when the malformed count is high enough to give up —
//! [`crate::pipeline`] aborts above 1%.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Human quality label in [0, 5], present on evaluation corpora only.
    #[serde(
        default,
        rename = "score",
        alias = "quality_score",
        skip_serializing_if = "Option::is_none"
    )]
    pub quality_score: Option<f64>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document { id: id.into(), text: text.into(), quality_score: None }
    }
}

/// Line accounting for one shard. `lines` counts non-blank lines, so
/// `docs + malformed == lines` always holds.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct ShardStats {
    pub lines: u64,
    pub blank: u64,
    pub malformed: u64,
    /// Lines whose bytes were not valid UTF-8 and were lossy-replaced.
    pub lossy_utf8: u64,
    pub docs: u64,
}

impl ShardStats {
    pub fn absorb(&mut self, other: &ShardStats) {
        self.lines += other.lines;
        self.blank += other.blank;
        self.malformed += other.malformed;
        self.lossy_utf8 += other.lossy_utf8;
        self.docs += other.docs;
    }
}

/// Reads one shard, returning its documents in file order plus line
/// accounting. Only I/O failures are errors; content problems are tallied.
pub fn read_jsonl(path: &Path) -> Result<(Vec<Document>, ShardStats)> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = BufReader::new(file);
    let mut docs = Vec::new();
    let mut stats = ShardStats::default();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        while buf.last().is_some_and(|&b| b == b'\n' || b == b'\r') {
            buf.pop();
        }
        let line = match std::str::from_utf8(&buf) {
            Ok(s) => std::borrow::Cow::Borrowed(s),
            Err(_) => {
                stats.lossy_utf8 += 1;
                String::from_utf8_lossy(&buf)
            }
        };
        if line.trim().is_empty() {
            stats.blank += 1;
            continue;
        }
        stats.lines += 1;
        match serde_json::from_str::<Document>(&line) {
            Ok(doc) if !doc.id.is_empty() && seen_ids.insert(doc.id.clone()) => {
                stats.docs += 1;
                docs.push(doc);
            }
            _ => stats.malformed += 1,
        }
    }
    Ok((docs, stats))
}
