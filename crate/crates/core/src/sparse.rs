//! BM25 inverted index.
//!
//! ```text
//! score(D, Q) = sum_t IDF(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |D| / avgdl))
//! IDF(t)      = ln((N - df + 0.5) / (df + 0.5) + 1)
//! ```
//!
//! The `+1` inside the log keeps IDF non-negative for terms that occur in
//! every chunk. Repeated query terms count once per occurrence.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Chunk;

pub const SPARSE_FORMAT_VERSION: u32 = 1;

/// Lowercase, split on anything that is not alphanumeric, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn term_counts(tokens: &[String]) -> BTreeMap<&str, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    format_version: u32,
    corpus_version: String,
    params: Bm25Params,
    /// Sorted ascending; a chunk's ordinal is its position here.
    chunk_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// term -> (ordinal, tf), sorted by ordinal
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    #[serde(skip)]
    ordinals: HashMap<String, u32>,
}

impl Bm25Index {
    pub fn build(chunks: &[Chunk], params: Bm25Params) -> Result<Self> {
        Self::build_from(chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())), params)
    }

    /// Build from `(chunk_id, text)` pairs.
    pub fn build_from<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>, params: Bm25Params) -> Result<Self> {
        let mut docs: Vec<(&str, &str)> = docs.into_iter().collect();
        docs.sort_by(|a, b| a.0.cmp(b.0));
        if let Some(pair) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateId(pair[0].0.to_string()));
        }

        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (ordinal, (_, text)) in docs.iter().enumerate() {
            let tokens = tokenize(text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((ordinal as u32, count));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        let mut index = Self {
            format_version: SPARSE_FORMAT_VERSION,
            corpus_version: String::new(),
            params,
            chunk_ids: docs.iter().map(|(id, _)| id.to_string()).collect(),
            doc_lengths,
            avg_doc_length,
            postings,
            ordinals: HashMap::new(),
        };
        index.rebuild_lookup();
        Ok(index)
    }

    fn rebuild_lookup(&mut self) {
        self.ordinals = self
            .chunk_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
    }

    pub fn with_corpus_version(mut self, version: impl Into<String>) -> Self {
        self.corpus_version = version.into();
        self
    }

    pub fn corpus_version(&self) -> &str {
        &self.corpus_version
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, chunk_id: &str) -> Option<u32> {
        self.ordinals.get(chunk_id).map(|&o| self.doc_lengths[o as usize])
    }

    pub fn chunk_ids(&self) -> &[String] {
        &self.chunk_ids
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Postings for `term` as (chunk_id, term frequency), sorted by chunk_id.
    pub fn postings(&self, term: &str) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.postings
            .get(term)
            .into_iter()
            .flatten()
            .map(|&(o, tf)| (self.chunk_ids[o as usize].as_str(), tf))
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, ordinal: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let len = self.doc_lengths[ordinal as usize] as f64;
        let rel_len = if self.avg_doc_length > 0.0 {
            len / self.avg_doc_length
        } else {
            0.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * rel_len))
    }

    pub fn bm25_score(&self, query_tokens: &[String], chunk_id: &str) -> Result<f64> {
        let ordinal = *self
            .ordinals
            .get(chunk_id)
            .ok_or_else(|| Error::UnknownChunk(chunk_id.to_string()))?;
        let mut score = 0.0;
        for (term, qtf) in term_counts(query_tokens) {
            let Some(list) = self.postings.get(term) else { continue };
            if let Ok(pos) = list.binary_search_by_key(&ordinal, |&(o, _)| o) {
                score += qtf as f64 * self.term_weight(self.idf(term), list[pos].1, ordinal);
            }
        }
        Ok(score)
    }

    /// Top-k chunks sharing at least one term with the query, best first;
    /// ties by ascending chunk_id.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let tokens = tokenize(query);
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for (term, qtf) in term_counts(&tokens) {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(ordinal, tf) in list {
                *acc.entry(ordinal).or_default() += qtf as f64 * self.term_weight(idf, tf, ordinal);
            }
        }
        let mut hits: Vec<(u32, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(k);
        hits.into_iter()
            .map(|(o, s)| (self.chunk_ids[o as usize].clone(), s))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let mut index: Self =
            serde_json::from_slice(&raw).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        if index.format_version != SPARSE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: index.format_version,
                supported: SPARSE_FORMAT_VERSION,
            });
        }
        if index.doc_lengths.len() != index.chunk_ids.len() {
            return Err(Error::Corrupt(format!("{}: length table mismatch", path.display())));
        }
        index.rebuild_lookup();
        Ok(index)
    }
}
