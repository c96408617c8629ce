use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelEntry {
    pub text: String,
    pub relevant: BTreeSet<String>,
}

/// Relevance judgments: query id to query text and relevant ids.
///
/// The file format is one `query_id<TAB>query_text<TAB>relevant_id` line
/// per relevant pair. Blank lines and lines starting with `#` are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    queries: BTreeMap<String, QrelEntry>,
}

impl Qrels {
    pub fn parse(raw: &str) -> Result<Self> {
        let mut q = Self::default();
        for (i, line) in raw.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::MalformedQrels {
                    line: lineno,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if lineno == 1 && fields[0] == "query_id" {
                continue;
            }
            q.add(fields[0].trim(), fields[1].trim(), fields[2].trim())
                .map_err(|reason| Error::MalformedQrels { line: lineno, reason })?;
        }
        if q.queries.is_empty() {
            return Err(Error::MalformedQrels {
                line: 0,
                reason: "no judgments".into(),
            });
        }
        Ok(q)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&raw)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Result<Self> {
        let mut q = Self::default();
        for (i, (id, text, rel)) in pairs.into_iter().enumerate() {
            q.add(id, text, rel)
                .map_err(|reason| Error::MalformedQrels { line: i + 1, reason })?;
        }
        Ok(q)
    }

    fn add(&mut self, id: &str, text: &str, relevant: &str) -> std::result::Result<(), String> {
        if id.is_empty() || relevant.is_empty() {
            return Err("empty query id or relevant id".into());
        }
        let entry = self.queries.entry(id.to_string()).or_insert_with(|| QrelEntry {
            text: text.to_string(),
            relevant: BTreeSet::new(),
        });
        if entry.text != text {
            return Err(format!("query {id} has conflicting texts"));
        }
        entry.relevant.insert(relevant.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &QrelEntry)> {
        self.queries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.queries.get(query_id).map(|e| &e.relevant)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query_id\tquery_text\trelevant_chunk_id\n");
        for (id, e) in &self.queries {
            for r in &e.relevant {
                let _ = writeln!(out, "{id}\t{}\t{r}", e.text);
            }
        }
        out
    }
}
