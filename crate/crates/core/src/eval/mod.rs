//! Retrieval evaluation: P@k, R@k and MRR per profile over judged queries,
//! plus seeded synthetic corpora with planted relevance.

mod metrics;
mod qrels;
pub mod synth;

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{mrr, precision_at_k, recall_at_k, reciprocal_rank};
pub use qrels::{QrelEntry, Qrels};

use crate::engine::Engine;
use crate::error::{Result, Stage};
use crate::index::ChunkLookup;
use crate::ingest::{contained_row_ids, Chunk};
use crate::retrieve::Profile;

pub const DEFAULT_K: usize = 5;

/// Ids a retrieved chunk can be judged under: its own id, its document
/// id, and the ids of table rows it contains whole.
pub fn relevance_units(chunk: &Chunk) -> Vec<String> {
    let mut units = vec![chunk.chunk_id.clone(), chunk.doc_id.clone()];
    units.extend(contained_row_ids(chunk));
    units
}

/// Map a ranked chunk list onto judged ids. Each chunk becomes the first
/// relevant unit it covers that no earlier chunk has claimed; otherwise it
/// stays under its chunk id (prefixed `~` if it only repeats a claimed unit).
pub fn judge_ranking(ranked: &[String], relevant: &BTreeSet<String>, chunks: &dyn ChunkLookup) -> Vec<String> {
    let mut credited: HashSet<String> = HashSet::new();
    ranked
        .iter()
        .map(|id| {
            let units = chunks
                .chunk(id)
                .map(relevance_units)
                .unwrap_or_else(|| vec![id.clone()]);
            let mut repeat = false;
            for u in units.into_iter().filter(|u| relevant.contains(u)) {
                if credited.insert(u.clone()) {
                    return u;
                }
                repeat = true;
            }
            if repeat {
                format!("~{id}")
            } else {
                id.clone()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub query: String,
    pub ranked: Vec<String>,
    pub judged: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub reciprocal_rank: f64,
    pub precision_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub profile: Profile,
    pub retrieval_performed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub mrr: f64,
    pub precision_at_1: f64,
    /// Human or model-judged scores, supplied outside this tool.
    pub faithfulness: Option<f64>,
    pub completeness: Option<f64>,
    pub relevance: Option<f64>,
    pub queries: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub index_version: String,
    pub runs: Vec<EvalRun>,
}

type MetricRow = (String, fn(&EvalRun) -> Option<f64>);

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Run every judged query through each profile's retrieval (and rerank,
/// for the advanced profile) and score the rankings at `k`.
pub fn evaluate_profiles(engine: &Engine, qrels: &Qrels, profiles: &[Profile], k: usize) -> Result<EvalReport> {
    let mut runs = Vec::with_capacity(profiles.len());
    for &profile in profiles {
        let chunks = &engine.indices(profile).chunks;
        let mut queries = Vec::with_capacity(qrels.len());
        for (qid, entry) in qrels.iter() {
            let mut pool = engine
                .retrieve(&entry.text, profile)
                .map_err(|e| e.at(Stage::Retrieve))?;
            if profile == Profile::Advanced {
                pool = engine
                    .reranker
                    .rerank_candidates(&entry.text, pool, chunks)
                    .map_err(|f| f.error.at(Stage::Rerank))?;
            }
            let ranked: Vec<String> = pool.into_iter().map(|c| c.chunk_id).collect();
            let judged = judge_ranking(&ranked, &entry.relevant, chunks);
            queries.push(QueryResult {
                query_id: qid.to_string(),
                query: entry.text.clone(),
                precision: precision_at_k(&judged, &entry.relevant, k)?,
                recall: recall_at_k(&judged, &entry.relevant, k)?,
                reciprocal_rank: reciprocal_rank(&judged, &entry.relevant),
                precision_at_1: precision_at_k(&judged, &entry.relevant, 1)?,
                ranked,
                judged,
            });
        }
        let retrieval_performed = profile != Profile::DirectLlm;
        runs.push(EvalRun {
            profile,
            retrieval_performed,
            note: (!retrieval_performed)
                .then(|| "no retrieval is performed for this profile; retrieval metrics are 0 by definition".into()),
            precision_at_k: mean(queries.iter().map(|q| q.precision)),
            recall_at_k: mean(queries.iter().map(|q| q.recall)),
            mrr: mean(queries.iter().map(|q| q.reciprocal_rank)),
            precision_at_1: mean(queries.iter().map(|q| q.precision_at_1)),
            faithfulness: None,
            completeness: None,
            relevance: None,
            queries,
        });
    }
    Ok(EvalReport {
        k,
        index_version: engine.version().to_string(),
        runs,
    })
}

impl EvalReport {
    pub fn run(&self, profile: Profile) -> Option<&EvalRun> {
        self.runs.iter().find(|r| r.profile == profile)
    }

    /// Metrics as rows, profiles as columns.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<16}", "metric");
        for r in &self.runs {
            let name = if r.retrieval_performed {
                r.profile.to_string()
            } else {
                format!("{}*", r.profile)
            };
            let _ = write!(out, "{name:>12}");
        }
        out.push('\n');
        let rows: [MetricRow; 7] = [
            (format!("P@{}", self.k), |r| Some(r.precision_at_k)),
            (format!("R@{}", self.k), |r| Some(r.recall_at_k)),
            ("MRR".into(), |r| Some(r.mrr)),
            ("P@1".into(), |r| Some(r.precision_at_1)),
            ("Faithfulness".into(), |r| r.faithfulness),
            ("Completeness".into(), |r| r.completeness),
            ("Relevance".into(), |r| r.relevance),
        ];
        for (label, get) in rows {
            let _ = write!(out, "{label:<16}");
            for r in &self.runs {
                match get(r) {
                    Some(v) => {
                        let _ = write!(out, "{v:>12.4}");
                    }
                    None => {
                        let _ = write!(out, "{:>12}", "-");
                    }
                }
            }
            out.push('\n');
        }
        if self.runs.iter().any(|r| !r.retrieval_performed) {
            out.push_str("* no retrieval performed; retrieval metrics are 0 by definition\n");
        }
        out
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
