//! Second-stage scoring of (query, chunk) pairs.
//!
//! The local scorer is token-multiset F1 between query and chunk text. The
//! remote scorer posts the pairs to a cross-encoder service.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http;
use crate::index::ChunkLookup;
use crate::retrieve::{sort_by_fused, ScoredCandidate};
use crate::sparse::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankerKind {
    LocalLexical,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerProfile {
    pub kind: RerankerKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Only the first `top_n` fused candidates are rescored.
    pub top_n: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

pub const DEFAULT_REMOTE_MODEL: &str = "ms-marco-MiniLM-L-12-v2";

fn default_timeout_secs() -> u64 {
    30
}

impl Default for RerankerProfile {
    fn default() -> Self {
        Self {
            kind: RerankerKind::LocalLexical,
            endpoint: None,
            model_id: None,
            top_n: 20,
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl RerankerProfile {
    pub fn remote(endpoint: &str, model_id: &str) -> Self {
        Self {
            kind: RerankerKind::Remote,
            endpoint: Some(endpoint.to_string()),
            model_id: Some(model_id.to_string()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::InvalidConfig("reranker top_n must be at least 1".into()));
        }
        if (self.kind == RerankerKind::Remote) != self.endpoint.is_some() {
            return Err(Error::InvalidConfig(
                "reranker endpoint must be set exactly when kind is remote".into(),
            ));
        }
        Ok(())
    }
}

/// Token-multiset F1 between query and text, in `[0, 1]`.
pub fn score_pair(query: &str, text: &str) -> f64 {
    let q = tokenize(query);
    let t = tokenize(text);
    if q.is_empty() || t.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in &q {
        *counts.entry(tok).or_default() += 1;
    }
    let mut overlap = 0usize;
    for tok in &t {
        if let Some(n) = counts.get_mut(tok.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (q.len() + t.len()) as f64
}

/// Reranking failed; `fallback` is the input in fused order.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RerankFailure {
    pub error: Error,
    pub fallback: Vec<ScoredCandidate>,
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    model: &'a str,
    query: &'a str,
    documents: Vec<&'a str>,
}

#[derive(Deserialize)]
struct RerankResponse {
    scores: Vec<f64>,
}

pub struct Reranker {
    profile: RerankerProfile,
    agent: Option<ureq::Agent>,
}

impl std::fmt::Debug for Reranker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reranker").field("profile", &self.profile).finish()
    }
}

impl Reranker {
    pub fn new(profile: RerankerProfile) -> Result<Self> {
        profile.validate()?;
        let agent =
            (profile.kind == RerankerKind::Remote).then(|| http::agent(Duration::from_secs(profile.timeout_secs)));
        Ok(Self { profile, agent })
    }

    pub fn local() -> Self {
        Self {
            profile: RerankerProfile::default(),
            agent: None,
        }
    }

    pub fn profile(&self) -> &RerankerProfile {
        &self.profile
    }

    /// One score per document, in `[0, 1]`.
    pub fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>> {
        match (&self.agent, &self.profile.endpoint) {
            (Some(agent), Some(url)) => {
                let req = RerankRequest {
                    model: self.profile.model_id.as_deref().unwrap_or(DEFAULT_REMOTE_MODEL),
                    query,
                    documents: documents.to_vec(),
                };
                let resp: RerankResponse = http::post_json(agent, url, &req, "reranker")?;
                if resp.scores.len() != documents.len() {
                    return Err(Error::upstream(
                        "reranker",
                        format!("expected {} scores, got {}", documents.len(), resp.scores.len()),
                    ));
                }
                if resp.scores.iter().any(|s| !s.is_finite()) {
                    return Err(Error::upstream("reranker", "non-finite score"));
                }
                Ok(min_max(&resp.scores))
            }
            _ => Ok(documents.iter().map(|d| score_pair(query, d)).collect()),
        }
    }

    /// Rescore the first `top_n` fused candidates and sort them by rerank
    /// score, then fused score, then chunk_id. The tail keeps fused order.
    pub fn rerank_candidates(
        &self,
        query: &str,
        mut cands: Vec<ScoredCandidate>,
        chunks: &dyn ChunkLookup,
    ) -> std::result::Result<Vec<ScoredCandidate>, RerankFailure> {
        sort_by_fused(&mut cands);
        let n = self.profile.top_n.min(cands.len());
        let texts: std::result::Result<Vec<&str>, Error> = cands[..n]
            .iter()
            .map(|c| {
                chunks
                    .chunk(&c.chunk_id)
                    .map(|ch| ch.text.as_str())
                    .ok_or_else(|| Error::UnknownChunk(c.chunk_id.clone()))
            })
            .collect();
        let scores = match texts.and_then(|t| self.score(query, &t)) {
            Ok(s) => s,
            Err(error) => return Err(RerankFailure { error, fallback: cands }),
        };
        for (c, s) in cands.iter_mut().zip(scores) {
            c.rerank = Some(s);
        }
        cands[..n].sort_by(|a, b| {
            b.rerank
                .unwrap_or(0.0)
                .total_cmp(&a.rerank.unwrap_or(0.0))
                .then_with(|| b.fused.total_cmp(&a.fused))
                .then_with(|| a.chunk_id.cmp(&b.chunk_id))
        });
        Ok(cands)
    }
}

fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.iter()
        .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 1.0 })
        .collect()
}
