//! Hybrid retrieval: dense and sparse candidate lists, min-max
//! normalisation, weighted fusion and optional metadata filtering.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::index::{ChunkLookup, IndexSet};
use crate::ingest::{find_entities, Entity, Gazetteer};

/// Named retrieval configuration used by the orchestrator and evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// No retrieval; the model answers from the question alone.
    DirectLlm,
    /// Dense-only over the small-chunk, flattened-table layout.
    Naive,
    /// Hybrid retrieval, filtering, reranking and query rewriting.
    Advanced,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::DirectLlm, Profile::Naive, Profile::Advanced];

    pub fn name(self) -> &'static str {
        match self {
            Profile::DirectLlm => "direct_llm",
            Profile::Naive => "naive",
            Profile::Advanced => "advanced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Narrows fused candidates by chunk metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataFilter {
    /// Every listed key must be present with exactly this value.
    #[serde(default)]
    pub exact: BTreeMap<String, String>,
    /// Keep only chunks sharing an entity with the query. Ignored when the
    /// query has no entities.
    #[serde(default)]
    pub require_entity_overlap: bool,
}

impl MetadataFilter {
    pub fn is_empty(&self) -> bool {
        self.exact.is_empty() && !self.require_entity_overlap
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidConfig("metadata filter has no criteria".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub w_dense: f64,
    pub w_sparse: f64,
    pub k_dense: usize,
    pub k_sparse: usize,
    pub pool_size: usize,
    pub final_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<MetadataFilter>,
    /// Overrides the dense index's own `ef_search` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ef_search: Option<usize>,
}

impl RetrievalConfig {
    pub fn advanced() -> Self {
        Self {
            w_dense: 0.6,
            w_sparse: 0.4,
            k_dense: 50,
            k_sparse: 50,
            pool_size: 50,
            final_k: 5,
            filter: None,
            ef_search: None,
        }
    }

    pub fn naive() -> Self {
        Self {
            w_dense: 1.0,
            w_sparse: 0.0,
            k_sparse: 0,
            ..Self::advanced()
        }
    }

    pub fn direct_llm() -> Self {
        Self {
            k_dense: 0,
            ..Self::naive()
        }
    }

    pub fn default_for(profile: Profile) -> Self {
        match profile {
            Profile::DirectLlm => Self::direct_llm(),
            Profile::Naive => Self::naive(),
            Profile::Advanced => Self::advanced(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.w_dense >= 0.0 && self.w_sparse >= 0.0) {
            return bad("fusion weights must be non-negative");
        }
        if (self.w_dense + self.w_sparse - 1.0).abs() > 1e-9 {
            return bad("fusion weights must sum to 1");
        }
        if self.final_k == 0 {
            return bad("final_k must be at least 1");
        }
        if self.pool_size < self.final_k {
            return bad("pool_size must be at least final_k");
        }
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        Ok(())
    }
}

/// A chunk with every score computed for it along the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub chunk_id: String,
    pub dense_raw: Option<f64>,
    pub sparse_raw: Option<f64>,
    pub dense_norm: f64,
    pub sparse_norm: f64,
    pub fused: f64,
    #[serde(default)]
    pub rerank: Option<f64>,
}

/// Min-max scale to `[0, 1]`. A list whose scores are all equal maps to 1.0.
pub fn normalize_scores(raw: &[(String, f64)]) -> Vec<(String, f64)> {
    let Some(min) = raw.iter().map(|r| r.1).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    let max = raw.iter().map(|r| r.1).max_by(f64::total_cmp).unwrap_or(min);
    let span = max - min;
    raw.iter()
        .map(|(id, s)| {
            let n = if span > 0.0 { (s - min) / span } else { 1.0 };
            (id.clone(), n)
        })
        .collect()
}

/// Weighted sum over the union of two normalised lists. A chunk missing
/// from one list scores 0 there. Sorted by fused score, ties by chunk_id.
pub fn fuse(dense: &[(String, f64)], sparse: &[(String, f64)], w_dense: f64, w_sparse: f64) -> Vec<ScoredCandidate> {
    let mut by_id: HashMap<&str, (f64, f64)> = HashMap::new();
    for (id, s) in dense {
        by_id.entry(id).or_default().0 = *s;
    }
    for (id, s) in sparse {
        by_id.entry(id).or_default().1 = *s;
    }
    let mut out: Vec<ScoredCandidate> = by_id
        .into_iter()
        .map(|(id, (d, s))| ScoredCandidate {
            chunk_id: id.to_string(),
            dense_raw: None,
            sparse_raw: None,
            dense_norm: d,
            sparse_norm: s,
            fused: w_dense * d + w_sparse * s,
            rerank: None,
        })
        .collect();
    sort_by_fused(&mut out);
    out
}

pub(crate) fn sort_by_fused(cands: &mut [ScoredCandidate]) {
    cands.sort_by(|a, b| b.fused.total_cmp(&a.fused).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
}

/// Keep candidates whose chunks satisfy `filter`; order is preserved.
pub fn apply_filter(
    cands: Vec<ScoredCandidate>,
    filter: &MetadataFilter,
    query_entities: &[Entity],
    chunks: &dyn ChunkLookup,
) -> Vec<ScoredCandidate> {
    let wanted: HashSet<_> = query_entities.iter().map(Entity::key).collect();
    cands
        .into_iter()
        .filter(|c| {
            let Some(chunk) = chunks.chunk(&c.chunk_id) else {
                return false;
            };
            let exact_ok = filter.exact.iter().all(|(k, v)| chunk.metadata.get(k) == Some(v));
            let entity_ok = !filter.require_entity_overlap
                || wanted.is_empty()
                || chunk.entities.iter().any(|e| wanted.contains(&e.key()));
            exact_ok && entity_ok
        })
        .collect()
}

/// Produce the fused candidate pool for `query`, best first, at most
/// `pool_size` long.
pub fn retrieve(
    query: &str,
    cfg: &RetrievalConfig,
    profile: Profile,
    indices: &IndexSet,
    embedder: &dyn Embedder,
    gazetteer: &Gazetteer,
) -> Result<Vec<ScoredCandidate>> {
    cfg.validate()?;
    if profile == Profile::DirectLlm {
        return Ok(Vec::new());
    }
    indices.check_consistent()?;

    let dense_raw = if cfg.k_dense == 0 || indices.dense.is_empty() {
        Vec::new()
    } else {
        let q = embedder.embed_one(query)?;
        let ef = cfg.ef_search.unwrap_or(indices.dense.params().ef_search);
        indices.dense.search(&q, cfg.k_dense, ef)?
    };

    let (sparse_raw, w_dense, w_sparse) = match profile {
        Profile::Naive => (Vec::new(), 1.0, 0.0),
        _ if cfg.k_sparse == 0 => (Vec::new(), cfg.w_dense, cfg.w_sparse),
        _ => (indices.sparse.search(query, cfg.k_sparse), cfg.w_dense, cfg.w_sparse),
    };

    let mut pool = fuse(
        &normalize_scores(&dense_raw),
        &normalize_scores(&sparse_raw),
        w_dense,
        w_sparse,
    );
    let dense_map: HashMap<&str, f64> = dense_raw.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let sparse_map: HashMap<&str, f64> = sparse_raw.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    for c in &mut pool {
        c.dense_raw = dense_map.get(c.chunk_id.as_str()).copied();
        c.sparse_raw = sparse_map.get(c.chunk_id.as_str()).copied();
    }

    if profile == Profile::Advanced {
        if let Some(filter) = &cfg.filter {
            let ents = find_entities(query, gazetteer);
            pool = apply_filter(pool, filter, &ents, &indices.chunks);
        }
    }
    pool.truncate(cfg.pool_size);
    Ok(pool)
}
