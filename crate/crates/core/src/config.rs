//! Engine configuration, loaded from a JSON file. Every field has a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dense::HnswParams;
use crate::embed::EmbedderProfile;
use crate::error::{Error, Result};
use crate::ingest::ChunkingConfig;
use crate::llm::LlmConfig;
use crate::rerank::RerankerProfile;
use crate::retrieve::{Profile, RetrievalConfig};
use crate::sparse::Bm25Params;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenseConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub quantized: bool,
    pub seed: u64,
}

impl Default for DenseConfig {
    fn default() -> Self {
        let p = HnswParams::default();
        Self {
            m: p.m,
            ef_construction: p.ef_construction,
            ef_search: p.ef_search,
            quantized: false,
            seed: p.seed,
        }
    }
}

impl DenseConfig {
    pub fn params(&self) -> HnswParams {
        HnswParams {
            seed: self.seed,
            ..HnswParams::with_m(self.m, self.ef_construction, self.ef_search)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfigs {
    pub direct_llm: RetrievalConfig,
    pub naive: RetrievalConfig,
    pub advanced: RetrievalConfig,
}

impl Default for ProfileConfigs {
    fn default() -> Self {
        Self {
            direct_llm: RetrievalConfig::direct_llm(),
            naive: RetrievalConfig::naive(),
            advanced: RetrievalConfig::advanced(),
        }
    }
}

impl ProfileConfigs {
    pub fn get(&self, p: Profile) -> &RetrievalConfig {
        match p {
            Profile::DirectLlm => &self.direct_llm,
            Profile::Naive => &self.naive,
            Profile::Advanced => &self.advanced,
        }
    }

    pub fn get_mut(&mut self, p: Profile) -> &mut RetrievalConfig {
        match p {
            Profile::DirectLlm => &mut self.direct_llm,
            Profile::Naive => &mut self.naive,
            Profile::Advanced => &mut self.advanced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Chunking for the advanced layout.
    pub chunking: ChunkingConfig,
    /// Chunking for the naive layout.
    pub naive_chunking: ChunkingConfig,
    /// Name of the active entry in `embedders`.
    pub embedder: String,
    pub embedders: BTreeMap<String, EmbedderProfile>,
    pub dense: DenseConfig,
    pub sparse: Bm25Params,
    pub reranker: RerankerProfile,
    pub llm: LlmConfig,
    pub profiles: ProfileConfigs,
    /// Gazetteer JSON; the bundled list is used when unset.
    pub gazetteer: Option<PathBuf>,
    /// Expansion lexicon JSON; the bundled one is used when unset.
    pub lexicon: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let embedders = [
            EmbedderProfile::high_precision(),
            EmbedderProfile::lightweight(),
            EmbedderProfile::local_test(),
        ]
        .into_iter()
        .map(|p| (p.name.clone(), p))
        .collect();
        Self {
            chunking: ChunkingConfig::default(),
            naive_chunking: ChunkingConfig::naive_baseline(),
            embedder: "local_test".into(),
            embedders,
            dense: DenseConfig::default(),
            sparse: Bm25Params::default(),
            reranker: RerankerProfile::default(),
            llm: LlmConfig::default(),
            profiles: ProfileConfigs::default(),
            gazetteer: None,
            lexicon: None,
        }
    }
}

impl EngineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_value(serde_json::from_str(&raw)?)
    }

    /// Overlay `value` on the defaults, object by object, then validate.
    /// Nested objects may be partial.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(Self::default())?;
        merge(&mut base, value);
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn active_embedder(&self) -> Result<&EmbedderProfile> {
        self.embedders
            .get(&self.embedder)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown embedder profile {:?}", self.embedder)))
    }

    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        self.naive_chunking.validate()?;
        self.active_embedder()?.validate()?;
        self.dense.params().validate()?;
        if !(self.sparse.k1 >= 0.0 && (0.0..=1.0).contains(&self.sparse.b)) {
            return Err(Error::InvalidConfig("sparse needs k1 >= 0 and 0 <= b <= 1".into()));
        }
        self.reranker.validate()?;
        self.llm.validate()?;
        for p in Profile::ALL {
            self.profiles.get(p).validate()?;
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: EngineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: EngineConfig = serde_json::from_str(r#"{"dense": {"M": 16, "quantized": true}}"#).unwrap();
        assert_eq!(cfg.dense.m, 16);
        assert_eq!(cfg.dense.ef_search, 50);
        assert_eq!(cfg.chunking.chunk_size, 2000);
        assert_eq!(cfg.profiles.advanced.w_dense, 0.6);
    }

    #[test]
    fn nested_objects_may_be_partial() {
        let cfg = EngineConfig::from_value(serde_json::json!({
            "reranker": {"kind": "remote", "endpoint": "http://h/rerank"},
            "profiles": {"naive": {"final_k": 3}},
            "embedders": {"small": {"name": "small", "dims": 64}},
            "embedder": "small"
        }))
        .unwrap();
        assert_eq!(cfg.reranker.top_n, 20);
        assert_eq!(cfg.profiles.naive.final_k, 3);
        assert_eq!(cfg.profiles.naive.w_dense, 1.0);
        assert_eq!(cfg.profiles.advanced, RetrievalConfig::advanced());
        assert!(cfg.embedders.contains_key("local_test"));
        assert!(EngineConfig::from_value(serde_json::json!({"profiles": {"advanced": {"w_dense": 0.9}}})).is_err());
    }

    #[test]
    fn unknown_embedder_rejected() {
        let cfg = EngineConfig {
            embedder: "nope".into(),
            ..EngineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
