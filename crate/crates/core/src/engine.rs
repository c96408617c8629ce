//! The assembled engine: both chunk layouts with their indexes plus the
//! embedder, reranker, language model and lexicons, built once and
//! persisted to an index directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::embed::{embedder_for, Embedder};
use crate::error::{Error, Result};
use crate::index::IndexSet;
use crate::ingest::{chunk_document, load_corpus, Chunk, Document, Gazetteer, TableStrategy, BUNDLED_GAZETTEER};
use crate::llm::LlmClient;
use crate::orchestrate::{Lexicon, BUNDLED_LEXICON};
use crate::rerank::Reranker;
use crate::retrieve::{retrieve, Profile, RetrievalConfig, ScoredCandidate};

pub const ENGINE_FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const CONFIG_FILE: &str = "config.json";
const GAZETTEER_FILE: &str = "gazetteer.json";
const LEXICON_FILE: &str = "lexicon.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Content hash of the advanced layout.
    pub index_version: String,
    pub naive_version: String,
    pub embedder: String,
    pub dims: usize,
    pub documents: usize,
    pub advanced_chunks: usize,
    pub naive_chunks: usize,
}

pub struct Engine {
    pub config: EngineConfig,
    pub advanced: IndexSet,
    pub naive: IndexSet,
    pub embedder: Box<dyn Embedder>,
    pub reranker: Reranker,
    pub llm: LlmClient,
    pub gazetteer: Gazetteer,
    pub lexicon: Lexicon,
    gazetteer_json: String,
    documents: usize,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("version", &self.advanced.version())
            .field("advanced_chunks", &self.advanced.chunks.len())
            .field("naive_chunks", &self.naive.chunks.len())
            .finish()
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })
}

impl Engine {
    /// Chunk, embed and index `docs` under both layouts.
    pub fn build(docs: &[Document], config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let gazetteer_json = match &config.gazetteer {
            Some(p) => read_text(p)?,
            None => BUNDLED_GAZETTEER.to_string(),
        };
        let lexicon_json = match &config.lexicon {
            Some(p) => read_text(p)?,
            None => BUNDLED_LEXICON.to_string(),
        };
        let gazetteer = Gazetteer::from_json(&gazetteer_json)?;
        let lexicon = Lexicon::from_json(&lexicon_json)?;
        let embedder = embedder_for(config.active_embedder()?)?;

        let mut advanced_chunks: Vec<Chunk> = Vec::new();
        let mut naive_chunks: Vec<Chunk> = Vec::new();
        for doc in docs {
            advanced_chunks.extend(chunk_document(
                doc,
                &config.chunking,
                TableStrategy::RowLevel,
                &gazetteer,
            )?);
            naive_chunks.extend(chunk_document(
                doc,
                &config.naive_chunking,
                TableStrategy::Flatten,
                &gazetteer,
            )?);
        }
        log::info!(
            "indexing {} documents: {} advanced chunks, {} naive chunks",
            docs.len(),
            advanced_chunks.len(),
            naive_chunks.len()
        );
        let params = config.dense.params();
        let advanced = IndexSet::build(
            advanced_chunks,
            embedder.as_ref(),
            params,
            config.dense.quantized,
            config.sparse,
        )?;
        let naive = IndexSet::build(
            naive_chunks,
            embedder.as_ref(),
            params,
            config.dense.quantized,
            config.sparse,
        )?;
        Ok(Self {
            reranker: Reranker::new(config.reranker.clone())?,
            llm: LlmClient::new(config.llm.clone())?,
            config,
            advanced,
            naive,
            embedder,
            gazetteer,
            lexicon,
            gazetteer_json,
            documents: docs.len(),
        })
    }

    pub fn build_from_dir(corpus: impl AsRef<Path>, config: EngineConfig) -> Result<Self> {
        let docs = load_corpus(corpus)?;
        Self::build(&docs, config)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: ENGINE_FORMAT_VERSION,
            index_version: self.advanced.version().to_string(),
            naive_version: self.naive.version().to_string(),
            embedder: self.config.embedder.clone(),
            dims: self.embedder.dims(),
            documents: self.documents,
            advanced_chunks: self.advanced.chunks.len(),
            naive_chunks: self.naive.chunks.len(),
        }
    }

    pub fn version(&self) -> &str {
        self.advanced.version()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.advanced.save(dir.join("advanced"))?;
        self.naive.save(dir.join("naive"))?;
        fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(&self.config)?)?;
        fs::write(dir.join(GAZETTEER_FILE), &self.gazetteer_json)?;
        fs::write(dir.join(LEXICON_FILE), self.lexicon.to_json()?)?;
        // Written last so a partial save is never mistaken for an index.
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&self.manifest())?)?;
        Ok(())
    }

    pub fn exists(dir: impl AsRef<Path>) -> bool {
        dir.as_ref().join(MANIFEST_FILE).is_file()
    }

    /// Load a saved engine. `overrides` replaces the stored configuration;
    /// its active embedder must match the one the index was built with.
    pub fn load(dir: impl AsRef<Path>, overrides: Option<EngineConfig>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&read_text(&dir.join(MANIFEST_FILE))?)?;
        if manifest.format_version > ENGINE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: manifest.format_version,
                supported: ENGINE_FORMAT_VERSION,
            });
        }
        let config = match overrides {
            Some(c) => c,
            None => serde_json::from_str(&read_text(&dir.join(CONFIG_FILE))?)?,
        };
        config.validate()?;
        let profile = config.active_embedder()?;
        if profile.name != manifest.embedder || profile.dims != manifest.dims {
            return Err(Error::IndexVersionMismatch(format!(
                "index built with embedder {} ({} dims), configuration selects {} ({} dims)",
                manifest.embedder, manifest.dims, profile.name, profile.dims
            )));
        }
        let advanced = IndexSet::load(dir.join("advanced"))?;
        let naive = IndexSet::load(dir.join("naive"))?;
        if advanced.version() != manifest.index_version || naive.version() != manifest.naive_version {
            return Err(Error::IndexVersionMismatch(
                "stored chunks do not match the manifest".into(),
            ));
        }
        let gazetteer_json = read_text(&dir.join(GAZETTEER_FILE))?;
        let lexicon = Lexicon::from_json(&read_text(&dir.join(LEXICON_FILE))?)?;
        Ok(Self {
            embedder: embedder_for(profile)?,
            reranker: Reranker::new(config.reranker.clone())?,
            llm: LlmClient::new(config.llm.clone())?,
            gazetteer: Gazetteer::from_json(&gazetteer_json)?,
            config,
            advanced,
            naive,
            lexicon,
            gazetteer_json,
            documents: manifest.documents,
        })
    }

    /// The layout a profile retrieves from.
    pub fn indices(&self, profile: Profile) -> &IndexSet {
        match profile {
            Profile::Naive => &self.naive,
            Profile::Advanced | Profile::DirectLlm => &self.advanced,
        }
    }

    pub fn retrieval_config(&self, profile: Profile) -> &RetrievalConfig {
        self.config.profiles.get(profile)
    }

    /// Fused candidate pool for `query` under `profile`.
    pub fn retrieve(&self, query: &str, profile: Profile) -> Result<Vec<ScoredCandidate>> {
        self.retrieve_with(query, profile, self.retrieval_config(profile))
    }

    pub fn retrieve_with(&self, query: &str, profile: Profile, cfg: &RetrievalConfig) -> Result<Vec<ScoredCandidate>> {
        retrieve(
            query,
            cfg,
            profile,
            self.indices(profile),
            self.embedder.as_ref(),
            &self.gazetteer,
        )
    }

    /// Retrieval followed by reranking where the profile uses it. A rerank
    /// failure falls back to fused order.
    pub fn ranked(&self, query: &str, profile: Profile) -> Result<Vec<ScoredCandidate>> {
        let pool = self.retrieve(query, profile)?;
        if profile != Profile::Advanced {
            return Ok(pool);
        }
        match self.reranker.rerank_candidates(query, pool, &self.advanced.chunks) {
            Ok(r) => Ok(r),
            Err(f) => {
                log::warn!("rerank failed, keeping fused order: {}", f.error);
                Ok(f.fallback)
            }
        }
    }
}
