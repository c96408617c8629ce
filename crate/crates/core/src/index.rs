//! A chunk layout together with its dense and sparse indexes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dense::{HnswIndex, HnswParams};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::ingest::Chunk;
use crate::sparse::{Bm25Index, Bm25Params};

/// Resolve chunk ids to chunks.
pub trait ChunkLookup {
    fn chunk(&self, chunk_id: &str) -> Option<&Chunk>;
}

/// Chunks in insertion order with an id lookup.
#[derive(Debug, Clone, Default)]
pub struct ChunkStore {
    chunks: Vec<Chunk>,
    by_id: HashMap<String, usize>,
}

impl ChunkStore {
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(chunks.len());
        for (i, c) in chunks.iter().enumerate() {
            if by_id.insert(c.chunk_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(c.chunk_id.clone()));
            }
        }
        Ok(Self { chunks, by_id })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter()
    }

    pub fn as_slice(&self) -> &[Chunk] {
        &self.chunks
    }
}

impl ChunkLookup for ChunkStore {
    fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }
}

impl ChunkLookup for HashMap<String, Chunk> {
    fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.get(chunk_id)
    }
}

/// Content hash over chunk ids and texts, independent of chunk order.
pub fn corpus_version(chunks: &[Chunk]) -> String {
    let mut pairs: Vec<(&str, &str)> = chunks.iter().map(|c| (c.chunk_id.as_str(), c.text.as_str())).collect();
    pairs.sort_unstable();
    let mut h = Sha256::new();
    for (id, text) in pairs {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update((text.len() as u64).to_le_bytes());
        h.update(text.as_bytes());
    }
    hex::encode(&h.finalize()[..12])
}

/// Dense and sparse indexes built from the same chunks.
#[derive(Debug, Clone)]
pub struct IndexSet {
    pub chunks: ChunkStore,
    pub dense: HnswIndex,
    pub sparse: Bm25Index,
    version: String,
}

const CHUNKS_FILE: &str = "chunks.json";
const DENSE_FILE: &str = "dense.hnsw";
const SPARSE_FILE: &str = "sparse.json";

impl IndexSet {
    pub fn build(
        chunks: Vec<Chunk>,
        embedder: &dyn Embedder,
        dense: HnswParams,
        quantized: bool,
        sparse: Bm25Params,
    ) -> Result<Self> {
        let version = corpus_version(&chunks);
        let store = ChunkStore::new(chunks)?;
        let mut hnsw = HnswIndex::new(embedder.dims(), dense, quantized)?;
        let texts: Vec<String> = store.iter().map(|c| c.text.clone()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::upstream("embedder", "vector count does not match input count"));
        }
        for (chunk, v) in store.iter().zip(&vectors) {
            hnsw.insert(&chunk.chunk_id, v)?;
        }
        hnsw.freeze();
        let bm25 = Bm25Index::build(store.as_slice(), sparse)?.with_corpus_version(version.clone());
        Ok(Self {
            chunks: store,
            dense: hnsw,
            sparse: bm25,
            version,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Both indexes must cover exactly the stored chunks of this version.
    pub fn check_consistent(&self) -> Result<()> {
        if self.sparse.corpus_version() != self.version {
            return Err(Error::IndexVersionMismatch(format!(
                "sparse index built for {}, chunks are {}",
                self.sparse.corpus_version(),
                self.version
            )));
        }
        if self.dense.len() != self.chunks.len() || self.sparse.doc_count() != self.chunks.len() {
            return Err(Error::IndexVersionMismatch(format!(
                "{} chunks but dense has {} and sparse has {}",
                self.chunks.len(),
                self.dense.len(),
                self.sparse.doc_count()
            )));
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CHUNKS_FILE), serde_json::to_vec(self.chunks.as_slice())?)?;
        self.dense.persist(dir.join(DENSE_FILE))?;
        self.sparse.save(dir.join(SPARSE_FILE))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let raw = fs::read(dir.join(CHUNKS_FILE)).map_err(|source| Error::Unreadable {
            path: dir.join(CHUNKS_FILE),
            source,
        })?;
        let chunks: Vec<Chunk> = serde_json::from_slice(&raw)?;
        let version = corpus_version(&chunks);
        let set = Self {
            chunks: ChunkStore::new(chunks)?,
            dense: HnswIndex::restore(dir.join(DENSE_FILE))?,
            sparse: Bm25Index::load(dir.join(SPARSE_FILE))?,
            version,
        };
        set.check_consistent()?;
        for id in set.dense.ids() {
            if set.chunks.chunk(id).is_none() {
                return Err(Error::IndexVersionMismatch(format!(
                    "dense index holds unknown chunk {id}"
                )));
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::LocalEmbedder;
    use crate::ingest::{chunk_document, ChunkingConfig, Document, Gazetteer, TableStrategy};

    fn sample() -> Vec<Chunk> {
        let doc = Document::from_text(
            "a.txt",
            "Leave policy. Employees get twenty days of leave.\n\nTravel is booked centrally.",
        )
        .unwrap();
        let cfg = ChunkingConfig::new(40, 10).unwrap();
        chunk_document(&doc, &cfg, TableStrategy::RowLevel, &Gazetteer::default()).unwrap()
    }

    #[test]
    fn version_ignores_order_but_not_content() {
        let mut chunks = sample();
        let v = corpus_version(&chunks);
        chunks.reverse();
        assert_eq!(corpus_version(&chunks), v);
        chunks[0].text.push('!');
        assert_ne!(corpus_version(&chunks), v);
    }

    #[test]
    fn save_load_round_trip() {
        let emb = LocalEmbedder::new(64).unwrap();
        let set = IndexSet::build(sample(), &emb, HnswParams::default(), false, Bm25Params::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        set.save(dir.path()).unwrap();
        let back = IndexSet::load(dir.path()).unwrap();
        assert_eq!(back.version(), set.version());
        assert_eq!(back.chunks.len(), set.chunks.len());
    }

    #[test]
    fn stale_sparse_index_is_rejected() {
        let emb = LocalEmbedder::new(64).unwrap();
        let set = IndexSet::build(sample(), &emb, HnswParams::default(), false, Bm25Params::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        set.save(dir.path()).unwrap();
        let other = Bm25Index::build(set.chunks.as_slice(), Bm25Params::default())
            .unwrap()
            .with_corpus_version("stale");
        other.save(dir.path().join(SPARSE_FILE)).unwrap();
        assert!(matches!(
            IndexSet::load(dir.path()),
            Err(Error::IndexVersionMismatch(_))
        ));
    }

    #[test]
    fn duplicate_chunk_ids_rejected() {
        let mut chunks = sample();
        chunks.push(chunks[0].clone());
        assert!(matches!(ChunkStore::new(chunks), Err(Error::DuplicateId(_))));
    }
}
