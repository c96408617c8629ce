//! Document loading, chunking, table row extraction and entity enrichment.
//!
//! Text documents are cut into overlapping spans by a recursive character
//! splitter. Tables become one chunk per row (`h1: v1 | h2: v2`), or, for the
//! naive baseline, are flattened to text and split like prose.

mod document;
mod entities;
mod splitter;
mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use document::{load_corpus, load_document, Document, DocumentKind, RawTable};
pub use entities::{find_entities, tag_entities, Entity, EntityLabel, Gazetteer, BUNDLED_GAZETTEER};
pub use splitter::{split_text, ChunkingConfig};
pub(crate) use table::contained_row_ids;
pub use table::{extract_table_rows, flatten_table, row_to_chunk, TableRecord};

use crate::error::Result;

/// Metadata value used when a document carries no sidecar value for a key.
pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    TextChunk,
    TableRow,
    FullTable,
}

/// The unit of indexing and retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub kind: ChunkKind,
    pub text: String,
    /// Byte offsets into the source text; only set for text chunks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<(usize, usize)>,
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

impl Chunk {
    pub fn file_name(&self) -> &str {
        self.metadata
            .get("file_name")
            .map(String::as_str)
            .unwrap_or(UNSPECIFIED)
    }
}

/// How tables are turned into chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableStrategy {
    /// One chunk per data row.
    RowLevel,
    /// Whole table rendered as text and split like prose.
    Flatten,
}

/// Characters that would break `[chunk_id]` citation markers are replaced.
pub(crate) fn sanitize_id(raw: &str) -> String {
    raw.chars()
        .map(|c| match c {
            '[' | ']' => '_',
            c if c.is_whitespace() => '_',
            c => c,
        })
        .collect()
}

/// Turn one document into tagged chunks.
pub fn chunk_document(
    doc: &Document,
    cfg: &ChunkingConfig,
    tables: TableStrategy,
    gazetteer: &Gazetteer,
) -> Result<Vec<Chunk>> {
    let chunks = match (doc.kind, tables) {
        (DocumentKind::Text, _) => split_text(doc, cfg)?,
        (DocumentKind::Table, TableStrategy::Flatten) => flatten_table(doc, cfg)?,
        (DocumentKind::Table, TableStrategy::RowLevel) => extract_table_rows(doc)?
            .iter()
            .map(|rec| {
                let mut chunk = row_to_chunk(rec);
                chunk.chunk_id = format!(
                    "{}#{}/r{}",
                    sanitize_id(&doc.doc_id),
                    sanitize_id(&rec.table_id),
                    rec.row_index
                );
                chunk.doc_id = doc.doc_id.clone();
                // Row fields win over document-level metadata.
                for (k, v) in &doc.metadata {
                    chunk.metadata.entry(k.clone()).or_insert_with(|| v.clone());
                }
                chunk
            })
            .collect(),
    };
    Ok(chunks.into_iter().map(|c| tag_entities(c, gazetteer)).collect())
}
