use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::splitter::split_spans;
use super::{sanitize_id, Chunk, ChunkKind, ChunkingConfig, Document, DocumentKind};
use crate::error::{Error, Result};

/// One table row with its header association intact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRecord {
    pub file_name: String,
    pub table_id: String,
    pub row_index: usize,
    pub headers: Vec<String>,
    pub cells: Vec<String>,
}

impl TableRecord {
    /// Canonical embeddable surface form: `h1: v1 | h2: v2 | ...`.
    pub fn serialize(&self) -> String {
        self.headers
            .iter()
            .zip(&self.cells)
            .map(|(h, v)| format!("{h}: {v}"))
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

fn require_table(doc: &Document) -> Result<()> {
    if doc.kind == DocumentKind::Table {
        Ok(())
    } else {
        Err(Error::WrongKind {
            doc_id: doc.doc_id.clone(),
            expected: "table",
        })
    }
}

fn table_file_name(doc: &Document) -> String {
    doc.table_source
        .clone()
        .unwrap_or_else(|| doc.metadata.get("file_name").cloned().unwrap_or_default())
}

/// One record per data row of every table in the document.
///
/// Ragged rows are reported with the 1-based line they occupy, counting the
/// header as line 1.
pub fn extract_table_rows(doc: &Document) -> Result<Vec<TableRecord>> {
    require_table(doc)?;
    let file_name = table_file_name(doc);
    let mut records = Vec::new();
    for table in &doc.tables {
        let headers: Vec<String> = table.headers.iter().map(|h| h.trim().to_string()).collect();
        for (row_index, row) in table.rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(Error::RaggedRow {
                    table_id: table.table_id.clone(),
                    row_index,
                    line: row_index + 2,
                    expected: headers.len(),
                    found: row.len(),
                });
            }
            records.push(TableRecord {
                file_name: file_name.clone(),
                table_id: table.table_id.clone(),
                row_index,
                headers: headers.clone(),
                cells: row.iter().map(|c| c.trim().to_string()).collect(),
            });
        }
    }
    Ok(records)
}

/// Row-level chunk. The id is provisional (`<table_id>/r<row>`) until the
/// caller prefixes the document id.
pub fn row_to_chunk(rec: &TableRecord) -> Chunk {
    let mut metadata = BTreeMap::new();
    for (h, v) in rec.headers.iter().zip(&rec.cells) {
        metadata.insert(h.clone(), v.clone());
    }
    metadata.insert("file_name".into(), rec.file_name.clone());
    metadata.insert("table_id".into(), rec.table_id.clone());
    metadata.insert("row_index".into(), rec.row_index.to_string());
    Chunk {
        chunk_id: format!("{}/r{}", sanitize_id(&rec.table_id), rec.row_index),
        doc_id: rec.file_name.clone(),
        kind: ChunkKind::TableRow,
        text: rec.serialize(),
        char_span: None,
        metadata,
        entities: Vec::new(),
    }
}

/// Naive-baseline path: render each table as comma-joined lines (header
/// first) and split it like prose. Chunks record which data rows they
/// contain whole in `table_rows` (`first-last`, inclusive).
pub fn flatten_table(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    let records = extract_table_rows(doc)?;
    cfg.validate()?;
    let base = sanitize_id(&doc.doc_id);
    let mut chunks = Vec::new();
    for table in &doc.tables {
        let rows: Vec<&TableRecord> = records.iter().filter(|r| r.table_id == table.table_id).collect();
        if rows.is_empty() {
            continue;
        }
        let mut rendered = rows[0].headers.join(",");
        // byte range of each data row's line
        let mut lines = Vec::with_capacity(rows.len());
        for rec in &rows {
            rendered.push('\n');
            let start = rendered.len();
            rendered.push_str(&rec.cells.join(","));
            lines.push(start..rendered.len());
        }
        for (pos, span) in split_spans(&rendered, cfg).into_iter().enumerate() {
            let contained: Vec<usize> = lines
                .iter()
                .enumerate()
                .filter(|(_, l)| l.start >= span.start && l.end <= span.end)
                .map(|(i, _)| rows[i].row_index)
                .collect();
            let mut metadata = doc.metadata.clone();
            metadata.insert("table_id".into(), table.table_id.clone());
            if let (Some(first), Some(last)) = (contained.first(), contained.last()) {
                metadata.insert("table_rows".into(), format!("{first}-{last}"));
            }
            chunks.push(Chunk {
                chunk_id: format!("{base}#{}/f{pos}", sanitize_id(&table.table_id)),
                doc_id: doc.doc_id.clone(),
                kind: ChunkKind::FullTable,
                text: rendered[span].to_string(),
                char_span: None,
                metadata,
                entities: Vec::new(),
            });
        }
    }
    Ok(chunks)
}

/// Row chunk ids a full-table chunk contains whole, from its `table_rows` metadata.
pub(crate) fn contained_row_ids(chunk: &Chunk) -> Vec<String> {
    let (Some(range), Some(table)) = (chunk.metadata.get("table_rows"), chunk.metadata.get("table_id")) else {
        return Vec::new();
    };
    let Some((a, b)) = range.split_once('-') else {
        return Vec::new();
    };
    let (Ok(a), Ok(b)) = (a.parse::<usize>(), b.parse::<usize>()) else {
        return Vec::new();
    };
    let base = sanitize_id(&chunk.doc_id);
    let table = sanitize_id(table);
    (a..=b).map(|r| format!("{base}#{table}/r{r}")).collect()
}
