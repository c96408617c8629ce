use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::UNSPECIFIED;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Text,
    Table,
}

/// A parsed but unvalidated table: rows may still be ragged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub table_id: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct TableFile {
    #[serde(default)]
    file_name: Option<String>,
    tables: Vec<RawTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub source_path: PathBuf,
    pub kind: DocumentKind,
    /// File content, byte-exact.
    pub raw_content: String,
    /// Parsed tables; empty for text documents.
    pub tables: Vec<RawTable>,
    /// Original file the tables were extracted from, as named by the table JSON.
    pub table_source: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

const METADATA_KEYS: [&str; 3] = ["document_type", "department", "confidentiality_level"];

fn base_metadata(file_name: &str) -> BTreeMap<String, String> {
    let mut meta: BTreeMap<String, String> = METADATA_KEYS
        .iter()
        .map(|k| (k.to_string(), UNSPECIFIED.to_string()))
        .collect();
    meta.insert("file_name".into(), file_name.to_string());
    meta
}

fn basename(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

impl Document {
    pub fn from_text(doc_id: &str, content: &str) -> Result<Self> {
        let path = PathBuf::from(doc_id);
        if content.is_empty() {
            return Err(Error::EmptyFile(path));
        }
        Ok(Self {
            doc_id: doc_id.to_string(),
            metadata: base_metadata(&basename(&path)),
            source_path: path,
            kind: DocumentKind::Text,
            raw_content: content.to_string(),
            tables: Vec::new(),
            table_source: None,
        })
    }

    pub fn from_table_csv(doc_id: &str, content: &str) -> Result<Self> {
        let path = PathBuf::from(doc_id);
        if content.trim().is_empty() {
            return Err(Error::EmptyFile(path));
        }
        let table_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".into());
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(content.as_bytes());
        let mut records = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::MalformedTable {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
        }
        let mut iter = records.into_iter();
        let headers = iter.next().ok_or_else(|| Error::EmptyFile(path.clone()))?;
        let table = RawTable {
            table_id,
            headers,
            rows: iter.collect(),
        };
        Ok(Self {
            doc_id: doc_id.to_string(),
            metadata: base_metadata(&basename(&path)),
            source_path: path,
            kind: DocumentKind::Table,
            raw_content: content.to_string(),
            tables: vec![table],
            table_source: None,
        })
    }

    pub fn from_table_json(doc_id: &str, content: &str) -> Result<Self> {
        let path = PathBuf::from(doc_id);
        if content.trim().is_empty() {
            return Err(Error::EmptyFile(path));
        }
        let parsed: TableFile = serde_json::from_str(content).map_err(|e| Error::MalformedTable {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            doc_id: doc_id.to_string(),
            metadata: base_metadata(&basename(&path)),
            source_path: path,
            kind: DocumentKind::Table,
            raw_content: content.to_string(),
            tables: parsed.tables,
            table_source: parsed.file_name,
        })
    }

    /// Build a document from an in-memory payload, picking the parser from the name's extension.
    pub fn from_named(doc_id: &str, content: &str) -> Result<Self> {
        match kind_for_path(Path::new(doc_id)) {
            Some(DocumentKind::Text) => Self::from_text(doc_id, content),
            Some(DocumentKind::Table) => Self::parse_table(doc_id, content),
            None => Err(Error::UnsupportedDocument {
                path: doc_id.into(),
                reason: "expected .txt, .md, .csv or .json".into(),
            }),
        }
    }

    fn parse_table(doc_id: &str, content: &str) -> Result<Self> {
        if has_extension(Path::new(doc_id), "csv") {
            Self::from_table_csv(doc_id, content)
        } else {
            Self::from_table_json(doc_id, content)
        }
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .map(|e| e.to_string_lossy().eq_ignore_ascii_case(ext))
        .unwrap_or(false)
}

fn is_sidecar(path: &Path) -> bool {
    path.to_string_lossy().ends_with(".meta.json")
}

pub(crate) fn kind_for_path(path: &Path) -> Option<DocumentKind> {
    if is_sidecar(path) {
        None
    } else if has_extension(path, "txt") || has_extension(path, "md") {
        Some(DocumentKind::Text)
    } else if has_extension(path, "csv") || has_extension(path, "json") {
        Some(DocumentKind::Table)
    } else {
        None
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Load one file. `file_name` metadata is the path's basename; sidecar
/// `<path>.meta.json` values override the defaults.
pub fn load_document(path: impl AsRef<Path>, kind: DocumentKind) -> Result<Document> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let content = String::from_utf8(bytes).map_err(|e| Error::UnsupportedDocument {
        path: path.to_path_buf(),
        reason: format!("not valid UTF-8: {e}"),
    })?;
    let id = path.to_string_lossy().into_owned();
    let mut doc = match kind {
        DocumentKind::Text => {
            if !(has_extension(path, "txt") || has_extension(path, "md")) {
                return Err(Error::UnsupportedDocument {
                    path: path.to_path_buf(),
                    reason: "text documents must be .txt or .md".into(),
                });
            }
            Document::from_text(&id, &content)?
        }
        DocumentKind::Table => {
            if !(has_extension(path, "csv") || has_extension(path, "json")) {
                return Err(Error::UnsupportedDocument {
                    path: path.to_path_buf(),
                    reason: "tables must be .csv or table JSON".into(),
                });
            }
            Document::parse_table(&id, &content)?
        }
    };
    let sidecar = sidecar_path(path);
    if sidecar.is_file() {
        let raw = fs::read_to_string(&sidecar).map_err(|source| Error::Unreadable {
            path: sidecar.clone(),
            source,
        })?;
        let extra: BTreeMap<String, String> = serde_json::from_str(&raw)?;
        doc.metadata.extend(extra);
        doc.metadata.insert("file_name".into(), basename(path));
    }
    Ok(doc)
}

/// Load every supported file under `dir`, recursively, in sorted path order.
/// Document ids are paths relative to `dir` with `/` separators.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for file in files {
        let Some(kind) = kind_for_path(&file) else { continue };
        let mut doc = load_document(&file, kind)?;
        let rel = file.strip_prefix(dir).unwrap_or(&file);
        doc.doc_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        docs.push(doc);
    }
    Ok(docs)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Unreadable {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_document_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("policies");
        fs::create_dir(&sub).unwrap();
        let path = sub.join("leave.md");
        fs::write(&path, "# Leave\r\nTwenty days.\n").unwrap();
        let doc = load_document(&path, DocumentKind::Text).unwrap();
        assert_eq!(doc.kind, DocumentKind::Text);
        assert_eq!(doc.metadata["file_name"], "leave.md");
        assert_eq!(doc.metadata["department"], UNSPECIFIED);
        assert_eq!(doc.raw_content, "# Leave\r\nTwenty days.\n");
    }

    #[test]
    fn table_document_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("salaries.csv");
        fs::write(&path, "name,dept\nAna,HR\n").unwrap();
        let doc = load_document(&path, DocumentKind::Table).unwrap();
        assert_eq!(doc.kind, DocumentKind::Table);
        assert_eq!(doc.tables[0].headers, vec!["name", "dept"]);
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = load_document("missing.txt", DocumentKind::Text).unwrap_err();
        assert!(matches!(err, Error::Unreadable { .. }));
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "").unwrap();
        assert!(matches!(
            load_document(&path, DocumentKind::Text),
            Err(Error::EmptyFile(_))
        ));
    }

    #[test]
    fn malformed_json_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        fs::write(&path, "{\"tables\": [").unwrap();
        assert!(matches!(
            load_document(&path, DocumentKind::Table),
            Err(Error::MalformedTable { .. })
        ));
    }

    #[test]
    fn sidecar_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("leave.txt");
        fs::write(&path, "Leave policy").unwrap();
        fs::write(
            dir.path().join("leave.txt.meta.json"),
            r#"{"department": "HR", "confidentiality_level": "internal", "file_name": "spoofed"}"#,
        )
        .unwrap();
        let doc = load_document(&path, DocumentKind::Text).unwrap();
        assert_eq!(doc.metadata["department"], "HR");
        assert_eq!(doc.metadata["confidentiality_level"], "internal");
        assert_eq!(doc.metadata["file_name"], "leave.txt");
        assert_eq!(doc.metadata["document_type"], UNSPECIFIED);
    }

    #[test]
    fn corpus_ids_are_relative_and_skip_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("hr")).unwrap();
        fs::write(dir.path().join("hr/a.md"), "alpha").unwrap();
        fs::write(dir.path().join("hr/a.md.meta.json"), "{}").unwrap();
        fs::write(dir.path().join("b.csv"), "x\n1\n").unwrap();
        fs::write(dir.path().join("notes.pdf"), "ignored").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        let ids: Vec<_> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["b.csv", "hr/a.md"]);
    }
}
