use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{sanitize_id, Chunk, ChunkKind, Document, DocumentKind};
use crate::error::{Error, Result};

fn default_separators() -> Vec<String> {
    ["\n\n", "\n", ". ", " "].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    /// Maximum chunk length in characters.
    pub chunk_size: usize,
    /// Characters shared by consecutive chunks.
    pub overlap: usize,
    #[serde(default = "default_separators")]
    pub separators: Vec<String>,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: 2000,
            overlap: 500,
            separators: default_separators(),
        }
    }
}

impl ChunkingConfig {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self> {
        let cfg = Self {
            chunk_size,
            overlap,
            separators: default_separators(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The 700/100 preset used by the naive baseline.
    pub fn naive_baseline() -> Self {
        Self {
            chunk_size: 700,
            overlap: 100,
            separators: default_separators(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(Error::InvalidConfig(format!(
                "chunking requires 0 <= overlap < chunk_size, got overlap={} chunk_size={}",
                self.overlap, self.chunk_size
            )));
        }
        if self.separators.is_empty() || self.separators.iter().any(String::is_empty) {
            return Err(Error::InvalidConfig("separators must be non-empty strings".into()));
        }
        Ok(())
    }
}

/// Split a text document into overlapping chunks.
pub fn split_text(doc: &Document, cfg: &ChunkingConfig) -> Result<Vec<Chunk>> {
    if doc.kind != DocumentKind::Text {
        return Err(Error::WrongKind {
            doc_id: doc.doc_id.clone(),
            expected: "text",
        });
    }
    cfg.validate()?;
    let base = sanitize_id(&doc.doc_id);
    Ok(split_spans(&doc.raw_content, cfg)
        .into_iter()
        .enumerate()
        .map(|(i, span)| {
            let mut metadata = doc.metadata.clone();
            metadata.insert("chunk_index".into(), i.to_string());
            Chunk {
                chunk_id: format!("{base}#c{i}"),
                doc_id: doc.doc_id.clone(),
                kind: ChunkKind::TextChunk,
                text: doc.raw_content[span.clone()].to_string(),
                char_span: Some((span.start, span.end)),
                metadata,
                entities: Vec::new(),
            }
        })
        .collect())
}

/// Byte ranges of the chunks `split_text` would produce, in source order.
pub(crate) fn split_spans(text: &str, cfg: &ChunkingConfig) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    if text.is_empty() {
        return out;
    }
    let splitter = Splitter { text, cfg };
    if splitter.chars(0..text.len()) <= cfg.chunk_size {
        out.push(0..text.len());
    } else {
        splitter.split(0..text.len(), &cfg.separators, &mut out);
    }
    out
}

struct Splitter<'a> {
    text: &'a str,
    cfg: &'a ChunkingConfig,
}

impl Splitter<'_> {
    fn chars(&self, range: Range<usize>) -> usize {
        self.text[range].chars().count()
    }

    fn split(&self, range: Range<usize>, separators: &[String], out: &mut Vec<Range<usize>>) {
        let slice = &self.text[range.clone()];
        let Some(idx) = separators.iter().position(|sep| slice.contains(sep.as_str())) else {
            self.windows(range, out);
            return;
        };
        let sep = separators[idx].as_str();
        let remaining = &separators[idx + 1..];

        // Pieces keep their trailing separator so spans stay contiguous.
        let mut pieces = Vec::new();
        let mut start = range.start;
        for (pos, _) in slice.match_indices(sep) {
            let end = range.start + pos + sep.len();
            pieces.push(start..end);
            start = end;
        }
        if start < range.end {
            pieces.push(start..range.end);
        }

        let mut fitting = Vec::new();
        for piece in pieces {
            if self.chars(piece.clone()) <= self.cfg.chunk_size {
                fitting.push(piece);
            } else {
                self.merge(std::mem::take(&mut fitting), out);
                self.split(piece, remaining, out);
            }
        }
        self.merge(fitting, out);
    }

    /// Greedily pack contiguous pieces into chunks, carrying up to `overlap`
    /// characters of trailing pieces into the next chunk.
    fn merge(&self, pieces: Vec<Range<usize>>, out: &mut Vec<Range<usize>>) {
        let size = self.cfg.chunk_size;
        let mut current: VecDeque<(Range<usize>, usize)> = VecDeque::new();
        let mut total = 0usize;
        for piece in pieces {
            let len = self.chars(piece.clone());
            if total + len > size && !current.is_empty() {
                out.push(current[0].0.start..current[current.len() - 1].0.end);
                while total > self.cfg.overlap || (total + len > size && total > 0) {
                    let (_, l) = current.pop_front().expect("total > 0 implies pieces");
                    total -= l;
                }
            }
            current.push_back((piece, len));
            total += len;
        }
        if let (Some(first), Some(last)) = (current.front(), current.back()) {
            out.push(first.0.start..last.0.end);
        }
    }

    /// Fixed character windows for text with no separator left to split on.
    fn windows(&self, range: Range<usize>, out: &mut Vec<Range<usize>>) {
        let mut bounds: Vec<usize> = self.text[range.clone()]
            .char_indices()
            .map(|(i, _)| range.start + i)
            .collect();
        bounds.push(range.end);
        let n = bounds.len() - 1;
        let stride = self.cfg.chunk_size - self.cfg.overlap;
        let mut start = 0;
        loop {
            let end = (start + self.cfg.chunk_size).min(n);
            out.push(bounds[start]..bounds[end]);
            if end == n {
                break;
            }
            start += stride;
        }
    }
}
