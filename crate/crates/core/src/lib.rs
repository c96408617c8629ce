//! Hybrid retrieval-augmented question answering over enterprise documents.
//!
//! Documents are chunked (text by a recursive splitter, tables row by row),
//! indexed twice (HNSW over embeddings and BM25 over terms), and retrieved
//! by a weighted fusion of both normalised scores. Candidates are reranked,
//! packed into a grounded prompt and answered by a language model client
//! that also runs fully offline in mock mode.

pub mod config;
pub mod dense;
pub mod embed;
pub mod engine;
pub mod error;
pub mod eval;
mod http;
pub mod index;
pub mod ingest;
pub mod llm;
pub mod orchestrate;
pub mod rerank;
pub mod retrieve;
pub mod session;
pub mod sparse;

pub use config::EngineConfig;
pub use engine::Engine;
pub use error::{Error, Result, Stage};
pub use ingest::{Chunk, ChunkKind, Document};
pub use orchestrate::{answer_query, handle_feedback, FeedbackOutcome, GroundedAnswer};
pub use retrieve::{Profile, RetrievalConfig, ScoredCandidate};
pub use session::{SessionStore, Verdict};
