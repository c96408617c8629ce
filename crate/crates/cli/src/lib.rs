//! HTTP service and command-line plumbing for the engine.

pub mod api;
pub mod openapi;

pub use api::{router, serve, ApiError, AppState, ErrorCode, SharedState};
