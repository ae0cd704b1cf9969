//! HTTP session service for human-AI deliberation.
//!
//! Sessions are event-sourced: every accepted action is appended to a JSONL
//! log and the in-memory state can always be rebuilt from that log.

pub mod api;
pub mod config;
pub mod error;
pub mod state;

pub use api::router;
pub use config::{AdapterConfig, ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use state::AppState;
