//! Command-line and HTTP front end for `ecp-core`.
//!
//! Workspaces are directories of canonical artifacts built by `ecp ingest`.
//! Every query goes through [`query`], and every JSON body through
//! [`render`], so the CLI and the HTTP service emit the same bytes.

pub mod cli;
pub mod error;
pub mod query;
pub mod server;
pub mod workspace;

pub use error::{Result, ServiceError};

/// Pretty JSON with a trailing newline.
pub fn render<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}
