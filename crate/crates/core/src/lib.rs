//! Web-corpus curation: WARC ingestion, text extraction, heuristic quality
//! filtering, deduplication, fastText-style classification, benchmark-targeted
//! selection and small-scale scaling-law fitting.

pub mod accounting;
pub mod bench;
pub mod betr;
pub mod classifier;
pub mod dedup;
pub mod document;
pub mod error;
pub mod extract;
pub mod filters;
pub mod hash;
pub mod kv;
pub mod pipeline;
pub mod scaling;
pub mod synth;
pub mod warc;

pub use document::{Document, Source};
pub use error::{Error, Result};
