//! Mining of recurring contiguous step subsequences ("slices") in Gherkin
//! corpora.
//!
//! The crate covers corpus ingestion, step clustering, slice extraction and
//! n-gram aggregation, paraphrase clustering of recurring patterns, the
//! labelling kit, the post-classifier verification filters and the
//! prevalence rollups. Model training lives in `slicemine-classify`.

pub mod cluster;
pub mod embed;
pub mod error;
pub mod hash;
pub mod hdbscan;
pub mod ingest;
pub mod io;
pub mod labels;
pub mod mine;
pub mod paraphrase;
pub mod rollup;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
