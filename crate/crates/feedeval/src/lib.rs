//! IO, backends, the pipeline runner and the annotation service built on
//! `feedeval-core`.

pub mod annotation;
pub mod backend;
pub mod config;
pub mod error;
pub mod generation;
pub mod ingest;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod rubrics;
pub mod stages;
pub mod synthetic;

pub use error::{Error, Result};
