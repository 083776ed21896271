//! Pure algorithms for evaluating LLM-generated essay feedback.
//!
//! Everything here is `no_std` + `alloc`: segmentation and specificity
//! alignment, softmax-based candidate selection, dataset builders, reference
//! training losses, agreement statistics, prompt rendering and answer parsing.
//! IO, network backends and the CLI live in the `feedeval` crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod answer;
pub mod datasets;
pub mod error;
pub mod folds;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod scoring;
pub mod selection;
pub mod specificity;
pub mod text;

pub use error::{Error, Result};
