use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{ScoreRange, TraitId};

/// Domain-level failures raised by the pure algorithms in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("prompt id {0} is outside 1..=6")]
    InvalidPrompt(i64),
    #[error("trait {trait_id} is not scored for prompt {prompt}")]
    TraitNotInPrompt { prompt: u8, trait_id: TraitId },
    #[error("score {score} for {trait_id} is outside [{}, {}]", range.lo, range.hi)]
    ScoreOutOfRange {
        trait_id: TraitId,
        score: i64,
        range: ScoreRange,
    },
    #[error("unknown trait name {0:?}")]
    UnknownTrait(String),
    #[error("text is empty")]
    EmptyText,
    #[error("invalid rubric: {0}")]
    Rubric(String),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("statistic undefined: {0}")]
    Undefined(&'static str),
    #[error("missing traits: {0:?}")]
    MissingTraits(Vec<TraitId>),
    #[error("cannot render prompt: {0}")]
    Render(String),
    #[error("cannot parse model answer: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
