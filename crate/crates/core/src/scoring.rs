//! Score requests, raw scores, and the offline scorers (heuristic and mock).
//!
//! The heuristic scorers are stand-ins for trained evaluators so the rest of
//! the pipeline can run offline. They are not meant to reproduce the trained
//! models' judgments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::normalize;
use crate::specificity::{align_fuzzy, AlignmentParams};
use crate::text;

/// A feedback quality dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Specificity,
    Helpfulness,
    Validity,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Specificity, Dimension::Helpfulness, Dimension::Validity];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Specificity => "specificity",
            Dimension::Helpfulness => "helpfulness",
            Dimension::Validity => "validity",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BackendKind {
    Endpoint,
    Mock,
    Heuristic,
}

/// The full level table of a rubric and the level the essay received.
/// Only the heuristic validity scorer needs it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricLevels {
    pub levels: BTreeMap<i64, String>,
    pub evaluated: i64,
}

/// Input to one dimension scorer.
///
/// Specificity and helpfulness look at (essay, feedback); validity looks at
/// (rubric description, feedback) and never sees the essay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub dimension: Dimension,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub essay_text: Option<String>,
    pub feedback_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rubric_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rubric_levels: Option<RubricLevels>,
}

impl ScoreRequest {
    pub fn specificity(essay_text: &str, feedback: &str) -> Self {
        Self::essay_based(Dimension::Specificity, essay_text, feedback)
    }

    pub fn helpfulness(essay_text: &str, feedback: &str) -> Self {
        Self::essay_based(Dimension::Helpfulness, essay_text, feedback)
    }

    fn essay_based(dimension: Dimension, essay_text: &str, feedback: &str) -> Self {
        ScoreRequest {
            dimension,
            essay_text: Some(essay_text.into()),
            feedback_text: feedback.into(),
            rubric_description: None,
            rubric_levels: None,
        }
    }

    pub fn validity(rubric_description: &str, feedback: &str) -> Self {
        ScoreRequest {
            dimension: Dimension::Validity,
            essay_text: None,
            feedback_text: feedback.into(),
            rubric_description: Some(rubric_description.into()),
            rubric_levels: None,
        }
    }

    /// Validity request that also carries every rubric level. The premise is
    /// the description at `evaluated`.
    pub fn validity_with_levels(levels: &BTreeMap<i64, String>, evaluated: i64, feedback: &str) -> Result<Self> {
        let premise = levels
            .get(&evaluated)
            .ok_or_else(|| Error::InvalidArgument(format!("no rubric level {evaluated}")))?;
        let mut req = Self::validity(premise, feedback);
        req.rubric_levels = Some(RubricLevels {
            levels: levels.clone(),
            evaluated,
        });
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feedback_text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        match self.dimension {
            Dimension::Specificity | Dimension::Helpfulness => {
                if self.essay_text.is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "{} request needs essay text",
                        self.dimension
                    )));
                }
                if self.rubric_description.is_some() || self.rubric_levels.is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "{} request must not carry a rubric",
                        self.dimension
                    )));
                }
            }
            Dimension::Validity => {
                if self.essay_text.is_some() {
                    return Err(Error::InvalidArgument(
                        "validity request must not carry essay text".into(),
                    ));
                }
                let Some(desc) = &self.rubric_description else {
                    return Err(Error::InvalidArgument(
                        "validity request needs a rubric description".into(),
                    ));
                };
                if let Some(l) = &self.rubric_levels {
                    if l.levels.get(&l.evaluated) != Some(desc) {
                        return Err(Error::InvalidArgument(
                            "rubric description differs from the evaluated level".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A scorer's output before normalization across candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub value: f64,
    pub backend: BackendKind,
    pub dimension: Dimension,
}

impl RawScore {
    /// Reward scores are any finite real; validity must be a probability.
    pub fn new(value: f64, backend: BackendKind, dimension: Dimension) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("raw score"));
        }
        if dimension == Dimension::Validity && !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!("validity {value} outside [0, 1]")));
        }
        Ok(RawScore {
            value,
            backend,
            dimension,
        })
    }
}

const ACTION_VERBS: &[&str] = &[
    "add",
    "address",
    "avoid",
    "begin",
    "break",
    "check",
    "choose",
    "clarify",
    "combine",
    "conclude",
    "connect",
    "consider",
    "correct",
    "cut",
    "define",
    "delete",
    "describe",
    "develop",
    "edit",
    "elaborate",
    "emphasize",
    "end",
    "ensure",
    "expand",
    "explain",
    "focus",
    "give",
    "improve",
    "include",
    "incorporate",
    "introduce",
    "keep",
    "limit",
    "make",
    "mention",
    "organize",
    "practice",
    "proofread",
    "provide",
    "read",
    "reduce",
    "remove",
    "rephrase",
    "replace",
    "reorganize",
    "restructure",
    "review",
    "revise",
    "rewrite",
    "show",
    "split",
    "start",
    "state",
    "strengthen",
    "support",
    "tighten",
    "try",
    "use",
    "vary",
    "work",
    "write",
];

const MODALS: &[&str] = &["should", "could"];
const MODAL_FILLERS: &[&str] = &["also", "still", "further", "perhaps", "even", "really"];

/// True when the sentence opens with an imperative verb from a fixed list
/// (optionally after "please") or contains "should"/"could" followed by a word.
pub fn is_actionable(sentence: &str) -> bool {
    let ws = text::words(sentence);
    let first = ws.iter().find(|w| w.as_str() != "please");
    if first.is_some_and(|w| ACTION_VERBS.contains(&w.as_str())) {
        return true;
    }
    ws.iter().enumerate().any(|(i, w)| {
        MODALS.contains(&w.as_str())
            && ws[i + 1..]
                .iter()
                .find(|n| !MODAL_FILLERS.contains(&n.as_str()))
                .is_some_and(|n| n.chars().all(char::is_alphabetic))
    })
}

/// Share of feedback sentences that are actionable, in `[0, 1]`.
pub fn heuristic_helpfulness(feedback: &str) -> f64 {
    let spans = text::segment_sentences(feedback);
    if spans.is_empty() {
        return 0.0;
    }
    let hits = spans.iter().filter(|s| is_actionable(&s.text)).count();
    hits as f64 / spans.len() as f64
}

/// Specificity F1 from deterministic alignment.
pub fn heuristic_specificity(essay_text: &str, feedback: &str, params: &AlignmentParams) -> Result<f64> {
    Ok(align_fuzzy(essay_text, feedback, params).score()?.f1)
}

/// Number of distinct content words shared by `feedback` and each level description.
pub fn level_overlaps(feedback: &str, levels: &BTreeMap<i64, String>) -> BTreeMap<i64, usize> {
    let fb: BTreeSet<String> = text::content_words(feedback).into_iter().collect();
    levels
        .iter()
        .map(|(&level, desc)| {
            let d: BTreeSet<String> = text::content_words(desc).into_iter().collect();
            (level, fb.intersection(&d).count())
        })
        .collect()
}

/// Softmax over per-level overlap counts, read at the evaluated level.
pub fn heuristic_validity(feedback: &str, levels: &RubricLevels) -> Result<f64> {
    let overlaps = level_overlaps(feedback, &levels.levels);
    let idx = overlaps
        .keys()
        .position(|&l| l == levels.evaluated)
        .ok_or_else(|| Error::InvalidArgument(format!("no rubric level {}", levels.evaluated)))?;
    let xs: Vec<f64> = overlaps.values().map(|&c| c as f64).collect();
    Ok(normalize(&xs)?[idx])
}

/// Runs the heuristic scorer matching the request's dimension.
pub fn heuristic_score(req: &ScoreRequest, params: &AlignmentParams) -> Result<RawScore> {
    req.validate()?;
    let value = match req.dimension {
        Dimension::Specificity => heuristic_specificity(
            req.essay_text.as_deref().unwrap_or_default(),
            &req.feedback_text,
            params,
        )?,
        Dimension::Helpfulness => heuristic_helpfulness(&req.feedback_text),
        Dimension::Validity => {
            let levels = req
                .rubric_levels
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("heuristic validity needs the full rubric level table".into()))?;
            heuristic_validity(&req.feedback_text, levels)?
        }
    };
    RawScore::new(value, BackendKind::Heuristic, req.dimension)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic pseudo-score keyed by (dimension, feedback text): a probability
/// for validity, a value in `[-3, 3)` for the reward dimensions.
pub fn mock_value(dimension: Dimension, feedback: &str) -> f64 {
    let mut key = Vec::with_capacity(feedback.len() + 16);
    key.extend_from_slice(dimension.name().as_bytes());
    key.push(0);
    key.extend_from_slice(feedback.as_bytes());
    let unit = (fnv1a(&key) >> 11) as f64 / (1u64 << 53) as f64;
    match dimension {
        Dimension::Validity => unit,
        _ => unit * 6.0 - 3.0,
    }
}
