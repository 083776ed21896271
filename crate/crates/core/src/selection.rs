//! Softmax normalization across candidates and high/low feedback selection.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeedbackCandidate, TraitId};
use crate::scoring::Dimension;

/// Numerically stable softmax.
///
/// The denominator is summed in ascending order of the exponentials, so the
/// result is bit-identical under any permutation of the input; shifting every
/// input by a constant leaves it bit-identical whenever the shifted inputs are
/// exactly representable.
pub fn normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("score list"));
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|x| libm::exp(x - max)).collect();
    let mut sorted = exps.clone();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// One value per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionTriple {
    pub specificity: f64,
    pub helpfulness: f64,
    pub validity: f64,
}

impl DimensionTriple {
    pub const fn new(specificity: f64, helpfulness: f64, validity: f64) -> Self {
        DimensionTriple {
            specificity,
            helpfulness,
            validity,
        }
    }

    pub fn get(&self, d: Dimension) -> f64 {
        match d {
            Dimension::Specificity => self.specificity,
            Dimension::Helpfulness => self.helpfulness,
            Dimension::Validity => self.validity,
        }
    }

    pub fn set(&mut self, d: Dimension, v: f64) {
        match d {
            Dimension::Specificity => self.specificity = v,
            Dimension::Helpfulness => self.helpfulness = v,
            Dimension::Validity => self.validity = v,
        }
    }
}

/// Per-dimension weights of the combined score. The default weighs all three
/// equally; a zero weight drops a dimension, which gives the single- and
/// two-dimension ablations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionWeights(pub DimensionTriple);

impl Default for DimensionWeights {
    fn default() -> Self {
        DimensionWeights(DimensionTriple::new(1.0, 1.0, 1.0))
    }
}

impl DimensionWeights {
    /// Equal weights over `dims`, zero elsewhere.
    pub fn subset(dims: &[Dimension]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Empty("dimension subset"));
        }
        let mut t = DimensionTriple::new(0.0, 0.0, 0.0);
        for &d in dims {
            t.set(d, 1.0);
        }
        Ok(DimensionWeights(t))
    }

    fn validate(&self) -> Result<f64> {
        let w = self.0;
        let all = [w.specificity, w.helpfulness, w.validity];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument(format!("bad weights {all:?}")));
        }
        let total: f64 = all.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SelectionMode {
    Highest,
    Lowest,
}

/// Raw, normalized and combined scores of all candidates of one trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub raw: Vec<DimensionTriple>,
    pub normalized: Vec<DimensionTriple>,
    pub combined: Vec<f64>,
}

impl CandidateScores {
    pub fn len(&self) -> usize {
        self.combined.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combined.is_empty()
    }
}

/// Normalizes each dimension across candidates and combines them by weighted mean.
pub fn combine(raw: &[DimensionTriple], weights: &DimensionWeights) -> Result<CandidateScores> {
    let total_weight = weights.validate()?;
    if raw.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let mut normalized = alloc::vec![DimensionTriple::new(0.0, 0.0, 0.0); raw.len()];
    for d in Dimension::ALL {
        let column: Vec<f64> = raw.iter().map(|t| t.get(d)).collect();
        for (slot, v) in normalized.iter_mut().zip(normalize(&column)?) {
            slot.set(d, v);
        }
    }
    let w = weights.0;
    let combined = normalized
        .iter()
        .map(|n| {
            (w.specificity * n.specificity + w.helpfulness * n.helpfulness + w.validity * n.validity) / total_weight
        })
        .collect();
    Ok(CandidateScores {
        raw: raw.to_vec(),
        normalized,
        combined,
    })
}

/// Index of the largest (or smallest) value; exact ties go to the lowest index.
pub fn arg_extremum(values: &[f64], mode: SelectionMode) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => match mode {
                SelectionMode::Highest => v > values[b],
                SelectionMode::Lowest => v < values[b],
            },
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Combines raw scores and picks the extreme candidate.
pub fn select_index(
    raw: &[DimensionTriple],
    weights: &DimensionWeights,
    mode: SelectionMode,
) -> Result<(CandidateScores, usize)> {
    let scores = combine(raw, weights)?;
    let idx = arg_extremum(&scores.combined, mode).ok_or(Error::Empty("candidate list"))?;
    Ok((scores, idx))
}

/// The feedback picked for one trait together with the full score audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeedback {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub index: usize,
    pub feedback: FeedbackCandidate,
    pub mode: SelectionMode,
    pub scores: CandidateScores,
}

/// Selects among `candidates` given their raw scores (same order).
pub fn select_scored(
    trait_id: TraitId,
    candidates: &[FeedbackCandidate],
    raw: &[DimensionTriple],
    weights: &DimensionWeights,
    mode: SelectionMode,
) -> Result<SelectedFeedback> {
    if candidates.len() != raw.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: raw.len(),
        });
    }
    if let Some(c) = candidates.iter().find(|c| c.trait_id != trait_id) {
        return Err(Error::InvalidArgument(format!(
            "candidate for {} passed to {trait_id} selection",
            c.trait_id
        )));
    }
    let (scores, index) = select_index(raw, weights, mode)?;
    Ok(SelectedFeedback {
        trait_id,
        index,
        feedback: candidates[index].clone(),
        mode,
        scores,
    })
}
