//! Seeded prompt-stratified folds and the per-(prompt, trait) QWK report.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean, qwk, sample_sd, RatingPairSeries};
use crate::model::{score_range, PromptId, TraitId};

/// Assigns each item a fold in `0..k`.
///
/// Items are grouped by prompt, each group is shuffled, and folds are dealt
/// round-robin with the starting fold carried over from one prompt to the
/// next, so fold sizes differ by at most one overall and per prompt.
pub fn assign_folds<R: Rng + ?Sized>(prompts: &[PromptId], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
    }
    let mut groups: BTreeMap<PromptId, Vec<usize>> = BTreeMap::new();
    for (i, p) in prompts.iter().enumerate() {
        groups.entry(*p).or_default().push(i);
    }
    let mut folds = vec![0; prompts.len()];
    let mut offset = 0;
    for members in groups.values_mut() {
        members.shuffle(rng);
        for (pos, &idx) in members.iter().enumerate() {
            folds[idx] = (offset + pos) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(folds)
}

/// Gold and predicted trait scores of one held-out essay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub essay_id: String,
    pub prompt_id: PromptId,
    pub fold: usize,
    pub gold: BTreeMap<TraitId, i64>,
    pub predicted: BTreeMap<TraitId, f64>,
}

/// QWK of one (prompt, trait, fold), or the reason it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QwkCell {
    pub prompt_id: PromptId,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub fold: usize,
    pub n: usize,
    pub qwk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample SD over folds; absent with fewer than two folds.
    pub sd: Option<f64>,
    pub folds: usize,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Summary> {
        Some(Summary {
            mean: mean(values).ok()?,
            sd: sample_sd(values).ok(),
            folds: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QwkReport {
    pub cells: Vec<QwkCell>,
    /// Mean and SD over folds per prompt and trait.
    pub by_prompt: BTreeMap<PromptId, BTreeMap<TraitId, Summary>>,
    /// Per trait, the mean of its prompt means.
    pub trait_average: BTreeMap<TraitId, f64>,
    /// Per prompt, the mean over its traits.
    pub prompt_average: BTreeMap<PromptId, f64>,
    /// Mean over all (prompt, trait) means.
    pub overall_average: Option<f64>,
    /// Predictions that were rounded and then clamped into range.
    pub clamped: usize,
    /// Predictions absent for a gold trait.
    pub missing: usize,
}

/// Rounds a prediction half away from zero and clamps it into range.
pub fn discretize(value: f64, lo: i64, hi: i64) -> (i64, bool) {
    let r = libm::round(value) as i64;
    let c = r.clamp(lo, hi);
    (c, c != r)
}

/// Computes QWK per (prompt, trait, fold) over the declared score range.
/// Cells with fewer than 2 items or a single rated level are skipped with a warning.
pub fn qwk_report(predictions: &[FoldPrediction], k: usize) -> Result<QwkReport> {
    type Key = (PromptId, TraitId, usize);
    let mut series: BTreeMap<Key, (Vec<i64>, Vec<i64>)> = BTreeMap::new();
    let mut clamped = 0;
    let mut missing = 0;
    for p in predictions {
        if p.fold >= k {
            return Err(Error::InvalidArgument(format!("fold {} outside 0..{k}", p.fold)));
        }
        for (t, &g) in &p.gold {
            let range = score_range(p.prompt_id, *t)?;
            let Some(&pred) = p.predicted.get(t) else {
                missing += 1;
                continue;
            };
            if !pred.is_finite() {
                return Err(Error::NonFinite("prediction"));
            }
            let (v, was_clamped) = discretize(pred, range.lo, range.hi);
            clamped += usize::from(was_clamped);
            let e = series.entry((p.prompt_id, *t, p.fold)).or_default();
            e.0.push(g);
            e.1.push(v);
        }
    }
    let mut cells = Vec::new();
    for ((prompt_id, trait_id, fold), (h, m)) in series {
        let range = score_range(prompt_id, trait_id)?;
        let n = h.len();
        let (value, warning) = if n < 2 {
            (None, Some(format!("only {n} item(s)")))
        } else {
            match RatingPairSeries::new(h, m, range).and_then(|s| qwk(&s)) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(format!("{e}"))),
            }
        };
        cells.push(QwkCell {
            prompt_id,
            trait_id,
            fold,
            n,
            qwk: value,
            warning,
        });
    }
    let mut per: BTreeMap<(PromptId, TraitId), Vec<f64>> = BTreeMap::new();
    for c in &cells {
        if let Some(v) = c.qwk {
            per.entry((c.prompt_id, c.trait_id)).or_default().push(v);
        }
    }
    let mut by_prompt: BTreeMap<PromptId, BTreeMap<TraitId, Summary>> = BTreeMap::new();
    for ((p, t), vals) in &per {
        if let Some(s) = Summary::of(vals) {
            by_prompt.entry(*p).or_default().insert(*t, s);
        }
    }
    let mut trait_vals: BTreeMap<TraitId, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    let mut prompt_average = BTreeMap::new();
    for (p, traits) in &by_prompt {
        let means: Vec<f64> = traits.values().map(|s| s.mean).collect();
        if let Ok(m) = mean(&means) {
            prompt_average.insert(*p, m);
        }
        for (t, s) in traits {
            trait_vals.entry(*t).or_default().push(s.mean);
            all.push(s.mean);
        }
    }
    let trait_average = trait_vals
        .into_iter()
        .filter_map(|(t, v)| mean(&v).ok().map(|m| (t, m)))
        .collect();
    Ok(QwkReport {
        cells,
        by_prompt,
        trait_average,
        prompt_average,
        overall_average: mean(&all).ok(),
        clamped,
        missing,
    })
}
