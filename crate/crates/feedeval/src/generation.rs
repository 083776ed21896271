//! Sampling feedback candidates from a generator backend.

use std::collections::BTreeMap;

use feedeval_core::answer::parse_trait_texts;
use feedeval_core::model::{feedback_traits, Essay, FeedbackCandidate, GenerationSetting, TraitId};
use serde::{Deserialize, Serialize};

use crate::backend::FeedbackGenerator;
use crate::error::Result;

/// A sample, or one trait of a sample, that produced no candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub essay_id: String,
    pub sample_index: usize,
    /// Absent when the whole sample failed.
    #[serde(rename = "trait", skip_serializing_if = "Option::is_none")]
    pub trait_id: Option<TraitId>,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationOutcome {
    /// Candidates per non-Overall trait, in sample order.
    pub candidates: BTreeMap<TraitId, Vec<FeedbackCandidate>>,
    pub failures: Vec<SampleFailure>,
}

/// Parameters shared by every essay of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub setting: GenerationSetting,
    pub n: usize,
    pub temperature: f64,
    /// Extra attempts for a sample whose answer cannot be parsed.
    pub retries: u32,
}

/// Draws `plan.n` answers for `essay` and splits them into per-trait
/// candidates. Unparseable answers are retried up to the cap; a sample
/// missing a trait key is invalid for that trait only.
pub fn generate_candidates(
    essay: &Essay,
    request: &str,
    plan: &SamplingPlan,
    backend: &dyn FeedbackGenerator,
) -> Result<GenerationOutcome> {
    let traits: Vec<TraitId> = feedback_traits(essay.prompt_id()).collect();
    let mut out = GenerationOutcome {
        candidates: traits.iter().map(|t| (*t, Vec::new())).collect(),
        failures: Vec::new(),
    };
    for sample in 0..plan.n {
        let mut parsed = None;
        let mut reason = String::new();
        let mut attempts = 0;
        for attempt in 0..=plan.retries {
            attempts = attempt + 1;
            match backend.generate(essay, request, sample, attempt, plan.temperature) {
                Ok(answer) => match parse_trait_texts(&answer) {
                    Ok(m) if !m.is_empty() => {
                        parsed = Some(m);
                        break;
                    }
                    Ok(_) => reason = "answer names no trait".into(),
                    Err(e) => reason = e.to_string(),
                },
                Err(e) if e.is_retryable() || matches!(e, crate::error::Error::Protocol(_)) => {
                    reason = e.to_string();
                }
                Err(e) => return Err(e),
            }
        }
        let Some(mut texts) = parsed else {
            log::warn!("essay {} sample {sample}: {reason}", essay.essay_id());
            out.failures.push(SampleFailure {
                essay_id: essay.essay_id().to_string(),
                sample_index: sample,
                trait_id: None,
                attempts,
                reason,
            });
            continue;
        };
        for &t in &traits {
            match texts.remove(&t) {
                Some(text) => {
                    let c = FeedbackCandidate::new(essay.essay_id(), t, text, plan.setting, sample, plan.temperature)?;
                    out.candidates.entry(t).or_default().push(c);
                }
                None => out.failures.push(SampleFailure {
                    essay_id: essay.essay_id().to_string(),
                    sample_index: sample,
                    trait_id: Some(t),
                    attempts,
                    reason: format!("answer has no {t} key"),
                }),
            }
        }
    }
    Ok(out)
}
