//! Score-and-feedback training labels.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{score_range, Essay, PromptId, TraitId};

/// Feedback text written for the Overall trait.
pub const OVERALL_FEEDBACK: &str = "NAN";

/// Layout of the per-trait label objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFormat {
    /// `{"score": 3.0, "feedback": "..."}`
    #[default]
    ScoreFeedback,
    /// `{"feedback": "...", "score": 3.0}`
    FeedbackScore,
    /// Flat `trait: score`, no feedback at all.
    ScoreOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraitLabel {
    pub score: f64,
    pub feedback: String,
}

/// Per-trait score and feedback for one essay, in prediction order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFeedbackLabel {
    prompt_id: PromptId,
    entries: Vec<(TraitId, TraitLabel)>,
}

impl ScoreFeedbackLabel {
    /// Human scores from `essay`, feedback from `feedback` for every
    /// non-Overall trait, and the fixed Overall feedback.
    pub fn build(essay: &Essay, feedback: &BTreeMap<TraitId, String>) -> Result<Self> {
        let traits = essay.traits();
        let missing: Vec<TraitId> = traits
            .iter()
            .copied()
            .filter(|t| *t != TraitId::Overall && !feedback.contains_key(t))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingTraits(missing));
        }
        let mut entries = Vec::with_capacity(traits.len());
        for t in TraitId::PREDICTION_ORDER.iter().filter(|t| traits.contains(t)) {
            let score = essay
                .score(*t)
                .ok_or_else(|| Error::InvalidArgument(format!("essay {} has no {t} score", essay.essay_id())))?;
            let fb = if *t == TraitId::Overall {
                OVERALL_FEEDBACK.to_string()
            } else {
                feedback[t].clone()
            };
            entries.push((
                *t,
                TraitLabel {
                    score: score as f64,
                    feedback: fb,
                },
            ));
        }
        Ok(ScoreFeedbackLabel {
            prompt_id: essay.prompt_id(),
            entries,
        })
    }

    pub fn prompt_id(&self) -> PromptId {
        self.prompt_id
    }

    pub fn entries(&self) -> &[(TraitId, TraitLabel)] {
        &self.entries
    }

    /// Trait set equals the prompt's and every score is an in-range integer.
    pub fn validate(&self) -> Result<()> {
        let mut expected: Vec<TraitId> = crate::model::traits_for_prompt(self.prompt_id).to_vec();
        let mut got: Vec<TraitId> = self.entries.iter().map(|(t, _)| *t).collect();
        expected.sort();
        got.sort();
        if expected != got {
            return Err(Error::InvalidArgument(format!(
                "label traits {got:?} differ from prompt traits {expected:?}"
            )));
        }
        for (t, l) in &self.entries {
            let range = score_range(self.prompt_id, *t)?;
            let s = l.score as i64;
            if s as f64 != l.score || !range.contains(s) {
                return Err(Error::ScoreOutOfRange {
                    trait_id: *t,
                    score: s,
                    range,
                });
            }
        }
        Ok(())
    }

    pub fn view(&self, format: LabelFormat) -> LabelView<'_> {
        LabelView { label: self, format }
    }
}

/// Serializes a label in a given format with keys in prediction order.
#[derive(Debug, Clone, Copy)]
pub struct LabelView<'a> {
    label: &'a ScoreFeedbackLabel,
    format: LabelFormat,
}

struct TraitView<'a>(&'a TraitLabel, LabelFormat);

impl Serialize for TraitView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TraitLabel", 2)?;
        match self.1 {
            LabelFormat::FeedbackScore => {
                st.serialize_field("feedback", &self.0.feedback)?;
                st.serialize_field("score", &self.0.score)?;
            }
            _ => {
                st.serialize_field("score", &self.0.score)?;
                st.serialize_field("feedback", &self.0.feedback)?;
            }
        }
        st.end()
    }
}

impl Serialize for LabelView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.label.entries.len()))?;
        for (t, l) in &self.label.entries {
            match self.format {
                LabelFormat::ScoreOnly => map.serialize_entry(t.label_key(), &l.score)?,
                f => map.serialize_entry(t.label_key(), &TraitView(l, f))?,
            }
        }
        map.end()
    }
}

/// One line of the training-label file.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LabelRecord<'a> {
    pub essay_id: &'a str,
    pub prompt_id: PromptId,
    pub label: LabelView<'a>,
}
