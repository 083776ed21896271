//! Deterministic offline backends.

use std::collections::BTreeMap;

use feedeval_core::model::{feedback_traits, Essay, TraitId};
use feedeval_core::scoring::{fnv1a, heuristic_score, mock_value, BackendKind, RawScore, ScoreRequest};
use feedeval_core::specificity::AlignmentParams;
use feedeval_core::text::segment_sentences;

use super::{DimensionScorer, EssayScorer, FeedbackGenerator, Reviser};
use crate::error::Result;

/// Marker appended by [`AppendMarkerReviser`] and rewarded by [`KeyedScorer`].
pub const DEFAULT_MARKER: &str = "[[revised]]";

/// Mock feedback generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockGenerator {
    /// Returns the same answer document for every call.
    Fixed(String),
    /// Builds feedback from templates and essay quotes keyed by
    /// (seed, essay, sample, trait), so samples differ but runs repeat.
    Varied { seed: u64 },
}

impl MockGenerator {
    pub fn fixed(doc: &str) -> Self {
        MockGenerator::Fixed(doc.to_string())
    }

    pub fn varied(seed: u64) -> Self {
        MockGenerator::Varied { seed }
    }
}

fn key(seed: u64, parts: &[&str]) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    for p in parts {
        bytes.extend_from_slice(p.as_bytes());
        bytes.push(0);
    }
    fnv1a(&bytes)
}

fn short_quote(sentence: &str) -> String {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    words[..words.len().min(14)].join(" ")
}

/// Feedback text for one trait of one sample.
pub fn varied_feedback(seed: u64, essay: &Essay, sample: usize, trait_id: TraitId) -> String {
    let h = key(seed, &[essay.essay_id(), &sample.to_string(), trait_id.label_key()]);
    let spans = segment_sentences(essay.text());
    let pick = |salt: u64| {
        let n = spans.len().max(1) as u64;
        spans
            .get(((h >> salt) % n) as usize)
            .map(|s| short_quote(&s.text))
            .unwrap_or_default()
    };
    let (q1, q2) = (pick(3), pick(17));
    let t = trait_id.label_key();
    match (h >> 40) % 5 {
        0 => format!("The sentence \"{q1}\" shows your {t} clearly. Add one more concrete detail after it to strengthen the point."),
        1 => format!("Your {t} is adequate overall."),
        2 => format!("Consider the line \"{q1}\". You should rephrase it so the {t} is more precise."),
        3 => format!("The {t} could be better in places. It is a reasonable attempt."),
        _ => format!(
            "When you wrote \"{q1}\", the reader sees your idea. The essay also says \"{q2}\". Revise both sentences to vary their structure and sharpen the {t}."
        ),
    }
}

impl FeedbackGenerator for MockGenerator {
    fn generate(
        &self,
        essay: &Essay,
        _request: &str,
        sample: usize,
        _attempt: u32,
        _temperature: f64,
    ) -> Result<String> {
        match self {
            MockGenerator::Fixed(doc) => Ok(doc.clone()),
            MockGenerator::Varied { seed } => {
                let mut doc = serde_json::Map::new();
                for t in feedback_traits(essay.prompt_id()) {
                    doc.insert(
                        t.display_name().to_string(),
                        varied_feedback(*seed, essay, sample, t).into(),
                    );
                }
                Ok(serde_json::Value::Object(doc).to_string())
            }
        }
    }
}

/// Hash-keyed dimension scores.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl DimensionScorer for MockScorer {
    fn score(&self, req: &ScoreRequest) -> Result<RawScore> {
        req.validate()?;
        Ok(RawScore::new(
            mock_value(req.dimension, &req.feedback_text),
            BackendKind::Mock,
            req.dimension,
        )?)
    }
}

/// Rule-based dimension scores.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicScorer {
    pub params: AlignmentParams,
}

impl DimensionScorer for HeuristicScorer {
    fn score(&self, req: &ScoreRequest) -> Result<RawScore> {
        Ok(heuristic_score(req, &self.params)?)
    }
}

/// Predicts the human scores exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldEcho;

impl EssayScorer for GoldEcho {
    fn score(&self, essay: &Essay, _prompt_text: &str) -> Result<BTreeMap<TraitId, f64>> {
        Ok(essay.human_scores().iter().map(|(t, s)| (*t, *s as f64)).collect())
    }
}

/// Predicts the same value for every trait.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl EssayScorer for ConstantScorer {
    fn score(&self, essay: &Essay, _prompt_text: &str) -> Result<BTreeMap<TraitId, f64>> {
        Ok(essay.traits().iter().map(|t| (*t, self.0)).collect())
    }
}

/// Human scores plus one when the text contains the marker.
#[derive(Debug, Clone)]
pub struct KeyedScorer {
    pub marker: String,
}

impl EssayScorer for KeyedScorer {
    fn score(&self, essay: &Essay, _prompt_text: &str) -> Result<BTreeMap<TraitId, f64>> {
        let bonus = if essay.text().contains(&self.marker) { 1.0 } else { 0.0 };
        Ok(essay
            .human_scores()
            .iter()
            .map(|(t, s)| (*t, *s as f64 + bonus))
            .collect())
    }
}

/// Returns the essay unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityReviser;

impl Reviser for IdentityReviser {
    fn revise(&self, essay: &Essay, _feedback: &[(TraitId, &str)]) -> Result<String> {
        Ok(essay.text().to_string())
    }
}

/// Appends a marker paragraph to the essay.
#[derive(Debug, Clone)]
pub struct AppendMarkerReviser {
    pub marker: String,
}

impl Reviser for AppendMarkerReviser {
    fn revise(&self, essay: &Essay, _feedback: &[(TraitId, &str)]) -> Result<String> {
        Ok(format!("{}\n\n{}", essay.text(), self.marker))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use feedeval_core::answer::parse_trait_texts;

    fn essay() -> Essay {
        let scores = [
            (TraitId::Overall, 2),
            (TraitId::Content, 2),
            (TraitId::PromptAdherence, 3),
            (TraitId::Narrativity, 3),
            (TraitId::Language, 2),
        ]
        .into_iter()
        .collect();
        Essay::new(
            "e",
            3,
            "The road was hot. The cyclist had no water. He kept riding anyway.",
            None,
            scores,
        )
        .unwrap()
    }

    #[test]
    fn varied_documents_parse_and_repeat() {
        let g = MockGenerator::varied(42);
        let e = essay();
        let a = g.generate(&e, "", 0, 0, 0.7).unwrap();
        assert_eq!(a, g.generate(&e, "", 0, 0, 0.7).unwrap());
        let parsed = parse_trait_texts(&a).unwrap();
        assert_eq!(parsed.len(), 4);
        let distinct: std::collections::BTreeSet<String> =
            (0..8).map(|s| g.generate(&e, "", s, 0, 0.7).unwrap()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn keyed_scorer_rewards_marker() {
        let e = essay();
        let k = KeyedScorer {
            marker: DEFAULT_MARKER.into(),
        };
        let revised = e
            .with_text(
                &AppendMarkerReviser {
                    marker: DEFAULT_MARKER.into(),
                }
                .revise(&e, &[])
                .unwrap(),
            )
            .unwrap();
        let before = k.score(&e, "").unwrap();
        let after = k.score(&revised, "").unwrap();
        for (t, v) in before {
            assert_eq!(after[&t] - v, 1.0);
        }
    }
}
