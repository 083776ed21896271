//! Essays, traits, rubrics and the ASAP++ prompt layout.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// A scored dimension of essay quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TraitId {
    Overall,
    Content,
    WordChoice,
    Organization,
    SentenceFluency,
    Conventions,
    PromptAdherence,
    Narrativity,
    Language,
}

impl TraitId {
    pub const ALL: [TraitId; 9] = [
        TraitId::Overall,
        TraitId::Content,
        TraitId::WordChoice,
        TraitId::Organization,
        TraitId::SentenceFluency,
        TraitId::Conventions,
        TraitId::PromptAdherence,
        TraitId::Narrativity,
        TraitId::Language,
    ];

    /// Order in which the scoring model emits traits: the reverse of the
    /// `Over, Cont, PA, Lang, Nar, Org, Conv, WC, SF` column layout.
    pub const PREDICTION_ORDER: [TraitId; 9] = [
        TraitId::SentenceFluency,
        TraitId::WordChoice,
        TraitId::Conventions,
        TraitId::Organization,
        TraitId::Narrativity,
        TraitId::Language,
        TraitId::PromptAdherence,
        TraitId::Content,
        TraitId::Overall,
    ];

    /// Title-case name used in prompts and rubric files.
    pub fn display_name(self) -> &'static str {
        match self {
            TraitId::Overall => "Overall",
            TraitId::Content => "Content",
            TraitId::WordChoice => "Word Choice",
            TraitId::Organization => "Organization",
            TraitId::SentenceFluency => "Sentence Fluency",
            TraitId::Conventions => "Conventions",
            TraitId::PromptAdherence => "Prompt Adherence",
            TraitId::Narrativity => "Narrativity",
            TraitId::Language => "Language",
        }
    }

    /// Lower-case key used in training labels.
    pub fn label_key(self) -> &'static str {
        match self {
            TraitId::Overall => "overall",
            TraitId::Content => "content",
            TraitId::WordChoice => "word choice",
            TraitId::Organization => "organization",
            TraitId::SentenceFluency => "sentence fluency",
            TraitId::Conventions => "conventions",
            TraitId::PromptAdherence => "prompt adherence",
            TraitId::Narrativity => "narrativity",
            TraitId::Language => "language",
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            TraitId::Overall => "Over",
            TraitId::Content => "Cont",
            TraitId::WordChoice => "WC",
            TraitId::Organization => "Org",
            TraitId::SentenceFluency => "SF",
            TraitId::Conventions => "Conv",
            TraitId::PromptAdherence => "PA",
            TraitId::Narrativity => "Nar",
            TraitId::Language => "Lang",
        }
    }

    /// Lenient lookup: case, spacing, `_`/`-` and the usual abbreviations are ignored.
    pub fn parse(name: &str) -> Result<TraitId> {
        let key: String = name
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(|c| c.to_lowercase())
            .collect();
        let found = match key.as_str() {
            "overall" | "over" | "score" => TraitId::Overall,
            "content" | "cont" => TraitId::Content,
            "wordchoice" | "wc" => TraitId::WordChoice,
            "organization" | "organisation" | "org" => TraitId::Organization,
            "sentencefluency" | "sf" => TraitId::SentenceFluency,
            "conventions" | "convention" | "conv" => TraitId::Conventions,
            "promptadherence" | "pa" => TraitId::PromptAdherence,
            "narrativity" | "nar" => TraitId::Narrativity,
            "language" | "lang" | "lan" => TraitId::Language,
            _ => return Err(Error::UnknownTrait(name.to_string())),
        };
        Ok(found)
    }
}

impl fmt::Display for TraitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// ASAP++ prompt number, 1 through 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct PromptId(u8);

impl PromptId {
    pub fn new(id: i64) -> Result<Self> {
        if (1..=6).contains(&id) {
            Ok(PromptId(id as u8))
        } else {
            Err(Error::InvalidPrompt(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = PromptId> {
        (1..=6).map(PromptId)
    }
}

impl TryFrom<i64> for PromptId {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        PromptId::new(v)
    }
}

impl From<PromptId> for u8 {
    fn from(p: PromptId) -> u8 {
        p.0
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: i64,
    pub hi: i64,
}

impl ScoreRange {
    pub const fn new(lo: i64, hi: i64) -> Self {
        ScoreRange { lo, hi }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Number of levels, `hi - lo + 1`.
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn clamp(&self, v: i64) -> i64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn shifted(&self, by: i64) -> Self {
        ScoreRange::new(self.lo + by, self.hi + by)
    }
}

const ARGUMENTATIVE: [TraitId; 6] = [
    TraitId::Overall,
    TraitId::Content,
    TraitId::WordChoice,
    TraitId::Organization,
    TraitId::SentenceFluency,
    TraitId::Conventions,
];

const SOURCE_DEPENDENT: [TraitId; 5] = [
    TraitId::Overall,
    TraitId::Content,
    TraitId::PromptAdherence,
    TraitId::Narrativity,
    TraitId::Language,
];

/// Traits scored for a prompt, `Overall` first.
pub fn traits_for_prompt(prompt: PromptId) -> &'static [TraitId] {
    match prompt.get() {
        1 | 2 => &ARGUMENTATIVE,
        _ => &SOURCE_DEPENDENT,
    }
}

/// Same as [`traits_for_prompt`] but for a raw integer id.
pub fn traits_for_prompt_id(prompt_id: i64) -> Result<&'static [TraitId]> {
    Ok(traits_for_prompt(PromptId::new(prompt_id)?))
}

/// Traits that carry feedback (everything except `Overall`).
pub fn feedback_traits(prompt: PromptId) -> impl Iterator<Item = TraitId> {
    traits_for_prompt(prompt)
        .iter()
        .copied()
        .filter(|t| *t != TraitId::Overall)
}

pub fn score_range(prompt: PromptId, trait_id: TraitId) -> Result<ScoreRange> {
    if !traits_for_prompt(prompt).contains(&trait_id) {
        return Err(Error::TraitNotInPrompt {
            prompt: prompt.get(),
            trait_id,
        });
    }
    let overall = trait_id == TraitId::Overall;
    Ok(match (prompt.get(), overall) {
        (1, true) => ScoreRange::new(2, 12),
        (1, false) | (2, _) => ScoreRange::new(1, 6),
        (3 | 4, _) => ScoreRange::new(0, 3),
        _ => ScoreRange::new(0, 4),
    })
}

/// NFC-normalizes and folds CR/LF line endings to LF. Nothing else changes.
pub fn normalize_text(text: &str) -> String {
    let folded = text.replace("\r\n", "\n").replace('\r', "\n");
    folded.nfc().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EssayRecord {
    essay_id: String,
    prompt_id: i64,
    text: String,
    #[serde(default)]
    excerpt: Option<String>,
    #[serde(default)]
    human_scores: BTreeMap<TraitId, i64>,
}

/// A validated student essay with its human trait scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EssayRecord", into = "EssayRecord")]
pub struct Essay {
    essay_id: String,
    prompt_id: PromptId,
    text: String,
    excerpt: Option<String>,
    human_scores: BTreeMap<TraitId, i64>,
}

impl Essay {
    pub fn new(
        essay_id: impl Into<String>,
        prompt_id: i64,
        text: &str,
        excerpt: Option<&str>,
        human_scores: BTreeMap<TraitId, i64>,
    ) -> Result<Self> {
        let prompt_id = PromptId::new(prompt_id)?;
        let text = normalize_text(text);
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        for (&trait_id, &score) in &human_scores {
            let range = score_range(prompt_id, trait_id)?;
            if !range.contains(score) {
                return Err(Error::ScoreOutOfRange { trait_id, score, range });
            }
        }
        Ok(Essay {
            essay_id: essay_id.into(),
            prompt_id,
            text,
            excerpt: excerpt.map(normalize_text),
            human_scores,
        })
    }

    pub fn essay_id(&self) -> &str {
        &self.essay_id
    }

    pub fn prompt_id(&self) -> PromptId {
        self.prompt_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn excerpt(&self) -> Option<&str> {
        self.excerpt.as_deref()
    }

    pub fn human_scores(&self) -> &BTreeMap<TraitId, i64> {
        &self.human_scores
    }

    pub fn score(&self, trait_id: TraitId) -> Option<i64> {
        self.human_scores.get(&trait_id).copied()
    }

    pub fn traits(&self) -> &'static [TraitId] {
        traits_for_prompt(self.prompt_id)
    }

    /// Copy of this essay with its text replaced, scores kept.
    pub fn with_text(&self, text: &str) -> Result<Self> {
        Essay::new(
            self.essay_id.clone(),
            self.prompt_id.get() as i64,
            text,
            self.excerpt.as_deref(),
            self.human_scores.clone(),
        )
    }
}

impl TryFrom<EssayRecord> for Essay {
    type Error = Error;
    fn try_from(r: EssayRecord) -> Result<Self> {
        Essay::new(r.essay_id, r.prompt_id, &r.text, r.excerpt.as_deref(), r.human_scores)
    }
}

impl From<Essay> for EssayRecord {
    fn from(e: Essay) -> Self {
        EssayRecord {
            essay_id: e.essay_id,
            prompt_id: e.prompt_id.get() as i64,
            text: e.text,
            excerpt: e.excerpt,
            human_scores: e.human_scores,
        }
    }
}

/// Score-level descriptions for one (prompt, trait).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    prompt_id: PromptId,
    trait_id: TraitId,
    levels: BTreeMap<i64, String>,
}

impl Rubric {
    /// Levels must be contiguous and span exactly the trait's score range.
    /// `Overall` never has a rubric.
    pub fn new(prompt_id: PromptId, trait_id: TraitId, levels: BTreeMap<i64, String>) -> Result<Self> {
        if trait_id == TraitId::Overall {
            return Err(Error::Rubric("Overall has no rubric".into()));
        }
        let range = score_range(prompt_id, trait_id)?;
        check_contiguous(&levels)?;
        let (lo, hi) = (*levels.keys().next().unwrap(), *levels.keys().last().unwrap());
        if lo != range.lo || hi != range.hi {
            return Err(Error::Rubric(format!(
                "levels {lo}..={hi} do not cover {trait_id} range {}..={} on prompt {prompt_id}",
                range.lo, range.hi
            )));
        }
        if let Some((level, _)) = levels.iter().find(|(_, d)| d.trim().is_empty()) {
            return Err(Error::Rubric(format!("level {level} of {trait_id} is empty")));
        }
        Ok(Rubric {
            prompt_id,
            trait_id,
            levels,
        })
    }

    pub fn prompt_id(&self) -> PromptId {
        self.prompt_id
    }

    pub fn trait_id(&self) -> TraitId {
        self.trait_id
    }

    pub fn levels(&self) -> &BTreeMap<i64, String> {
        &self.levels
    }

    pub fn description(&self, level: i64) -> Option<&str> {
        self.levels.get(&level).map(String::as_str)
    }
}

/// Checks that level keys form a non-empty run of consecutive integers.
pub fn check_contiguous<V>(levels: &BTreeMap<i64, V>) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Rubric("no levels".into()));
    }
    let keys: Vec<i64> = levels.keys().copied().collect();
    if keys.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Rubric(format!("levels {keys:?} are not contiguous")));
    }
    Ok(())
}

/// All rubrics for one prompt, keyed by trait.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RubricSet {
    rubrics: BTreeMap<TraitId, Rubric>,
}

impl RubricSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rubric: Rubric) -> Option<Rubric> {
        self.rubrics.insert(rubric.trait_id, rubric)
    }

    pub fn get(&self, trait_id: TraitId) -> Option<&Rubric> {
        self.rubrics.get(&trait_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rubric> {
        self.rubrics.values()
    }

    pub fn len(&self) -> usize {
        self.rubrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rubrics.is_empty()
    }
}

/// Prompt design used to produce a feedback candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GenerationSetting {
    ScoreRubric,
    ScoreOnly,
    RubricOnly,
}

impl GenerationSetting {
    pub const ALL: [GenerationSetting; 3] = [
        GenerationSetting::ScoreRubric,
        GenerationSetting::ScoreOnly,
        GenerationSetting::RubricOnly,
    ];
}

/// One trait-specific feedback text plus how it was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCandidate {
    pub essay_id: String,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub text: String,
    pub setting: GenerationSetting,
    pub sample_index: usize,
    pub temperature: f64,
}

impl FeedbackCandidate {
    pub fn new(
        essay_id: impl Into<String>,
        trait_id: TraitId,
        text: impl Into<String>,
        setting: GenerationSetting,
        sample_index: usize,
        temperature: f64,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature {temperature}")));
        }
        Ok(FeedbackCandidate {
            essay_id: essay_id.into(),
            trait_id,
            text,
            setting,
            sample_index,
            temperature,
        })
    }

    /// Checks `sample_index < batch_size` for the batch this candidate belongs to.
    pub fn check_batch(&self, batch_size: usize) -> Result<()> {
        if self.sample_index < batch_size {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "sample index {} outside batch of {batch_size}",
                self.sample_index
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p(id: i64) -> PromptId {
        PromptId::new(id).unwrap()
    }

    #[test]
    fn trait_sets_follow_table_layout() {
        use TraitId::*;
        assert_eq!(
            traits_for_prompt(p(1)),
            &[Overall, Content, WordChoice, Organization, SentenceFluency, Conventions]
        );
        assert_eq!(
            traits_for_prompt(p(3)),
            &[Overall, Content, PromptAdherence, Narrativity, Language]
        );
        assert!(traits_for_prompt_id(7).is_err());
        assert!(traits_for_prompt_id(0).is_err());
        for id in PromptId::all() {
            let expected = if id.get() <= 2 { 6 } else { 5 };
            assert_eq!(traits_for_prompt(id).len(), expected);
        }
    }

    #[test]
    fn score_ranges() {
        assert_eq!(score_range(p(1), TraitId::Overall).unwrap(), ScoreRange::new(2, 12));
        assert_eq!(score_range(p(1), TraitId::Content).unwrap(), ScoreRange::new(1, 6));
        assert_eq!(score_range(p(2), TraitId::Overall).unwrap(), ScoreRange::new(1, 6));
        assert_eq!(score_range(p(4), TraitId::Language).unwrap(), ScoreRange::new(0, 3));
        assert_eq!(score_range(p(5), TraitId::Narrativity).unwrap(), ScoreRange::new(0, 4));
        assert!(matches!(
            score_range(p(1), TraitId::Narrativity),
            Err(Error::TraitNotInPrompt { .. })
        ));
    }

    #[test]
    fn trait_names_parse_leniently() {
        for t in TraitId::ALL {
            assert_eq!(TraitId::parse(t.display_name()).unwrap(), t);
            assert_eq!(TraitId::parse(t.label_key()).unwrap(), t);
            assert_eq!(TraitId::parse(t.abbreviation()).unwrap(), t);
        }
        assert_eq!(TraitId::parse("word_choice").unwrap(), TraitId::WordChoice);
        assert!(TraitId::parse("style").is_err());
    }

    #[test]
    fn essay_validation() {
        let mut scores = BTreeMap::new();
        scores.insert(TraitId::Content, 9);
        let err = Essay::new("e1", 1, "Some text.", None, scores).unwrap_err();
        assert!(matches!(err, Error::ScoreOutOfRange { score: 9, .. }));

        let mut scores = BTreeMap::new();
        scores.insert(TraitId::Narrativity, 2);
        assert!(Essay::new("e1", 1, "text", None, scores).is_err());
        assert_eq!(
            Essay::new("e1", 1, "  \n ", None, BTreeMap::new()).unwrap_err(),
            Error::EmptyText
        );
    }

    #[test]
    fn text_normalization_is_minimal() {
        let e = Essay::new("e", 3, "Cafe\u{301}\r\nline\rmore  spaces", None, BTreeMap::new()).unwrap();
        assert_eq!(e.text(), "Caf\u{e9}\nline\nmore  spaces");
    }

    #[test]
    fn essay_serde_validates() {
        let ok = r#"{"essay_id":"a","prompt_id":3,"text":"Hi.","human_scores":{"Content":2}}"#;
        let e: Essay = serde_json::from_str(ok).unwrap();
        assert_eq!(e.score(TraitId::Content), Some(2));
        let bad = r#"{"essay_id":"a","prompt_id":3,"text":"Hi.","human_scores":{"Content":7}}"#;
        assert!(serde_json::from_str::<Essay>(bad).is_err());
    }

    #[test]
    fn rubric_levels_must_cover_range() {
        let levels: BTreeMap<i64, String> = (1..=6).map(|l| (l, format!("level {l}"))).collect();
        assert!(Rubric::new(p(1), TraitId::Content, levels.clone()).is_ok());
        assert!(Rubric::new(p(1), TraitId::Overall, levels.clone()).is_err());
        let mut gap = levels.clone();
        gap.remove(&3);
        assert!(Rubric::new(p(1), TraitId::Content, gap).is_err());
        let short: BTreeMap<i64, String> = (1..=5).map(|l| (l, "x".into())).collect();
        assert!(Rubric::new(p(1), TraitId::Content, short).is_err());
        assert!(check_contiguous(&BTreeMap::<i64, ()>::new()).is_err());
        let _ = vec![0u8];
    }

    #[test]
    fn candidate_batch_bound() {
        let c = FeedbackCandidate::new("e", TraitId::Content, "Good.", GenerationSetting::ScoreRubric, 7, 0.7).unwrap();
        assert!(c.check_batch(8).is_ok());
        assert!(c.check_batch(7).is_err());
        assert!(FeedbackCandidate::new("e", TraitId::Content, " ", GenerationSetting::ScoreOnly, 0, 0.7).is_err());
    }
}
