//! Specificity: how faithfully and how widely feedback references the essay.
//!
//! Feedback and essay are split into sentences, feedback sentences are linked
//! to the essay sentences they quote, and the link set is scored as the F1 of
//! faithfulness (share of feedback sentences with a link) and coverage (share
//! of essay sentences with a link).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Essay, FeedbackCandidate, TraitId};
use crate::text::{self, SentenceSpan};

/// How feedback-to-essay links were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Extractor {
    DeterministicFuzzy,
    BackendExtract,
}

/// Matching thresholds for linking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentParams {
    /// Minimum normalized edit similarity between a quote and an essay sentence.
    pub theta: f64,
    /// Length of a shared content-word n-gram that links two sentences.
    pub ngram: usize,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        AlignmentParams { theta: 0.85, ngram: 5 }
    }
}

/// Links from feedback sentence indices to essay sentence indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceMap {
    links: BTreeSet<(usize, usize)>,
    extractor: Extractor,
    n_feedback: usize,
    n_essay: usize,
}

impl ReferenceMap {
    pub fn new(
        links: BTreeSet<(usize, usize)>,
        extractor: Extractor,
        n_feedback: usize,
        n_essay: usize,
    ) -> Result<Self> {
        if let Some(&(f, e)) = links.iter().find(|&&(f, e)| f >= n_feedback || e >= n_essay) {
            return Err(Error::InvalidArgument(format!(
                "link ({f}, {e}) outside {n_feedback} feedback x {n_essay} essay sentences"
            )));
        }
        Ok(ReferenceMap {
            links,
            extractor,
            n_feedback,
            n_essay,
        })
    }

    pub fn links(&self) -> &BTreeSet<(usize, usize)> {
        &self.links
    }

    pub fn extractor(&self) -> Extractor {
        self.extractor
    }

    pub fn n_feedback(&self) -> usize {
        self.n_feedback
    }

    pub fn n_essay(&self) -> usize {
        self.n_essay
    }

    /// Adds a link; returns false if it was already present.
    pub fn insert(&mut self, feedback_idx: usize, essay_idx: usize) -> Result<bool> {
        if feedback_idx >= self.n_feedback || essay_idx >= self.n_essay {
            return Err(Error::InvalidArgument(format!(
                "link ({feedback_idx}, {essay_idx}) out of range"
            )));
        }
        Ok(self.links.insert((feedback_idx, essay_idx)))
    }

    pub fn score(&self) -> Result<SpecificityBreakdown> {
        specificity_score(&self.links, self.n_feedback, self.n_essay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecificityBreakdown {
    pub faithfulness: f64,
    pub coverage: f64,
    pub f1: f64,
}

impl SpecificityBreakdown {
    pub fn from_rates(faithfulness: f64, coverage: f64) -> Self {
        let denom = faithfulness + coverage;
        let f1 = if denom > 0.0 {
            2.0 * faithfulness * coverage / denom
        } else {
            0.0
        };
        SpecificityBreakdown {
            faithfulness,
            coverage,
            f1,
        }
    }
}

/// Scores a link set. A feedback sentence with several links counts once.
pub fn specificity_score<'a>(
    links: impl IntoIterator<Item = &'a (usize, usize)>,
    n_feedback: usize,
    n_essay: usize,
) -> Result<SpecificityBreakdown> {
    if n_feedback == 0 || n_essay == 0 {
        return Err(Error::Empty("sentence count"));
    }
    let mut fb = BTreeSet::new();
    let mut es = BTreeSet::new();
    for &(f, e) in links {
        if f >= n_feedback || e >= n_essay {
            return Err(Error::InvalidArgument(format!("link ({f}, {e}) out of range")));
        }
        fb.insert(f);
        es.insert(e);
    }
    Ok(SpecificityBreakdown::from_rates(
        fb.len() as f64 / n_feedback as f64,
        es.len() as f64 / n_essay as f64,
    ))
}

struct PreparedSentence {
    matchable: Vec<char>,
    grams: BTreeSet<Vec<String>>,
}

fn prepare(spans: &[SentenceSpan], n: usize) -> Vec<PreparedSentence> {
    spans
        .iter()
        .map(|s| PreparedSentence {
            matchable: text::normalize_for_match(&s.text),
            grams: ngrams(&text::content_words(&s.text), n),
        })
        .collect()
}

fn ngrams(words: &[String], n: usize) -> BTreeSet<Vec<String>> {
    if n == 0 || words.len() < n {
        return BTreeSet::new();
    }
    words.windows(n).map(<[String]>::to_vec).collect()
}

/// Splits a quote into matchable pieces; pieces without a content word are dropped.
fn quote_pieces(quote: &str) -> Vec<Vec<char>> {
    let spans = text::segment_sentences(quote);
    spans
        .iter()
        .filter(|s| !text::content_words(&s.text).is_empty())
        .map(|s| text::normalize_for_match(&s.text))
        .filter(|p| !p.is_empty())
        .collect()
}

/// Deterministic linking.
///
/// Feedback sentence `i` links to essay sentence `j` when a quoted span of `i`
/// occurs in `j` with substring similarity at least `theta`, or when the two
/// sentences share a run of `ngram` content words.
pub fn align_fuzzy(essay_text: &str, feedback: &str, params: &AlignmentParams) -> ReferenceMap {
    let essay_spans = text::segment_sentences(essay_text);
    let feedback_spans = text::segment_sentences(feedback);
    let essay_prep = prepare(&essay_spans, params.ngram);
    let feedback_grams: Vec<BTreeSet<Vec<String>>> = feedback_spans
        .iter()
        .map(|s| ngrams(&text::content_words(&s.text), params.ngram))
        .collect();
    let mut links = BTreeSet::new();
    for (i, fs) in feedback_spans.iter().enumerate() {
        let pieces: Vec<Vec<char>> = text::quoted_segments(&fs.text)
            .iter()
            .flat_map(|q| quote_pieces(q))
            .collect();
        for (j, es) in essay_prep.iter().enumerate() {
            let quoted = pieces
                .iter()
                .any(|p| text::substring_similarity(p, &es.matchable) >= params.theta);
            let shared = !feedback_grams[i].is_disjoint(&es.grams);
            if quoted || shared {
                links.insert((i, j));
            }
        }
    }
    ReferenceMap {
        links,
        extractor: Extractor::DeterministicFuzzy,
        n_feedback: feedback_spans.len(),
        n_essay: essay_spans.len(),
    }
}

/// An essay segment a backend reported as referenced by one feedback sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedSegment {
    pub feedback_sentence: usize,
    pub segment: String,
}

/// Turns backend-extracted segments into links with the same similarity rule
/// used for quotes.
pub fn link_extracted(
    essay_text: &str,
    n_feedback: usize,
    segments: &[ExtractedSegment],
    params: &AlignmentParams,
) -> Result<ReferenceMap> {
    let essay_spans = text::segment_sentences(essay_text);
    let essay_prep = prepare(&essay_spans, params.ngram);
    let mut links = BTreeSet::new();
    for seg in segments {
        if seg.feedback_sentence >= n_feedback {
            return Err(Error::InvalidArgument(format!(
                "segment refers to feedback sentence {} of {n_feedback}",
                seg.feedback_sentence
            )));
        }
        for piece in quote_pieces(&seg.segment) {
            for (j, es) in essay_prep.iter().enumerate() {
                if text::substring_similarity(&piece, &es.matchable) >= params.theta {
                    links.insert((seg.feedback_sentence, j));
                }
            }
        }
    }
    ReferenceMap::new(links, Extractor::BackendExtract, n_feedback, essay_spans.len())
}

/// One chosen/rejected record of the specificity preference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEvalPair {
    pub essay_id: String,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub chosen: String,
    pub rejected: String,
    pub chosen_f1: f64,
    pub rejected_f1: f64,
    pub extractor: Extractor,
}

/// Builds pairs from already-scored variants of one (essay, trait).
///
/// Every unordered pair is emitted once with the higher-F1 variant chosen;
/// exact F1 ties are dropped.
pub fn speceval_pairs_from_scores(
    essay_id: &str,
    trait_id: TraitId,
    scored: &[(&FeedbackCandidate, f64)],
    extractor: Extractor,
) -> Result<Vec<SpecEvalPair>> {
    if scored.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 variants, got {}",
            scored.len()
        )));
    }
    if let Some((c, _)) = scored
        .iter()
        .find(|(c, _)| c.essay_id != essay_id || c.trait_id != trait_id)
    {
        return Err(Error::InvalidArgument(format!(
            "variant for ({}, {}) mixed into ({essay_id}, {trait_id})",
            c.essay_id, c.trait_id
        )));
    }
    if scored.iter().any(|(_, f)| !f.is_finite()) {
        return Err(Error::NonFinite("specificity"));
    }
    let mut pairs = Vec::new();
    for a in 0..scored.len() {
        for b in a + 1..scored.len() {
            let (hi, lo) = match scored[a].1.partial_cmp(&scored[b].1) {
                Some(core::cmp::Ordering::Greater) => (a, b),
                Some(core::cmp::Ordering::Less) => (b, a),
                _ => continue,
            };
            pairs.push(SpecEvalPair {
                essay_id: essay_id.into(),
                trait_id,
                chosen: scored[hi].0.text.clone(),
                rejected: scored[lo].0.text.clone(),
                chosen_f1: scored[hi].1,
                rejected_f1: scored[lo].1,
                extractor,
            });
        }
    }
    Ok(pairs)
}

/// Scores each variant with deterministic alignment and builds its pairs.
pub fn build_speceval_pairs(
    essay: &Essay,
    variants: &[FeedbackCandidate],
    params: &AlignmentParams,
) -> Result<Vec<SpecEvalPair>> {
    let first = variants.first().ok_or(Error::InvalidArgument("no variants".into()))?;
    let mut scored = Vec::with_capacity(variants.len());
    for v in variants {
        let f1 = align_fuzzy(essay.text(), &v.text, params).score()?.f1;
        scored.push((v, f1));
    }
    speceval_pairs_from_scores(essay.essay_id(), first.trait_id, &scored, Extractor::DeterministicFuzzy)
}
