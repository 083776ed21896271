//! Request texts sent to model backends.
//!
//! The three feedback-generation templates and the filtering template
//! reproduce the published prompt designs line for line. The revision,
//! extraction, scoring and dimension-scoring templates have no published
//! text and are our own.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{feedback_traits, Essay, GenerationSetting, RubricSet, TraitId};
use crate::scoring::{Dimension, ScoreRequest};
use crate::selection::SelectionMode;

const OPENING: &str = "You are a member of the English essay writing test evaluation committee. \
Please, evaluate the given essay using following information.";

const NOTE: &str = "[Note]\n\
I have made an effort to remove personally identifying information from the essays using the Named \
Entity Recognizer (NER). The relevant entities are identified in the text and then replaced with a \
string such as '@PERSON', '@ORGANIZATION', '@LOCATION', '@DATE', '@TIME', '@MONEY', '@PERCENT', \
'@CAPS' (any capitalized word) and '@NUM' (any digits). Please do not penalize the essay because of \
the anonymizations.\n\
(end of [Note])";

const ANSWER_FORMAT: &str = "{\"trait 1\": \"evaluation for trait 1\", \"trait 2\": \"evaluation for trait 2\", ...}";

const Q_SCORE_RUBRIC: &str = "Q. Identify specific excerpts from the [Essay] that illustrate the \
strengths or weaknesses highlighted in the [Rubric descriptions] for each trait. Quote or summarize \
the relevant parts of the essay. Based on this analysis, rationalize the [Rubric descriptions] for \
each trait. If the [Rubric descriptions] for a given trait indicates that the writing is strong, \
provide only positive feedback. If it identifies weaknesses, provide a detailed analysis of the \
issue and suggest specific ways to improve it. Keep your response for each trait within three \
sentences, and do not include any specific scores in your analysis. Provide your answer in the \
following format:";

const Q_SCORE_ONLY: &str = "Q. Identify specific excerpts from the [Essay] that illustrate the \
strengths or weaknesses for each trait. Quote or summarize the relevant parts of the essay. Based \
on your analysis, rationalize the score for each trait. If the writing is strong enough, provide \
only positive feedback. If there are some weaknesses, provide a detailed analysis of the issue and \
suggest specific ways to improve it. Keep your response for each trait within three sentences, and \
do not include any specific scores in your analysis. Provide your answer in the following format:";

const Q_RUBRIC_ONLY: &str = "Q. Identify specific excerpts from the [Essay] that illustrate the \
strengths or weaknesses highlighted in the [Rubric guidelines] for each trait. Quote or summarize \
the relevant parts of the essay. Based on your analysis, rationalize your analysis for each trait. \
If the writing is strong enough, provide only positive feedback. If there are some weaknesses, \
provide a detailed analysis of the issue and suggest specific ways to improve it. Keep your \
response for each trait within three sentences, and do not include any specific scores in your \
analysis. Provide your answer in the following format:";

fn block(tag: &str, body: &str) -> String {
    format!("[{tag}]\n{body}\n(end of [{tag}])")
}

fn scores_block(essay: &Essay, traits: &[TraitId]) -> Result<String> {
    let mut lines = Vec::with_capacity(traits.len());
    for &t in traits {
        let s = essay
            .score(t)
            .ok_or_else(|| Error::Render(format!("essay {} has no {t} score", essay.essay_id())))?;
        lines.push(format!("{}: {s}", t.display_name()));
    }
    Ok(block("Scores", &lines.join("\n")))
}

fn rubric<'a>(rubrics: &'a RubricSet, essay: &Essay, t: TraitId) -> Result<&'a crate::model::Rubric> {
    let r = rubrics
        .get(t)
        .ok_or_else(|| Error::Render(format!("no {t} rubric for prompt {}", essay.prompt_id())))?;
    if r.prompt_id() != essay.prompt_id() {
        return Err(Error::Render(format!(
            "{t} rubric belongs to prompt {}, essay is prompt {}",
            r.prompt_id(),
            essay.prompt_id()
        )));
    }
    Ok(r)
}

fn rubric_descriptions(essay: &Essay, traits: &[TraitId], rubrics: &RubricSet) -> Result<String> {
    let mut out = String::from("[Rubric descriptions]\n");
    for &t in traits {
        let r = rubric(rubrics, essay, t)?;
        let score = essay
            .score(t)
            .ok_or_else(|| Error::Render(format!("essay {} has no {t} score", essay.essay_id())))?;
        let desc = r
            .description(score)
            .ok_or_else(|| Error::Render(format!("{t} rubric has no level {score}")))?;
        let name = t.display_name();
        out.push_str(&block("Trait", name));
        out.push_str(&format!(
            "\nThe following is a rubric description in terms of the \"{name}\" trait.\nScore {score}: {desc}\n"
        ));
    }
    out.push_str("(end of [Rubric descriptions])");
    Ok(out)
}

fn rubric_guidelines(essay: &Essay, traits: &[TraitId], rubrics: &RubricSet) -> Result<String> {
    let mut parts = Vec::with_capacity(traits.len());
    for &t in traits {
        let r = rubric(rubrics, essay, t)?;
        let levels: Vec<String> = r.levels().iter().map(|(l, d)| format!("Score {l}: {d}")).collect();
        parts.push(format!(
            "{}\n{}",
            block("Trait", t.display_name()),
            block("Trait Rubric", &levels.join("\n"))
        ));
    }
    Ok(format!(
        "[Rubric guidelines]\n{}\n(end of [Rubric guidelines])",
        parts.join("\n\n")
    ))
}

/// The material blocks that precede the instructions.
fn sources(essay: &Essay, prompt_text: &str) -> (Vec<String>, &'static str) {
    let mut v = Vec::new();
    v.push(block("Prompt", prompt_text.trim_end()));
    match essay.excerpt() {
        Some(x) => {
            v.push(block("Excerpt", x.trim_end()));
            (v, "[Prompt] and [Excerpt]")
        }
        None => (v, "[Prompt]"),
    }
}

/// Renders the feedback-generation request for one essay.
///
/// Paragraphs are separated by one blank line and the text ends with the
/// answer-format line. Overall is excluded from scores and rubrics. When the
/// essay has no excerpt the `[Excerpt]` block and its mentions are dropped.
pub fn render_feedback_prompt(
    essay: &Essay,
    setting: GenerationSetting,
    prompt_text: &str,
    rubrics: &RubricSet,
) -> Result<String> {
    let traits: Vec<TraitId> = feedback_traits(essay.prompt_id()).collect();
    let (mut paras, provided) = sources(essay, prompt_text);
    paras.insert(0, String::from(OPENING));
    let essay_block = block("Essay", essay.text().trim_end());
    match setting {
        GenerationSetting::ScoreRubric => {
            paras.push(essay_block);
            paras.push(scores_block(essay, &traits)?);
            paras.push(rubric_descriptions(essay, &traits, rubrics)?);
            let listed = if essay.excerpt().is_some() {
                "[Prompt], [Excerpt], [Scores], and [Rubric descriptions]"
            } else {
                "[Prompt], [Scores], and [Rubric descriptions]"
            };
            paras.push(format!(
                "Refer to the provided {listed} to evaluate the given essay.\n\
                 Your task is to analyze the reason why the essay got certain scores for each trait based on the analysis of the essay."
            ));
            paras.push(String::from(NOTE));
            paras.push(String::from(Q_SCORE_RUBRIC));
        }
        GenerationSetting::ScoreOnly => {
            paras.push(essay_block);
            paras.push(format!(
                "Refer to the provided {provided} to evaluate the given essay. \
                 The following shows the scores of each trait provided by a human scorer."
            ));
            paras.push(scores_block(essay, &traits)?);
            paras.push(String::from(
                "Your task is to analyze the reason why the essay got certain scores for each trait.",
            ));
            paras.push(String::from(NOTE));
            paras.push(String::from(Q_SCORE_ONLY));
        }
        GenerationSetting::RubricOnly => {
            paras.push(rubric_guidelines(essay, &traits, rubrics)?);
            paras.push(format!("Refer to the provided {provided} to evaluate the given essay."));
            paras.push(essay_block);
            paras.push(String::from(NOTE));
            paras.push(String::from(Q_RUBRIC_ONLY));
        }
    }
    paras.push(String::from(ANSWER_FORMAT));
    Ok(paras.join("\n\n"))
}

/// Renders the LLM filtering request that asks a judge model to pick the
/// best (or worst) of the candidates for one trait.
pub fn render_filtering_prompt(
    essay: &Essay,
    trait_id: TraitId,
    mode: SelectionMode,
    candidates: &[&str],
    rubrics: &RubricSet,
) -> Result<String> {
    if candidates.is_empty() {
        return Err(Error::Render("no candidates".into()));
    }
    let should = match mode {
        SelectionMode::Highest => "should",
        SelectionMode::Lowest => "should not",
    };
    let conditions = format!(
        "1. The feedback {should} quote parts of the essay that are relevant to evaluating the given traits.\n\
         2. The feedback {should} include actionable revision suggestions for improving the essay.\n\
         3. The feedback {should} align with the score descriptions in the rubric."
    );
    let listed: Vec<String> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("\"feedback {}\": {}", i + 1, json_string(c)))
        .collect();
    let paras = [
        String::from(
            "You are an expert in filtering feedback data from multiple candidates based on specified conditions.\n\
             Read the following conditions and select the feedback that best satisfies them.",
        ),
        block("Condition", &conditions),
        block("Essay", essay.text().trim_end()),
        scores_block(essay, &[trait_id])?,
        rubric_descriptions(essay, &[trait_id], rubrics)?,
        String::from("[Feedback Candidates]"),
        listed.join("\n"),
        String::from("(end of [Feedback Candidates])"),
        String::from("Pick only one feedback without additional explanation:\nex) feedback 3"),
    ];
    Ok(paras.join("\n\n"))
}

/// JSON string literal for `s`.
pub fn json_string(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_default()
}

/// Request asking a small model to revise an essay with per-trait feedback.
pub fn render_revision_prompt(essay: &Essay, feedback: &[(TraitId, &str)]) -> String {
    let lines: Vec<String> = feedback
        .iter()
        .map(|(t, f)| format!("{}: {}", t.display_name(), f.trim()))
        .collect();
    [
        String::from(
            "You are a student revising your own essay. Rewrite the essay so that it addresses the feedback for each trait. \
             Keep the topic and the anonymization tokens (such as @PERSON1) unchanged. \
             Return only the revised essay without any explanation.",
        ),
        block("Essay", essay.text().trim_end()),
        block("Feedback", &lines.join("\n")),
    ]
    .join("\n\n")
}

/// Request asking a backend to list the essay segments each numbered
/// feedback sentence refers to.
pub fn render_extraction_prompt(essay_text: &str, feedback_sentences: &[&str]) -> String {
    let numbered: Vec<String> = feedback_sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{i}: {s}"))
        .collect();
    [
        String::from(
            "For each numbered feedback sentence below, copy every span of the essay that the sentence quotes or directly refers to. \
             Copy the spans exactly as they appear in the essay. Skip feedback sentences that do not refer to a specific part of the essay.",
        ),
        block("Essay", essay_text.trim_end()),
        block("Feedback sentences", &numbered.join("\n")),
        String::from(
            "Answer with a JSON array only, in the following format:\n\
             [{\"feedback_sentence\": 0, \"segment\": \"copied essay span\"}, ...]",
        ),
    ]
    .join("\n\n")
}

/// Request asking a scoring model for every trait score of an essay.
pub fn render_scoring_prompt(essay: &Essay, prompt_text: &str) -> String {
    let keys: Vec<String> = TraitId::PREDICTION_ORDER
        .iter()
        .filter(|t| essay.traits().contains(t))
        .map(|t| format!("\"{}\": score", t.label_key()))
        .collect();
    let (mut paras, _) = sources(essay, prompt_text);
    paras.insert(
        0,
        String::from("You are an essay scoring model. Score the essay on every listed trait."),
    );
    paras.push(block("Essay", essay.text().trim_end()));
    paras.push(format!(
        "Answer with a JSON object only, in the following format:\n{{{}}}",
        keys.join(", ")
    ));
    paras.join("\n\n")
}

/// Request asking an evaluator endpoint for one dimension score.
pub fn render_dimension_prompt(req: &ScoreRequest) -> String {
    let mut paras = Vec::new();
    let instruction = match req.dimension {
        Dimension::Specificity => "Rate how specifically the feedback refers to the essay.",
        Dimension::Helpfulness => "Rate how actionable the feedback is for revising the essay.",
        Dimension::Validity => "Give the probability that the feedback is entailed by the rubric description.",
    };
    paras.push(format!("{instruction} Answer with a single number only."));
    if let Some(e) = &req.essay_text {
        paras.push(block("Essay", e.trim_end()));
    }
    if let Some(r) = &req.rubric_description {
        paras.push(block("Rubric description", r.trim_end()));
    }
    paras.push(block("Feedback", req.feedback_text.trim_end()));
    paras.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PromptId, Rubric};
    use alloc::collections::BTreeMap;

    fn essay3() -> Essay {
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
            "e3",
            3,
            "The cyclist struggled. @CAPS1 heat hurt.",
            Some("Rough Road Ahead"),
            scores,
        )
        .unwrap()
    }

    fn rubrics3() -> RubricSet {
        let mut set = RubricSet::new();
        for t in feedback_traits(PromptId::new(3).unwrap()) {
            let levels: BTreeMap<i64, String> = (0..=3)
                .map(|l| (l, format!("{} level {l}.", t.display_name())))
                .collect();
            set.insert(Rubric::new(PromptId::new(3).unwrap(), t, levels).unwrap());
        }
        set
    }

    #[test]
    fn block_counts() {
        let e = essay3();
        let r = rubrics3();
        let sr = render_feedback_prompt(&e, GenerationSetting::ScoreRubric, "Write.", &r).unwrap();
        assert_eq!(sr.matches("[Scores]").count(), 3);
        assert_eq!(sr.matches("(end of [Scores])").count(), 1);
        assert!(sr.ends_with(ANSWER_FORMAT));
        let so = render_feedback_prompt(&e, GenerationSetting::ScoreOnly, "Write.", &RubricSet::new()).unwrap();
        assert!(!so.contains("Rubric"));
        let scores = so.split("[Scores]\n").nth(1).unwrap().split("\n(end").next().unwrap();
        assert_eq!(scores.lines().count(), 4);
        let ro = render_feedback_prompt(&e, GenerationSetting::RubricOnly, "Write.", &r).unwrap();
        assert!(!ro.contains("[Scores]"));
        assert_eq!(ro.matches("Score ").count(), 16);
    }

    #[test]
    fn missing_rubric_is_render_error() {
        let e = essay3();
        let err = render_feedback_prompt(&e, GenerationSetting::RubricOnly, "Write.", &RubricSet::new());
        assert!(matches!(err, Err(Error::Render(_))));
    }

    #[test]
    fn filtering_prompt_flips_conditions() {
        let e = essay3();
        let r = rubrics3();
        let hi = render_filtering_prompt(&e, TraitId::Content, SelectionMode::Highest, &["a", "b"], &r).unwrap();
        let lo = render_filtering_prompt(&e, TraitId::Content, SelectionMode::Lowest, &["a", "b"], &r).unwrap();
        assert_eq!(hi.matches(" should ").count(), 3);
        assert_eq!(lo.matches("should not").count(), 3);
        assert!(hi.contains("\"feedback 2\": \"b\""));
    }

    #[test]
    fn scoring_prompt_uses_prediction_order() {
        let p = render_scoring_prompt(&essay3(), "Write.");
        assert!(p.ends_with("{\"narrativity\": score, \"language\": score, \"prompt adherence\": score, \"content\": score, \"overall\": score}"));
    }
}
