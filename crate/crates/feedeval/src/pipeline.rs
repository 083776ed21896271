//! Scoring, selection, label emission, fold evaluation and revision.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use feedeval_core::folds::{assign_folds, qwk_report, FoldPrediction, QwkReport};
use feedeval_core::labels::{LabelFormat, LabelRecord, ScoreFeedbackLabel};
use feedeval_core::model::{feedback_traits, Essay, FeedbackCandidate, PromptId, RubricSet, TraitId};
use feedeval_core::prompts::render_feedback_prompt;
use feedeval_core::scoring::{Dimension, ScoreRequest};
use feedeval_core::selection::{
    select_scored, CandidateScores, DimensionTriple, DimensionWeights, SelectedFeedback, SelectionMode,
};
use feedeval_core::specificity::{
    link_extracted, speceval_pairs_from_scores, AlignmentParams, Extractor, SpecEvalPair,
};
use feedeval_core::text::segment_sentences;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendSet, DimensionScorer, EssayScorer, Reviser};
use crate::config::{ExtractorChoice, PipelineConfig};
use crate::error::{Error, Result};
use crate::generation::{generate_candidates, SampleFailure, SamplingPlan};
use crate::ingest::{ingest_essays, IngestReport};
use crate::io::{emit_jsonl, write_json};
use crate::manifest::Manifest;
use crate::rubrics::{attach_excerpts, load_rubric_dir, PromptMaterials};

/// Runs `f` over `items` on up to `workers` threads and returns the results
/// in input order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .expect("every slot is filled once the scope joins")
        })
        .collect()
}

/// Short file-name tag for a selection mode.
pub fn mode_tag(mode: SelectionMode) -> &'static str {
    match mode {
        SelectionMode::Highest => "high",
        SelectionMode::Lowest => "low",
    }
}

fn materials_for(materials: &BTreeMap<PromptId, PromptMaterials>, p: PromptId) -> Result<&PromptMaterials> {
    materials
        .get(&p)
        .ok_or_else(|| Error::Config(format!("no rubric file for prompt {p}")))
}

/// Renders the generation request for an essay.
pub fn render_request(
    essay: &Essay,
    setting: feedeval_core::model::GenerationSetting,
    materials: &BTreeMap<PromptId, PromptMaterials>,
) -> Result<String> {
    let m = materials_for(materials, essay.prompt_id())?;
    Ok(render_feedback_prompt(essay, setting, &m.prompt_text, &m.rubrics)?)
}

/// Raw dimension scores of each candidate. Dimensions with zero weight are
/// not requested and read as 0.
pub fn score_candidates(
    essay: &Essay,
    trait_id: TraitId,
    candidates: &[FeedbackCandidate],
    rubrics: &RubricSet,
    scorer: &dyn DimensionScorer,
    weights: &DimensionWeights,
) -> Result<Vec<DimensionTriple>> {
    let rubric = rubrics
        .get(trait_id)
        .ok_or_else(|| Error::Config(format!("no {trait_id} rubric for prompt {}", essay.prompt_id())))?;
    let level = essay
        .score(trait_id)
        .ok_or_else(|| Error::Ingest(format!("essay {} has no {trait_id} score", essay.essay_id())))?;
    let dims: Vec<Dimension> = Dimension::ALL.into_iter().filter(|d| weights.0.get(*d) > 0.0).collect();
    let total = candidates.len() * dims.len();
    let mut out = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let mut triple = DimensionTriple::new(0.0, 0.0, 0.0);
        for (k, &d) in dims.iter().enumerate() {
            let req = match d {
                Dimension::Specificity => ScoreRequest::specificity(essay.text(), &c.text),
                Dimension::Helpfulness => ScoreRequest::helpfulness(essay.text(), &c.text),
                Dimension::Validity => ScoreRequest::validity_with_levels(rubric.levels(), level, &c.text)?,
            };
            let raw = scorer.score(&req).map_err(|e| Error::Selection {
                essay_id: essay.essay_id().to_string(),
                trait_id,
                scored: i * dims.len() + k,
                total,
                message: format!("candidate {} {d}: {e}", c.sample_index),
            })?;
            triple.set(d, raw.value);
        }
        out.push(triple);
    }
    Ok(out)
}

/// Scores every trait's candidates once and selects under each mode.
/// The map must cover every non-Overall trait of the essay's prompt.
pub fn select_all(
    essay: &Essay,
    candidate_map: &BTreeMap<TraitId, Vec<FeedbackCandidate>>,
    rubrics: &RubricSet,
    scorer: &dyn DimensionScorer,
    weights: &DimensionWeights,
    modes: &[SelectionMode],
) -> Result<BTreeMap<SelectionMode, Vec<SelectedFeedback>>> {
    let traits: Vec<TraitId> = feedback_traits(essay.prompt_id()).collect();
    let missing: Vec<TraitId> = traits
        .iter()
        .copied()
        .filter(|t| !candidate_map.contains_key(t))
        .collect();
    if !missing.is_empty() {
        return Err(feedeval_core::Error::MissingTraits(missing).into());
    }
    if candidate_map.contains_key(&TraitId::Overall) {
        return Err(Error::Config("Overall has no feedback to select".into()));
    }
    let mut out: BTreeMap<SelectionMode, Vec<SelectedFeedback>> = BTreeMap::new();
    for t in traits {
        let cands = &candidate_map[&t];
        if cands.is_empty() {
            return Err(feedeval_core::Error::InvalidArgument(format!(
                "essay {}: no valid {t} candidates",
                essay.essay_id()
            ))
            .into());
        }
        let raw = score_candidates(essay, t, cands, rubrics, scorer, weights)?;
        for &mode in modes {
            out.entry(mode)
                .or_default()
                .push(select_scored(t, cands, &raw, weights, mode)?);
        }
    }
    Ok(out)
}

/// One line of the selection audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub essay_id: String,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub mode: SelectionMode,
    pub index: usize,
    pub weights: DimensionTriple,
    pub scores: CandidateScores,
}

impl AuditRecord {
    pub fn of(essay_id: &str, s: &SelectedFeedback, weights: &DimensionWeights) -> Self {
        AuditRecord {
            essay_id: essay_id.to_string(),
            trait_id: s.trait_id,
            mode: s.mode,
            index: s.index,
            weights: weights.0,
            scores: s.scores.clone(),
        }
    }
}

/// Builds the training label of an essay from its selections.
pub fn build_label(essay: &Essay, selections: &[SelectedFeedback]) -> Result<ScoreFeedbackLabel> {
    let feedback: BTreeMap<TraitId, String> = selections
        .iter()
        .map(|s| (s.trait_id, s.feedback.text.clone()))
        .collect();
    let label = ScoreFeedbackLabel::build(essay, &feedback)?;
    label.validate()?;
    Ok(label)
}

/// Labels of all essays that have selections, in essay order.
pub fn build_labels(
    essays: &[Essay],
    selections: &BTreeMap<String, Vec<SelectedFeedback>>,
) -> Result<Vec<(String, ScoreFeedbackLabel)>> {
    let mut out = Vec::new();
    for e in essays {
        if let Some(sel) = selections.get(e.essay_id()) {
            out.push((e.essay_id().to_string(), build_label(e, sel)?));
        }
    }
    Ok(out)
}

/// Writes labels as JSONL in the requested format.
pub fn emit_labels(
    labels: &[(String, ScoreFeedbackLabel)],
    format: LabelFormat,
    path: &Path,
) -> Result<crate::io::WriteReport> {
    emit_jsonl(
        labels.iter().map(|(id, l)| LabelRecord {
            essay_id: id,
            prompt_id: l.prompt_id(),
            label: l.view(format),
        }),
        path,
        "score_feedback_label",
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub essay_id: String,
    pub prompt_id: PromptId,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub assignments: Vec<FoldAssignment>,
    pub predictions: Vec<FoldPrediction>,
    pub report: QwkReport,
}

/// Assigns seeded prompt-stratified folds, asks the scoring model for every
/// held-out essay and reports QWK per (prompt, trait, fold).
pub fn run_folds(
    essays: &[Essay],
    k: usize,
    seed: u64,
    scorer: &dyn EssayScorer,
    materials: &BTreeMap<PromptId, PromptMaterials>,
    workers: usize,
) -> Result<FoldRun> {
    let prompts: Vec<PromptId> = essays.iter().map(Essay::prompt_id).collect();
    let folds = assign_folds(&prompts, k, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let assignments: Vec<FoldAssignment> = essays
        .iter()
        .zip(&folds)
        .map(|(e, &fold)| FoldAssignment {
            essay_id: e.essay_id().to_string(),
            prompt_id: e.prompt_id(),
            fold,
        })
        .collect();
    let indexed: Vec<(&Essay, usize)> = essays.iter().zip(folds.iter().copied()).collect();
    let predictions = parallel_map(&indexed, workers, |&(e, fold)| {
        let prompt_text = materials.get(&e.prompt_id()).map_or("", |m| m.prompt_text.as_str());
        let predicted = match scorer.score(e, prompt_text) {
            Ok(p) => p,
            Err(err) => {
                log::warn!("essay {}: scoring failed: {err}", e.essay_id());
                BTreeMap::new()
            }
        };
        FoldPrediction {
            essay_id: e.essay_id().to_string(),
            prompt_id: e.prompt_id(),
            fold,
            gold: e.human_scores().clone(),
            predicted,
        }
    });
    let report = qwk_report(&predictions, k)?;
    for c in report.cells.iter().filter(|c| c.warning.is_some()) {
        log::warn!(
            "prompt {} {} fold {}: skipped ({})",
            c.prompt_id,
            c.trait_id,
            c.fold,
            c.warning.as_deref().unwrap_or_default()
        );
    }
    Ok(FoldRun {
        assignments,
        predictions,
        report,
    })
}

/// Per-trait feedback texts keyed by essay id.
pub type FeedbackSet = BTreeMap<String, BTreeMap<TraitId, String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionDelta {
    pub essay_id: String,
    pub condition: SelectionMode,
    pub original: BTreeMap<TraitId, f64>,
    pub revised: BTreeMap<TraitId, f64>,
    pub delta: BTreeMap<TraitId, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionSkip {
    pub essay_id: String,
    pub condition: SelectionMode,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RevisionReport {
    pub deltas: Vec<RevisionDelta>,
    pub skipped: Vec<RevisionSkip>,
    /// Mean delta per condition and trait.
    pub mean_delta: BTreeMap<SelectionMode, BTreeMap<TraitId, f64>>,
}

/// Revises each essay with each condition's feedback, rescores the original
/// and the revision and records the per-trait change. Failures skip the
/// essay in that condition only.
pub fn run_revision(
    essays: &[Essay],
    feedback_sets: &BTreeMap<SelectionMode, FeedbackSet>,
    reviser: &dyn Reviser,
    scorer: &dyn EssayScorer,
    materials: &BTreeMap<PromptId, PromptMaterials>,
    workers: usize,
) -> Result<RevisionReport> {
    let results = parallel_map(essays, workers, |e| {
        let prompt_text = materials.get(&e.prompt_id()).map_or("", |m| m.prompt_text.as_str());
        let mut deltas = Vec::new();
        let mut skipped = Vec::new();
        let original = scorer.score(e, prompt_text);
        for (&cond, set) in feedback_sets {
            let skip = |reason: String| RevisionSkip {
                essay_id: e.essay_id().to_string(),
                condition: cond,
                reason,
            };
            let original = match &original {
                Ok(o) => o,
                Err(err) => {
                    skipped.push(skip(format!("scoring the original failed: {err}")));
                    continue;
                }
            };
            let Some(fb) = set.get(e.essay_id()) else {
                skipped.push(skip("no feedback for this essay".into()));
                continue;
            };
            let pairs: Vec<(TraitId, &str)> = fb.iter().map(|(t, s)| (*t, s.as_str())).collect();
            let revised = reviser
                .revise(e, &pairs)
                .and_then(|text| Ok(e.with_text(&text)?))
                .and_then(|r| scorer.score(&r, prompt_text));
            match revised {
                Ok(revised) => {
                    let delta = original
                        .iter()
                        .filter_map(|(t, o)| revised.get(t).map(|r| (*t, r - o)))
                        .collect();
                    deltas.push(RevisionDelta {
                        essay_id: e.essay_id().to_string(),
                        condition: cond,
                        original: original.clone(),
                        revised,
                        delta,
                    });
                }
                Err(err) => {
                    log::warn!("essay {} ({}): revision failed: {err}", e.essay_id(), mode_tag(cond));
                    skipped.push(skip(format!("revision failed: {err}")));
                }
            }
        }
        (deltas, skipped)
    });
    let mut report = RevisionReport::default();
    for (d, s) in results {
        report.deltas.extend(d);
        report.skipped.extend(s);
    }
    let mut sums: BTreeMap<(SelectionMode, TraitId), (f64, usize)> = BTreeMap::new();
    for d in &report.deltas {
        for (t, v) in &d.delta {
            let e = sums.entry((d.condition, *t)).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    for ((cond, t), (sum, n)) in sums {
        report.mean_delta.entry(cond).or_default().insert(t, sum / n as f64);
    }
    Ok(report)
}

/// A variant group that produced no SpecEval pairs, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecEvalSkip {
    pub essay_id: String,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub reason: String,
}

/// Groups variants by (essay, trait), scores their specificity and emits
/// strictly ordered pairs. With `extractor` set, references come from the
/// backend instead of deterministic matching.
pub fn build_speceval(
    essays: &[Essay],
    variants: &[FeedbackCandidate],
    params: &AlignmentParams,
    extractor: Option<&dyn DimensionScorer>,
) -> Result<(Vec<SpecEvalPair>, Vec<SpecEvalSkip>)> {
    let by_id: BTreeMap<&str, &Essay> = essays.iter().map(|e| (e.essay_id(), e)).collect();
    let mut groups: BTreeMap<(&str, TraitId), Vec<&FeedbackCandidate>> = BTreeMap::new();
    for v in variants {
        groups.entry((v.essay_id.as_str(), v.trait_id)).or_default().push(v);
    }
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for ((essay_id, trait_id), group) in groups {
        let skip = |reason: String| SpecEvalSkip {
            essay_id: essay_id.to_string(),
            trait_id,
            reason,
        };
        let Some(essay) = by_id.get(essay_id) else {
            skipped.push(skip("unknown essay".into()));
            continue;
        };
        if group.len() < 2 {
            skipped.push(skip(format!("{} variant(s), need at least 2", group.len())));
            continue;
        }
        let mut scored = Vec::with_capacity(group.len());
        for v in &group {
            let map = match extractor {
                None => feedeval_core::specificity::align_fuzzy(essay.text(), &v.text, params),
                Some(b) => {
                    let sentences: Vec<String> = segment_sentences(&v.text).into_iter().map(|s| s.text).collect();
                    let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
                    let segments = b.extract(essay.text(), &refs)?;
                    link_extracted(essay.text(), refs.len(), &segments, params)?
                }
            };
            scored.push((*v, map.score()?.f1));
        }
        let kind = if extractor.is_some() {
            Extractor::BackendExtract
        } else {
            Extractor::DeterministicFuzzy
        };
        pairs.extend(speceval_pairs_from_scores(essay_id, trait_id, &scored, kind)?);
    }
    Ok((pairs, skipped))
}

/// Per-essay products of generation and selection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EssayRun {
    pub candidates: Vec<FeedbackCandidate>,
    pub failures: Vec<SampleFailure>,
    pub selections: BTreeMap<SelectionMode, Vec<SelectedFeedback>>,
}

/// An essay dropped from label emission, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayError {
    pub essay_id: String,
    pub stage: String,
    pub message: String,
}

/// Renders, generates and selects for one essay.
pub fn process_essay(
    essay: &Essay,
    cfg: &PipelineConfig,
    backends: &BackendSet,
    materials: &BTreeMap<PromptId, PromptMaterials>,
) -> std::result::Result<EssayRun, EssayError> {
    let fail = |stage: &str, e: Error| EssayError {
        essay_id: essay.essay_id().to_string(),
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let request = render_request(essay, cfg.setting, materials).map_err(|e| fail("render", e))?;
    let plan = SamplingPlan {
        setting: cfg.setting,
        n: cfg.candidates,
        temperature: cfg.temperature,
        retries: cfg.generation_retries,
    };
    let generated =
        generate_candidates(essay, &request, &plan, backends.generator.as_ref()).map_err(|e| fail("generate", e))?;
    let weights = cfg.weights().map_err(|e| fail("select", e))?;
    let m = materials_for(materials, essay.prompt_id()).map_err(|e| fail("select", e))?;
    let selections = select_all(
        essay,
        &generated.candidates,
        &m.rubrics,
        backends.scorer.as_ref(),
        &weights,
        &cfg.modes,
    )
    .map_err(|e| fail("select", e))?;
    Ok(EssayRun {
        candidates: generated.candidates.into_values().flatten().collect(),
        failures: generated.failures,
        selections,
    })
}

/// Inputs shared by the pipeline stages.
pub struct Inputs {
    pub essays: Vec<Essay>,
    pub ingest: IngestReport,
    pub materials: BTreeMap<PromptId, PromptMaterials>,
    /// Input files with their manifest names.
    pub files: Vec<(String, PathBuf)>,
}

/// Ingests essays and loads rubric files named in the configuration.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let essays_path = cfg
        .data
        .essays
        .as_ref()
        .ok_or_else(|| Error::Config("data.essays is not set".into()))?;
    let rubrics_dir = cfg
        .data
        .rubrics_dir
        .as_ref()
        .ok_or_else(|| Error::Config("data.rubrics_dir is not set".into()))?;
    let (essays, ingest) = ingest_essays(essays_path, &cfg.data.columns)?;
    for e in &ingest.errors {
        log::warn!("ingest line {}: {}", e.line, e.message);
    }
    let materials = load_rubric_dir(rubrics_dir)?;
    let essays = attach_excerpts(essays, &materials)?;
    let mut files = vec![(format!("essays/{}", file_name(essays_path)), essays_path.clone())];
    for p in materials.keys() {
        for ext in ["toml", "json"] {
            let path = rubrics_dir.join(format!("prompt_{p}.{ext}"));
            if path.exists() {
                files.push((format!("rubrics/{}", file_name(&path)), path));
            }
        }
    }
    Ok(Inputs {
        essays,
        ingest,
        materials,
        files,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: Manifest,
    /// Checksum of the manifest file.
    pub manifest_hash: String,
    pub qwk: QwkReport,
    pub revision: Option<RevisionReport>,
    pub essay_errors: Vec<EssayError>,
}

/// Ingest, generate, select, emit labels, evaluate folds and optionally run
/// the revision experiment, then write the manifest last.
pub fn run(cfg: &PipelineConfig, backends: &BackendSet) -> Result<RunSummary> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Manifest::new("run", cfg.hash()?, cfg.seed);
    for (name, path) in &inputs.files {
        manifest.input(name.clone(), path)?;
    }
    log::info!(
        "{} essays ingested, {} rows rejected",
        inputs.essays.len(),
        inputs.ingest.errors.len()
    );
    manifest.output(
        "essays.jsonl",
        emit_jsonl(&inputs.essays, &out.join("essays.jsonl"), "essay")?,
    );
    manifest.output(
        "ingest_report.json",
        write_json(&inputs.ingest, &out.join("ingest_report.json"), "ingest_report")?,
    );

    let runs = parallel_map(&inputs.essays, cfg.concurrency, |e| {
        process_essay(e, cfg, backends, &inputs.materials)
    });
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    let mut audit = Vec::new();
    let mut essay_errors = Vec::new();
    let mut by_mode: BTreeMap<SelectionMode, BTreeMap<String, Vec<SelectedFeedback>>> = BTreeMap::new();
    let weights = cfg.weights()?;
    for (e, r) in inputs.essays.iter().zip(runs) {
        match r {
            Ok(run) => {
                candidates.extend(run.candidates);
                failures.extend(run.failures);
                for (mode, sels) in run.selections {
                    audit.extend(sels.iter().map(|s| AuditRecord::of(e.essay_id(), s, &weights)));
                    by_mode.entry(mode).or_default().insert(e.essay_id().to_string(), sels);
                }
            }
            Err(err) => {
                log::warn!("essay {} dropped at {}: {}", err.essay_id, err.stage, err.message);
                essay_errors.push(err);
            }
        }
    }
    manifest.output(
        "candidates.jsonl",
        emit_jsonl(&candidates, &out.join("candidates.jsonl"), "feedback_candidate")?,
    );
    manifest.output(
        "generation_failures.jsonl",
        emit_jsonl(&failures, &out.join("generation_failures.jsonl"), "sample_failure")?,
    );
    manifest.output(
        "selection_audit.jsonl",
        emit_jsonl(&audit, &out.join("selection_audit.jsonl"), "selection_audit")?,
    );
    manifest.output(
        "essay_errors.jsonl",
        emit_jsonl(&essay_errors, &out.join("essay_errors.jsonl"), "essay_error")?,
    );
    let mut feedback_sets: BTreeMap<SelectionMode, FeedbackSet> = BTreeMap::new();
    for (mode, sels) in &by_mode {
        let labels = build_labels(&inputs.essays, sels)?;
        let name = format!("labels_{}.jsonl", mode_tag(*mode));
        manifest.output(name.clone(), emit_labels(&labels, cfg.label_format, &out.join(&name))?);
        feedback_sets.insert(
            *mode,
            sels.iter()
                .map(|(id, s)| {
                    (
                        id.clone(),
                        s.iter().map(|x| (x.trait_id, x.feedback.text.clone())).collect(),
                    )
                })
                .collect(),
        );
    }

    let folds = run_folds(
        &inputs.essays,
        cfg.folds,
        cfg.seed,
        backends.essay_scorer.as_ref(),
        &inputs.materials,
        cfg.concurrency,
    )?;
    manifest.output(
        "folds.jsonl",
        emit_jsonl(&folds.assignments, &out.join("folds.jsonl"), "fold_assignment")?,
    );
    manifest.output(
        "predictions.jsonl",
        emit_jsonl(&folds.predictions, &out.join("predictions.jsonl"), "fold_prediction")?,
    );
    manifest.output(
        "qwk_report.json",
        write_json(&folds.report, &out.join("qwk_report.json"), "qwk_report")?,
    );

    let revision = if cfg.revision {
        let report = run_revision(
            &inputs.essays,
            &feedback_sets,
            backends.reviser.as_ref(),
            backends.essay_scorer.as_ref(),
            &inputs.materials,
            cfg.concurrency,
        )?;
        manifest.output(
            "revision.jsonl",
            emit_jsonl(&report.deltas, &out.join("revision.jsonl"), "revision_delta")?,
        );
        manifest.output(
            "revision_report.json",
            write_json(&report, &out.join("revision_report.json"), "revision_report")?,
        );
        Some(report)
    } else {
        None
    };
    let manifest_hash = manifest.write(&out.join("manifest.json"))?;
    Ok(RunSummary {
        manifest,
        manifest_hash,
        qwk: folds.report,
        revision,
        essay_errors,
    })
}

/// Reads the high/low feedback sets from label files written by a run.
pub fn feedback_from_selections(selections: &BTreeMap<String, Vec<SelectedFeedback>>) -> FeedbackSet {
    selections
        .iter()
        .map(|(id, s)| {
            (
                id.clone(),
                s.iter().map(|x| (x.trait_id, x.feedback.text.clone())).collect(),
            )
        })
        .collect()
}

/// Traits of `essay` that a selection set does not cover.
pub fn uncovered_traits(essay: &Essay, selections: &[SelectedFeedback]) -> Vec<TraitId> {
    let have: BTreeSet<TraitId> = selections.iter().map(|s| s.trait_id).collect();
    feedback_traits(essay.prompt_id())
        .filter(|t| !have.contains(t))
        .collect()
}

/// Chooses the extractor configured for SpecEval building.
pub fn speceval_extractor<'a>(cfg: &PipelineConfig, backends: &'a BackendSet) -> Option<&'a dyn DimensionScorer> {
    match cfg.alignment.extractor {
        ExtractorChoice::Deterministic => None,
        ExtractorChoice::Backend => Some(backends.scorer.as_ref()),
    }
}
