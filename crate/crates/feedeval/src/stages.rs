//! One function per CLI stage. Each reads the previous stage's artifacts
//! from the output directory, writes its own and records a manifest named
//! `manifest.<stage>.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use feedeval_core::datasets::{
    build_helpfulness_pairs, build_validity_nli, RankExpansion, SourceRecord, ValidityRecord,
};
use feedeval_core::folds::{qwk_report, FoldPrediction};
use feedeval_core::metrics::{pairwise_alignment, AlignmentReport, PairwiseJudgment};
use feedeval_core::model::{feedback_traits, Essay, FeedbackCandidate, GenerationSetting, TraitId};
use feedeval_core::selection::{select_scored, DimensionTriple, SelectedFeedback, SelectionMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::BackendSet;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::generation::{generate_candidates, SamplingPlan};
use crate::io::{emit_jsonl, read_jsonl, sha256_hex, write_json};
use crate::manifest::Manifest;
use crate::pipeline::{
    build_labels, build_speceval, emit_labels, feedback_from_selections, load_inputs, mode_tag, parallel_map,
    render_request, run_folds, run_revision, score_candidates, speceval_extractor, AuditRecord, EssayError,
    FeedbackSet, Inputs,
};

/// Raw dimension scores of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub essay_id: String,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub sample_index: usize,
    pub raw: DimensionTriple,
}

/// A rendered generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub essay_id: String,
    pub setting: GenerationSetting,
    pub prompt: String,
}

fn out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn start(cfg: &PipelineConfig, command: &str) -> Result<Manifest> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    Ok(Manifest::new(command, cfg.hash()?, cfg.seed))
}

fn finish(m: &Manifest, dir: &Path) -> Result<String> {
    m.write(&dir.join(format!("manifest.{}.json", m.command)))
}

fn with_inputs(cfg: &PipelineConfig, m: &mut Manifest) -> Result<Inputs> {
    let inputs = load_inputs(cfg)?;
    for (name, path) in &inputs.files {
        m.input(name.clone(), path)?;
    }
    Ok(inputs)
}

fn record_input(m: &mut Manifest, path: &Path) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    m.input(name, path)
}

/// Ingests essays and writes them with the ingestion report.
pub fn ingest(cfg: &PipelineConfig) -> Result<String> {
    let mut m = start(cfg, "ingest")?;
    let inputs = with_inputs(cfg, &mut m)?;
    m.output(
        "essays.jsonl",
        emit_jsonl(&inputs.essays, &out(cfg, "essays.jsonl"), "essay")?,
    );
    m.output(
        "ingest_report.json",
        write_json(&inputs.ingest, &out(cfg, "ingest_report.json"), "ingest_report")?,
    );
    finish(&m, &cfg.output_dir)
}

/// Renders one essay's request, or writes every request to requests.jsonl
/// when `essay_id` is absent.
pub fn render(cfg: &PipelineConfig, essay_id: Option<&str>) -> Result<Option<String>> {
    let inputs = load_inputs(cfg)?;
    if let Some(id) = essay_id {
        let essay = inputs
            .essays
            .iter()
            .find(|e| e.essay_id() == id)
            .ok_or_else(|| Error::Config(format!("no essay {id:?}")))?;
        return render_request(essay, cfg.setting, &inputs.materials).map(Some);
    }
    let mut m = start(cfg, "render")?;
    for (name, path) in &inputs.files {
        m.input(name.clone(), path)?;
    }
    let records = inputs
        .essays
        .iter()
        .map(|e| {
            Ok(RequestRecord {
                essay_id: e.essay_id().to_string(),
                setting: cfg.setting,
                prompt: render_request(e, cfg.setting, &inputs.materials)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    m.output(
        "requests.jsonl",
        emit_jsonl(&records, &out(cfg, "requests.jsonl"), "request")?,
    );
    finish(&m, &cfg.output_dir)?;
    Ok(None)
}

/// Samples candidates for every essay.
pub fn generate(cfg: &PipelineConfig, backends: &BackendSet) -> Result<String> {
    let mut m = start(cfg, "generate")?;
    let inputs = with_inputs(cfg, &mut m)?;
    let plan = SamplingPlan {
        setting: cfg.setting,
        n: cfg.candidates,
        temperature: cfg.temperature,
        retries: cfg.generation_retries,
    };
    let results = parallel_map(&inputs.essays, cfg.concurrency, |e| {
        let request = render_request(e, cfg.setting, &inputs.materials)?;
        generate_candidates(e, &request, &plan, backends.generator.as_ref())
    });
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        let o = r?;
        candidates.extend(o.candidates.into_values().flatten());
        failures.extend(o.failures);
    }
    m.output(
        "candidates.jsonl",
        emit_jsonl(&candidates, &out(cfg, "candidates.jsonl"), "feedback_candidate")?,
    );
    m.output(
        "generation_failures.jsonl",
        emit_jsonl(&failures, &out(cfg, "generation_failures.jsonl"), "sample_failure")?,
    );
    finish(&m, &cfg.output_dir)
}

type Grouped = BTreeMap<String, BTreeMap<TraitId, Vec<FeedbackCandidate>>>;

fn group_candidates(candidates: Vec<FeedbackCandidate>) -> Grouped {
    let mut g: Grouped = BTreeMap::new();
    for c in candidates {
        g.entry(c.essay_id.clone())
            .or_default()
            .entry(c.trait_id)
            .or_default()
            .push(c);
    }
    for traits in g.values_mut() {
        for v in traits.values_mut() {
            v.sort_by_key(|c| c.sample_index);
        }
    }
    g
}

fn candidates_path(cfg: &PipelineConfig, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| out(cfg, "candidates.jsonl"), Path::to_path_buf)
}

/// Scores every candidate on the configured dimensions.
pub fn score(cfg: &PipelineConfig, backends: &BackendSet, candidates: Option<&Path>) -> Result<String> {
    let mut m = start(cfg, "score")?;
    let inputs = with_inputs(cfg, &mut m)?;
    let cpath = candidates_path(cfg, candidates);
    record_input(&mut m, &cpath)?;
    let grouped = group_candidates(read_jsonl(&cpath)?);
    let weights = cfg.weights()?;
    let by_id: BTreeMap<&str, &Essay> = inputs.essays.iter().map(|e| (e.essay_id(), e)).collect();
    let jobs: Vec<(&Essay, TraitId, &Vec<FeedbackCandidate>)> = grouped
        .iter()
        .filter_map(|(id, traits)| by_id.get(id.as_str()).map(|e| (*e, traits)))
        .flat_map(|(e, traits)| traits.iter().map(move |(t, c)| (e, *t, c)))
        .collect();
    let results = parallel_map(&jobs, cfg.concurrency, |(e, t, cands)| {
        let rubrics = &inputs
            .materials
            .get(&e.prompt_id())
            .ok_or_else(|| Error::Config(format!("no rubric file for prompt {}", e.prompt_id())))?
            .rubrics;
        let raw = score_candidates(e, *t, cands, rubrics, backends.scorer.as_ref(), &weights)?;
        Ok::<_, Error>(
            cands
                .iter()
                .zip(raw)
                .map(|(c, raw)| ScoreRecord {
                    essay_id: c.essay_id.clone(),
                    trait_id: c.trait_id,
                    sample_index: c.sample_index,
                    raw,
                })
                .collect::<Vec<_>>(),
        )
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    m.output(
        "scores.jsonl",
        emit_jsonl(&records, &out(cfg, "scores.jsonl"), "candidate_scores")?,
    );
    finish(&m, &cfg.output_dir)
}

/// Selects per mode from stored candidates and scores.
pub fn select(cfg: &PipelineConfig, candidates: Option<&Path>, scores: Option<&Path>) -> Result<String> {
    let mut m = start(cfg, "select")?;
    let inputs = with_inputs(cfg, &mut m)?;
    let cpath = candidates_path(cfg, candidates);
    let spath = scores.map_or_else(|| out(cfg, "scores.jsonl"), Path::to_path_buf);
    record_input(&mut m, &cpath)?;
    record_input(&mut m, &spath)?;
    let grouped = group_candidates(read_jsonl(&cpath)?);
    let mut raw: BTreeMap<(String, TraitId, usize), DimensionTriple> = BTreeMap::new();
    for r in read_jsonl::<ScoreRecord>(&spath)? {
        raw.insert((r.essay_id, r.trait_id, r.sample_index), r.raw);
    }
    let weights = cfg.weights()?;
    let mut audit = Vec::new();
    let mut errors = Vec::new();
    let mut by_mode: BTreeMap<SelectionMode, Vec<Vec<SelectedFeedback>>> = BTreeMap::new();
    for e in &inputs.essays {
        let result = (|| -> Result<BTreeMap<SelectionMode, Vec<SelectedFeedback>>> {
            let traits = grouped.get(e.essay_id());
            let missing: Vec<TraitId> = feedback_traits(e.prompt_id())
                .filter(|t| traits.and_then(|m| m.get(t)).is_none_or(Vec::is_empty))
                .collect();
            if !missing.is_empty() {
                return Err(feedeval_core::Error::MissingTraits(missing).into());
            }
            let traits = traits.ok_or_else(|| Error::Config("unreachable: traits checked above".into()))?;
            let mut sel: BTreeMap<SelectionMode, Vec<SelectedFeedback>> = BTreeMap::new();
            for t in feedback_traits(e.prompt_id()) {
                let cands = &traits[&t];
                let scores = cands
                    .iter()
                    .map(|c| {
                        raw.get(&(c.essay_id.clone(), t, c.sample_index))
                            .copied()
                            .ok_or_else(|| {
                                Error::Config(format!("no scores for {} {t} sample {}", c.essay_id, c.sample_index))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                for &mode in &cfg.modes {
                    sel.entry(mode)
                        .or_default()
                        .push(select_scored(t, cands, &scores, &weights, mode)?);
                }
            }
            Ok(sel)
        })();
        match result {
            Ok(sel) => {
                for (mode, s) in sel {
                    audit.extend(s.iter().map(|x| AuditRecord::of(e.essay_id(), x, &weights)));
                    by_mode.entry(mode).or_default().push(s);
                }
            }
            Err(err) => {
                log::warn!("essay {}: {err}", e.essay_id());
                errors.push(EssayError {
                    essay_id: e.essay_id().to_string(),
                    stage: "select".into(),
                    message: err.to_string(),
                });
            }
        }
    }
    for (mode, sels) in &by_mode {
        let name = format!("selected_{}.jsonl", mode_tag(*mode));
        m.output(
            name.clone(),
            emit_jsonl(sels.iter().flatten(), &out(cfg, &name), "selected_feedback")?,
        );
    }
    m.output(
        "selection_audit.jsonl",
        emit_jsonl(&audit, &out(cfg, "selection_audit.jsonl"), "selection_audit")?,
    );
    m.output(
        "essay_errors.jsonl",
        emit_jsonl(&errors, &out(cfg, "essay_errors.jsonl"), "essay_error")?,
    );
    finish(&m, &cfg.output_dir)
}

fn read_selected(
    cfg: &PipelineConfig,
    m: &mut Manifest,
) -> Result<BTreeMap<SelectionMode, BTreeMap<String, Vec<SelectedFeedback>>>> {
    let mut out_map = BTreeMap::new();
    for &mode in &cfg.modes {
        let path = out(cfg, &format!("selected_{}.jsonl", mode_tag(mode)));
        record_input(m, &path)?;
        let mut per_essay: BTreeMap<String, Vec<SelectedFeedback>> = BTreeMap::new();
        for s in read_jsonl::<SelectedFeedback>(&path)? {
            per_essay.entry(s.feedback.essay_id.clone()).or_default().push(s);
        }
        out_map.insert(mode, per_essay);
    }
    Ok(out_map)
}

/// Writes training labels from stored selections.
pub fn emit_label_files(cfg: &PipelineConfig) -> Result<String> {
    let mut m = start(cfg, "emit-labels")?;
    let inputs = with_inputs(cfg, &mut m)?;
    for (mode, sels) in read_selected(cfg, &mut m)? {
        let labels = build_labels(&inputs.essays, &sels)?;
        let name = format!("labels_{}.jsonl", mode_tag(mode));
        m.output(name.clone(), emit_labels(&labels, cfg.label_format, &out(cfg, &name))?);
    }
    finish(&m, &cfg.output_dir)
}

/// Writes the seeded prompt-stratified fold split.
pub fn folds(cfg: &PipelineConfig) -> Result<String> {
    let mut m = start(cfg, "folds")?;
    let inputs = with_inputs(cfg, &mut m)?;
    let prompts: Vec<_> = inputs.essays.iter().map(Essay::prompt_id).collect();
    let split = feedeval_core::folds::assign_folds(&prompts, cfg.folds, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let records: Vec<_> = inputs
        .essays
        .iter()
        .zip(split)
        .map(|(e, fold)| crate::pipeline::FoldAssignment {
            essay_id: e.essay_id().to_string(),
            prompt_id: e.prompt_id(),
            fold,
        })
        .collect();
    m.output(
        "folds.jsonl",
        emit_jsonl(&records, &out(cfg, "folds.jsonl"), "fold_assignment")?,
    );
    finish(&m, &cfg.output_dir)
}

/// QWK per (prompt, trait, fold). With `predictions` the stored
/// predictions are evaluated; otherwise the scoring model is queried.
pub fn eval_qwk(cfg: &PipelineConfig, backends: &BackendSet, predictions: Option<&Path>) -> Result<String> {
    let mut m = start(cfg, "eval-qwk")?;
    let report = match predictions {
        Some(path) => {
            record_input(&mut m, path)?;
            let preds: Vec<FoldPrediction> = read_jsonl(path)?;
            qwk_report(&preds, cfg.folds)?
        }
        None => {
            let inputs = with_inputs(cfg, &mut m)?;
            let run = run_folds(
                &inputs.essays,
                cfg.folds,
                cfg.seed,
                backends.essay_scorer.as_ref(),
                &inputs.materials,
                cfg.concurrency,
            )?;
            m.output(
                "predictions.jsonl",
                emit_jsonl(&run.predictions, &out(cfg, "predictions.jsonl"), "fold_prediction")?,
            );
            run.report
        }
    };
    m.output(
        "qwk_report.json",
        write_json(&report, &out(cfg, "qwk_report.json"), "qwk_report")?,
    );
    finish(&m, &cfg.output_dir)
}

/// Alignment of predicted with gold pairwise preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub overall: AlignmentReport,
    pub by_dimension: BTreeMap<String, AlignmentReport>,
}

pub fn eval_alignment(input: &Path, out_dir: &Path) -> Result<String> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut m = Manifest::new("eval-alignment", sha256_hex(input.to_string_lossy().as_bytes()), 0);
    record_input(&mut m, input)?;
    let judgments: Vec<PairwiseJudgment> = read_jsonl(input)?;
    let mut groups: BTreeMap<String, Vec<PairwiseJudgment>> = BTreeMap::new();
    for j in &judgments {
        groups
            .entry(j.dimension.name().to_string())
            .or_default()
            .push(j.clone());
    }
    let summary = AlignmentSummary {
        overall: pairwise_alignment(&judgments)?,
        by_dimension: groups
            .into_iter()
            .map(|(k, v)| Ok((k, pairwise_alignment(&v)?)))
            .collect::<Result<_>>()?,
    };
    m.output(
        "alignment_report.json",
        write_json(&summary, &out_dir.join("alignment_report.json"), "alignment_report")?,
    );
    finish(&m, out_dir)
}

/// SpecEval pairs from feedback variants (candidate JSONL).
pub fn speceval(cfg: &PipelineConfig, backends: &BackendSet, variants: &Path) -> Result<String> {
    let mut m = start(cfg, "build-speceval")?;
    let inputs = with_inputs(cfg, &mut m)?;
    record_input(&mut m, variants)?;
    let vs: Vec<FeedbackCandidate> = read_jsonl(variants)?;
    let (pairs, skipped) = build_speceval(
        &inputs.essays,
        &vs,
        &cfg.alignment.params(),
        speceval_extractor(cfg, backends),
    )?;
    m.output(
        "speceval.jsonl",
        emit_jsonl(&pairs, &out(cfg, "speceval.jsonl"), "speceval_pair")?,
    );
    m.output(
        "speceval_skipped.jsonl",
        emit_jsonl(&skipped, &out(cfg, "speceval_skipped.jsonl"), "speceval_skip")?,
    );
    finish(&m, &cfg.output_dir)
}

pub fn helpfulness(input: &Path, expansion: RankExpansion, out_dir: &Path) -> Result<String> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut m = Manifest::new("build-helpfulness", sha256_hex(format!("{expansion:?}").as_bytes()), 0);
    record_input(&mut m, input)?;
    let records: Vec<SourceRecord> = read_jsonl(input)?;
    let build = build_helpfulness_pairs(&records, expansion);
    log::info!(
        "{} pairs, {} records skipped, {} duplicates dropped",
        build.pairs.len(),
        build.skipped.len(),
        build.duplicates
    );
    m.output(
        "helpfulness_pairs.jsonl",
        emit_jsonl(
            &build.pairs,
            &out_dir.join("helpfulness_pairs.jsonl"),
            "preference_pair",
        )?,
    );
    m.output(
        "helpfulness_skipped.jsonl",
        emit_jsonl(
            &build.skipped,
            &out_dir.join("helpfulness_skipped.jsonl"),
            "skipped_record",
        )?,
    );
    finish(&m, out_dir)
}

pub fn validity(input: &Path, seed: u64, out_dir: &Path) -> Result<String> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut m = Manifest::new("build-validity", sha256_hex(&seed.to_le_bytes()), seed);
    record_input(&mut m, input)?;
    let records: Vec<ValidityRecord> = read_jsonl(input)?;
    let build = build_validity_nli(&records, &mut ChaCha8Rng::seed_from_u64(seed));
    m.output(
        "validity_nli.jsonl",
        emit_jsonl(&build.examples, &out_dir.join("validity_nli.jsonl"), "nli_example")?,
    );
    m.output(
        "validity_skipped.jsonl",
        emit_jsonl(
            &build.skipped,
            &out_dir.join("validity_skipped.jsonl"),
            "skipped_record",
        )?,
    );
    finish(&m, out_dir)
}

/// Revision experiment over stored selections.
pub fn revise(cfg: &PipelineConfig, backends: &BackendSet) -> Result<String> {
    let mut m = start(cfg, "revise")?;
    let inputs = with_inputs(cfg, &mut m)?;
    let sets: BTreeMap<SelectionMode, FeedbackSet> = read_selected(cfg, &mut m)?
        .iter()
        .map(|(mode, s)| (*mode, feedback_from_selections(s)))
        .collect();
    let report = run_revision(
        &inputs.essays,
        &sets,
        backends.reviser.as_ref(),
        backends.essay_scorer.as_ref(),
        &inputs.materials,
        cfg.concurrency,
    )?;
    m.output(
        "revision.jsonl",
        emit_jsonl(&report.deltas, &out(cfg, "revision.jsonl"), "revision_delta")?,
    );
    m.output(
        "revision_report.json",
        write_json(&report, &out(cfg, "revision_report.json"), "revision_report")?,
    );
    finish(&m, &cfg.output_dir)
}
