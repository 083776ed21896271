use std::path::Path;

use feedeval::backend::BackendSet;
use feedeval::config::{BackendConfig, BackendKind, PipelineConfig};
use feedeval::io::read_jsonl;
use feedeval::pipeline::run;
use feedeval::synthetic::write_corpus;
use feedeval_core::model::TraitId;
use feedeval_core::selection::SelectionMode;
use serde_json::Value;

fn config(dir: &Path, out: &str) -> PipelineConfig {
    let corpus = write_corpus(&dir.join("data"), 10, 5, 42).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.data.essays = Some(corpus.essays);
    cfg.data.rubrics_dir = Some(corpus.rubrics_dir);
    cfg.output_dir = dir.join(out);
    cfg
}

#[test]
fn mock_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "out");
    let summary = run(&cfg, &BackendSet::from_config(&cfg).unwrap()).unwrap();
    assert!(summary.essay_errors.is_empty());
    let out = &cfg.output_dir;
    let candidates: Vec<Value> = read_jsonl(&out.join("candidates.jsonl")).unwrap();
    // 10 essays per prompt: prompts 1-2 have 5 feedback traits, 3-6 have 4.
    assert_eq!(candidates.len(), 8 * 10 * (2 * 5 + 4 * 4));
    for tag in ["high", "low"] {
        let labels: Vec<Value> = read_jsonl(&out.join(format!("labels_{tag}.jsonl"))).unwrap();
        assert_eq!(labels.len(), 60);
    }
    let audit: Vec<Value> = read_jsonl(&out.join("selection_audit.jsonl")).unwrap();
    assert_eq!(audit.len(), 2 * 10 * (2 * 5 + 4 * 4));
    for cell in &summary.qwk.cells {
        assert_eq!(cell.qwk, Some(1.0), "{cell:?}");
    }
    assert_eq!(summary.qwk.overall_average, Some(1.0));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn manifest_hash_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(dir.path(), "a");
    let mut b = a.clone();
    b.output_dir = dir.path().join("b");
    let ha = run(&a, &BackendSet::from_config(&a).unwrap()).unwrap().manifest_hash;
    let hb = run(&b, &BackendSet::from_config(&b).unwrap()).unwrap().manifest_hash;
    assert_eq!(ha, hb);
}

#[test]
fn revision_with_keyed_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "out");
    cfg.revision = true;
    cfg.backends.revision_model = BackendConfig::of_kind(BackendKind::AppendMarker);
    cfg.backends.scoring_model = BackendConfig::of_kind(BackendKind::Keyed);
    let report = run(&cfg, &BackendSet::from_config(&cfg).unwrap())
        .unwrap()
        .revision
        .unwrap();
    assert!(report.skipped.is_empty());
    assert_eq!(report.deltas.len(), 120);
    for mode in [SelectionMode::Highest, SelectionMode::Lowest] {
        for (t, d) in &report.mean_delta[&mode] {
            assert_eq!(*d, 1.0, "{t}");
        }
        assert!(report.mean_delta[&mode].contains_key(&TraitId::Overall));
    }
}
