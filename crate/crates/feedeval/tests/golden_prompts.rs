use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use feedeval::pipeline::render_request;
use feedeval::rubrics::{attach_excerpts, load_rubric_dir};
use feedeval_core::model::{Essay, GenerationSetting, TraitId};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    essay_id: String,
    prompt_id: i64,
    text: String,
    scores: BTreeMap<String, i64>,
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn fixture_essay() -> Essay {
    let f: Fixture = serde_json::from_str(&std::fs::read_to_string(golden_dir().join("essay.json")).unwrap()).unwrap();
    let scores = f.scores.iter().map(|(k, v)| (TraitId::parse(k).unwrap(), *v)).collect();
    Essay::new(f.essay_id, f.prompt_id, &f.text, None, scores).unwrap()
}

fn file_name(setting: GenerationSetting) -> &'static str {
    match setting {
        GenerationSetting::ScoreRubric => "score_rubric.txt",
        GenerationSetting::ScoreOnly => "score_only.txt",
        GenerationSetting::RubricOnly => "rubric_only.txt",
    }
}

/// Renders the fixture in every setting and compares with the stored files
/// byte for byte. Set FEEDEVAL_BLESS=1 to rewrite them after an intended
/// template change.
#[test]
fn generation_requests_match_goldens() {
    let materials = load_rubric_dir(&golden_dir()).unwrap();
    let essay = attach_excerpts(vec![fixture_essay()], &materials).unwrap().remove(0);
    let bless = std::env::var_os("FEEDEVAL_BLESS").is_some();
    for setting in GenerationSetting::ALL {
        let rendered = render_request(&essay, setting, &materials).unwrap();
        let path = golden_dir().join(file_name(setting));
        if bless {
            std::fs::write(&path, &rendered).unwrap();
            continue;
        }
        let expected = std::fs::read(&path).unwrap();
        assert!(
            rendered.as_bytes() == expected.as_slice(),
            "{setting:?} differs from {}:\n{rendered}",
            path.display()
        );
    }
}

#[test]
fn settings_differ_only_in_their_blocks() {
    let dir = golden_dir();
    let full = std::fs::read_to_string(dir.join("score_rubric.txt")).unwrap();
    let score_only = std::fs::read_to_string(dir.join("score_only.txt")).unwrap();
    let rubric_only = std::fs::read_to_string(dir.join("rubric_only.txt")).unwrap();
    assert!(full.contains("[Scores]") && full.contains("[Rubric descriptions]"));
    assert!(score_only.contains("[Scores]") && !score_only.contains("[Rubric descriptions]"));
    assert!(!rubric_only.contains("[Scores]") && rubric_only.contains("[Rubric guidelines]"));
    for text in [&full, &score_only, &rubric_only] {
        assert!(text.contains("[Excerpt]"));
    }
}
