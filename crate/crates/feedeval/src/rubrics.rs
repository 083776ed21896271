//! Per-prompt rubric files.
//!
//! One document per prompt named `prompt_<id>.toml` or `prompt_<id>.json`.
//! Top-level keys are trait names whose values map integer levels to
//! descriptions; the optional `prompt_text` and `excerpt` keys hold the
//! writing prompt and its source passage.
//!
//! ```toml
//! prompt_text = "Write a letter to your local newspaper..."
//! [content]
//! 1 = "Ideas are absent or unclear."
//! 2 = "..."
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use feedeval_core::model::{Essay, PromptId, Rubric, RubricSet, TraitId};
use serde_json::Value;

use crate::error::{Error, Result};

/// Prompt text, optional excerpt and rubrics of one prompt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptMaterials {
    pub prompt_text: String,
    pub excerpt: Option<String>,
    pub rubrics: RubricSet,
}

fn parse_value(prompt: PromptId, doc: Value, origin: &str) -> Result<PromptMaterials> {
    let bad = |m: String| Error::Config(format!("{origin}: {m}"));
    let Value::Object(map) = doc else {
        return Err(bad("top level must be a table".into()));
    };
    let mut out = PromptMaterials::default();
    for (key, value) in map {
        match key.as_str() {
            "prompt_text" => {
                out.prompt_text = value
                    .as_str()
                    .ok_or_else(|| bad("prompt_text must be a string".into()))?
                    .to_string();
            }
            "excerpt" => {
                let x = value.as_str().ok_or_else(|| bad("excerpt must be a string".into()))?;
                out.excerpt = Some(x.to_string()).filter(|x| !x.trim().is_empty());
            }
            _ => {
                let t = TraitId::parse(&key).map_err(|e| bad(e.to_string()))?;
                let Value::Object(levels) = value else {
                    return Err(bad(format!("{key}: levels must be a table")));
                };
                let mut parsed = BTreeMap::new();
                for (lk, lv) in levels {
                    let level: i64 = lk
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("{key}: level {lk:?} is not an integer")))?;
                    let desc = lv
                        .as_str()
                        .ok_or_else(|| bad(format!("{key}: level {lk} must be a string")))?;
                    parsed.insert(level, desc.to_string());
                }
                let rubric = Rubric::new(prompt, t, parsed).map_err(|e| bad(format!("{key}: {e}")))?;
                if out.rubrics.insert(rubric).is_some() {
                    return Err(bad(format!("{t} appears twice")));
                }
            }
        }
    }
    Ok(out)
}

/// Parses one rubric document; `format` is `toml` or `json`.
pub fn parse_rubric_document(prompt: PromptId, text: &str, format: &str, origin: &str) -> Result<PromptMaterials> {
    let doc: Value = match format {
        "toml" => {
            let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
            serde_json::to_value(table)?
        }
        "json" => serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?,
        other => return Err(Error::Config(format!("{origin}: unsupported rubric format {other}"))),
    };
    parse_value(prompt, doc, origin)
}

/// Loads every `prompt_<id>.{toml,json}` in `dir`.
pub fn load_rubric_dir(dir: &Path) -> Result<BTreeMap<PromptId, PromptMaterials>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let Some(id) = stem.strip_prefix("prompt_") else {
            continue;
        };
        if ext != "toml" && ext != "json" {
            continue;
        }
        let id: i64 = id
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad prompt number", path.display())))?;
        let prompt = PromptId::new(id)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m = parse_rubric_document(prompt, &text, ext, &path.display().to_string())?;
        if out.insert(prompt, m).is_some() {
            return Err(Error::Config(format!("prompt {prompt} has two rubric files")));
        }
    }
    Ok(out)
}

/// Gives each essay without an excerpt the excerpt of its prompt, if any.
pub fn attach_excerpts(essays: Vec<Essay>, materials: &BTreeMap<PromptId, PromptMaterials>) -> Result<Vec<Essay>> {
    essays
        .into_iter()
        .map(|e| {
            match (
                e.excerpt(),
                materials.get(&e.prompt_id()).and_then(|m| m.excerpt.as_deref()),
            ) {
                (None, Some(x)) => Ok(Essay::new(
                    e.essay_id(),
                    e.prompt_id().get() as i64,
                    e.text(),
                    Some(x),
                    e.human_scores().clone(),
                )?),
                _ => Ok(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
prompt_text = "Describe the setting."
excerpt = "Rough Road Ahead"
[content]
0 = "No content."
1 = "Little content."
2 = "Some content."
3 = "Full content."
"#;

    #[test]
    fn toml_and_json_agree() {
        let p = PromptId::new(3).unwrap();
        let a = parse_rubric_document(p, DOC, "toml", "a").unwrap();
        let json = r#"{"prompt_text": "Describe the setting.", "excerpt": "Rough Road Ahead",
            "Content": {"0": "No content.", "1": "Little content.", "2": "Some content.", "3": "Full content."}}"#;
        let b = parse_rubric_document(p, json, "json", "b").unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.rubrics.get(TraitId::Content).unwrap().description(2),
            Some("Some content.")
        );
    }

    #[test]
    fn structural_errors() {
        let p = PromptId::new(3).unwrap();
        let gap = "[content]\n0 = \"a\"\n1 = \"b\"\n3 = \"d\"\n";
        assert!(parse_rubric_document(p, gap, "toml", "x").is_err());
        let overall = "[overall]\n0 = \"a\"\n1 = \"b\"\n2 = \"c\"\n3 = \"d\"\n";
        assert!(parse_rubric_document(p, overall, "toml", "x").is_err());
        assert!(parse_rubric_document(p, "[colour]\n1 = \"a\"", "toml", "x").is_err());
    }

    #[test]
    fn directory_loading() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("prompt_3.toml"), DOC).unwrap();
        std::fs::write(dir.path().join("README.txt"), "ignored").unwrap();
        let m = load_rubric_dir(dir.path()).unwrap();
        assert_eq!(m.len(), 1);
        let e = Essay::new("e", 3, "Text.", None, BTreeMap::new()).unwrap();
        let e = attach_excerpts(vec![e], &m).unwrap().remove(0);
        assert_eq!(e.excerpt(), Some("Rough Road Ahead"));
    }
}
