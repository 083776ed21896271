//! Pipeline configuration loaded from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use feedeval_core::labels::LabelFormat;
use feedeval_core::model::{GenerationSetting, TraitId};
use feedeval_core::scoring::Dimension;
use feedeval_core::selection::{DimensionWeights, SelectionMode};
use feedeval_core::specificity::AlignmentParams;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::sha256_hex;

/// Which implementation serves a backend role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Remote chat-completion endpoint.
    Endpoint,
    /// Deterministic hash-keyed stand-in.
    Mock,
    /// Offline rule-based scorer (dimension scorer only).
    Heuristic,
    /// Essay scorer returning the human scores.
    GoldEcho,
    /// Essay scorer returning `constant` for every trait.
    Constant,
    /// Essay scorer returning the human score plus one when the text contains `marker`.
    Keyed,
    /// Reviser returning the essay unchanged.
    Identity,
    /// Reviser appending `marker` to the essay.
    AppendMarker,
}

/// One backend role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer credential.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    /// Dotted path of a numeric field in the response document. When unset
    /// the score is read as a decimal literal from the message content.
    pub structured_field: Option<String>,
    pub max_tokens: Option<u32>,
    pub constant: Option<f64>,
    pub marker: Option<String>,
    /// Fixed answer document for the mock generator; when unset it varies
    /// its feedback per sample.
    pub fixed_document: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            url: None,
            model: None,
            api_key_env: None,
            timeout_ms: 60_000,
            max_attempts: 3,
            base_delay_ms: 500,
            structured_field: None,
            max_tokens: None,
            constant: None,
            marker: None,
            fixed_document: None,
        }
    }
}

impl BackendConfig {
    pub fn of_kind(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub feedback_generator: BackendConfig,
    pub scorer: BackendConfig,
    pub revision_model: BackendConfig,
    pub scoring_model: BackendConfig,
}

impl Default for Backends {
    fn default() -> Self {
        Backends {
            feedback_generator: BackendConfig::of_kind(BackendKind::Mock),
            scorer: BackendConfig::of_kind(BackendKind::Mock),
            revision_model: BackendConfig::of_kind(BackendKind::Identity),
            scoring_model: BackendConfig::of_kind(BackendKind::GoldEcho),
        }
    }
}

/// Column names of the essay TSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub essay_id: String,
    pub prompt_id: String,
    pub text: String,
    pub excerpt: Option<String>,
    /// Column name to trait. When empty every other header that names a
    /// trait (for example `Word Choice` or `sentence_fluency`) is used.
    pub traits: BTreeMap<String, TraitId>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            essay_id: "essay_id".into(),
            prompt_id: "essay_set".into(),
            text: "essay".into(),
            excerpt: None,
            traits: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Essay file: `.tsv` in the ASAP++ layout or `.jsonl` of essay records.
    pub essays: Option<PathBuf>,
    /// Directory of `prompt_<id>.toml` or `prompt_<id>.json` files.
    pub rubrics_dir: Option<PathBuf>,
    pub columns: ColumnMap,
}

/// Where essay-reference links come from when building SpecEval pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorChoice {
    #[default]
    Deterministic,
    /// Ask the scorer endpoint to extract referenced segments.
    Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub theta: Option<f64>,
    pub ngram: Option<usize>,
    pub extractor: ExtractorChoice,
}

impl AlignmentConfig {
    pub fn params(&self) -> AlignmentParams {
        let d = AlignmentParams::default();
        AlignmentParams {
            theta: self.theta.unwrap_or(d.theta),
            ngram: self.ngram.unwrap_or(d.ngram),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Feedback candidates per essay and trait.
    pub candidates: usize,
    pub temperature: f64,
    pub folds: usize,
    pub setting: GenerationSetting,
    pub modes: Vec<SelectionMode>,
    /// Dimensions averaged during selection.
    pub dimensions: Vec<Dimension>,
    pub label_format: LabelFormat,
    pub output_dir: PathBuf,
    /// Essays processed at once, which also bounds in-flight endpoint requests.
    pub concurrency: usize,
    /// Extra generation attempts for a sample whose answer cannot be parsed.
    pub generation_retries: u32,
    pub revision_max_tokens: u32,
    /// Run the revision experiment at the end of `run`.
    pub revision: bool,
    pub data: DataConfig,
    pub alignment: AlignmentConfig,
    pub backends: Backends,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            candidates: 8,
            temperature: 0.7,
            folds: 5,
            setting: GenerationSetting::ScoreRubric,
            modes: vec![SelectionMode::Highest, SelectionMode::Lowest],
            dimensions: Dimension::ALL.to_vec(),
            label_format: LabelFormat::ScoreFeedback,
            output_dir: PathBuf::from("out"),
            concurrency: 8,
            generation_retries: 2,
            revision_max_tokens: 1000,
            revision: false,
            data: DataConfig::default(),
            alignment: AlignmentConfig::default(),
            backends: Backends::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads and validates a TOML file. Relative data paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.essays.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.rubrics_dir.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.candidates == 0 {
            return bad("candidates must be at least 1".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be a finite value >= 0", self.temperature));
        }
        if self.folds < 2 {
            return bad(format!("folds {} must be at least 2", self.folds));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.modes.is_empty() {
            return bad("modes must name at least one selection mode".into());
        }
        let p = self.alignment.params();
        if !(0.0..=1.0).contains(&p.theta) || p.ngram == 0 {
            return bad(format!("alignment theta {} / ngram {} out of range", p.theta, p.ngram));
        }
        self.weights()?;
        for (role, b, allowed) in [
            (
                "feedback_generator",
                &self.backends.feedback_generator,
                &[BackendKind::Mock, BackendKind::Endpoint][..],
            ),
            (
                "scorer",
                &self.backends.scorer,
                &[BackendKind::Mock, BackendKind::Heuristic, BackendKind::Endpoint][..],
            ),
            (
                "revision_model",
                &self.backends.revision_model,
                &[BackendKind::Identity, BackendKind::AppendMarker, BackendKind::Endpoint][..],
            ),
            (
                "scoring_model",
                &self.backends.scoring_model,
                &[
                    BackendKind::GoldEcho,
                    BackendKind::Constant,
                    BackendKind::Keyed,
                    BackendKind::Endpoint,
                ][..],
            ),
        ] {
            if !allowed.contains(&b.kind) {
                return bad(format!("backend kind {:?} cannot serve role {role}", b.kind));
            }
            if b.kind == BackendKind::Endpoint && b.url.is_none() {
                return bad(format!("{role}: endpoint backend needs `url`"));
            }
            if b.max_attempts == 0 {
                return bad(format!("{role}: max_attempts must be at least 1"));
            }
            if b.kind == BackendKind::Constant && b.constant.is_none_or(|c| !c.is_finite()) {
                return bad(format!("{role}: constant backend needs a finite `constant`"));
            }
        }
        if self.alignment.extractor == ExtractorChoice::Backend && self.backends.scorer.kind != BackendKind::Endpoint {
            return bad("backend extraction needs an endpoint scorer".into());
        }
        Ok(())
    }

    /// Equal weights over the configured dimension subset.
    pub fn weights(&self) -> Result<DimensionWeights> {
        DimensionWeights::subset(&self.dimensions).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory so
    /// the same experiment written to two places hashes the same.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        Ok(sha256_hex(serde_json::to_string(&v)?.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml(
            r#"
            seed = 7
            dimensions = ["Specificity", "Validity"]
            [backends.scorer]
            kind = "heuristic"
            [backends.scoring_model]
            kind = "constant"
            constant = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.candidates, 8);
        assert_eq!(cfg.temperature, 0.7);
        assert_eq!(cfg.revision_max_tokens, 1000);
        assert_eq!(cfg.backends.feedback_generator.kind, BackendKind::Mock);
        assert_eq!(cfg.weights().unwrap().0.helpfulness, 0.0);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "folds = 1",
            "candidates = 0",
            "temperature = -0.1",
            "[backends.scorer]\nkind = \"endpoint\"",
            "[backends.scorer]\nkind = \"gold_echo\"",
            "[backends.scoring_model]\nkind = \"constant\"",
            "unknown_key = 1",
        ] {
            assert!(PipelineConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 43;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
