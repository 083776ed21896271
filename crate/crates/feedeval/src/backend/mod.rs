//! Backend roles and their implementations.
//!
//! Four roles exist: the feedback generator, the dimension scorer, the
//! revision model and the essay scoring model. Each has an endpoint
//! implementation plus deterministic offline stand-ins.

pub mod http;
pub mod mock;

use std::collections::BTreeMap;

use feedeval_core::answer::{parse_decimal, parse_extraction, parse_trait_scores};
use feedeval_core::model::{Essay, TraitId};
use feedeval_core::prompts::{
    render_dimension_prompt, render_extraction_prompt, render_revision_prompt, render_scoring_prompt,
};
use feedeval_core::scoring::{BackendKind as ScoreBackend, RawScore, ScoreRequest};
use feedeval_core::specificity::{AlignmentParams, ExtractedSegment};
use serde_json::Value;

use crate::config::{BackendConfig, BackendKind, PipelineConfig};
use crate::error::{Error, Result};
use http::{field_at, require_content, EndpointClient};

/// Produces one trait-keyed answer document per call.
pub trait FeedbackGenerator: Send + Sync {
    /// `request` is the rendered generation prompt; `sample` and `attempt`
    /// identify the call within the essay's batch.
    fn generate(&self, essay: &Essay, request: &str, sample: usize, attempt: u32, temperature: f64) -> Result<String>;
}

/// Scores one feedback text on one dimension.
pub trait DimensionScorer: Send + Sync {
    fn score(&self, req: &ScoreRequest) -> Result<RawScore>;

    /// Essay segments each feedback sentence refers to.
    fn extract(&self, _essay_text: &str, _feedback_sentences: &[&str]) -> Result<Vec<ExtractedSegment>> {
        Err(Error::Config("this scorer cannot extract segments".into()))
    }
}

/// Predicts trait scores for an essay.
pub trait EssayScorer: Send + Sync {
    fn score(&self, essay: &Essay, prompt_text: &str) -> Result<BTreeMap<TraitId, f64>>;
}

/// Rewrites an essay given per-trait feedback.
pub trait Reviser: Send + Sync {
    fn revise(&self, essay: &Essay, feedback: &[(TraitId, &str)]) -> Result<String>;
}

/// Endpoint-backed generator.
#[derive(Debug)]
pub struct EndpointGenerator {
    pub client: EndpointClient,
    pub max_tokens: Option<u32>,
}

impl FeedbackGenerator for EndpointGenerator {
    fn generate(
        &self,
        _essay: &Essay,
        request: &str,
        _sample: usize,
        _attempt: u32,
        temperature: f64,
    ) -> Result<String> {
        let c = self.client.complete(request, temperature, self.max_tokens)?;
        Ok(require_content(&c)?.to_string())
    }
}

/// Endpoint-backed dimension scorer.
#[derive(Debug)]
pub struct EndpointScorer {
    pub client: EndpointClient,
    pub structured_field: Option<String>,
}

impl EndpointScorer {
    /// Reads the score from the configured field or the message content.
    pub fn read_score(&self, c: &http::Completion) -> Result<f64> {
        match &self.structured_field {
            Some(path) => {
                let v = field_at(&c.document, path)
                    .ok_or_else(|| Error::Protocol(format!("response has no field `{path}`")))?;
                match v {
                    Value::Number(n) => n
                        .as_f64()
                        .ok_or_else(|| Error::Protocol(format!("`{path}` is not finite"))),
                    Value::String(s) => parse_decimal(s).map_err(|e| Error::Protocol(e.to_string())),
                    other => Err(Error::Protocol(format!("`{path}` is not numeric: {other}"))),
                }
            }
            None => parse_decimal(require_content(c)?).map_err(|e| Error::Protocol(e.to_string())),
        }
    }
}

impl DimensionScorer for EndpointScorer {
    fn score(&self, req: &ScoreRequest) -> Result<RawScore> {
        req.validate()?;
        let c = self.client.complete(&render_dimension_prompt(req), 0.0, None)?;
        let value = self.read_score(&c)?;
        RawScore::new(value, ScoreBackend::Endpoint, req.dimension).map_err(|e| Error::Protocol(e.to_string()))
    }

    fn extract(&self, essay_text: &str, feedback_sentences: &[&str]) -> Result<Vec<ExtractedSegment>> {
        let c = self
            .client
            .complete(&render_extraction_prompt(essay_text, feedback_sentences), 0.0, None)?;
        parse_extraction(require_content(&c)?).map_err(|e| Error::Protocol(e.to_string()))
    }
}

/// Endpoint-backed essay scorer.
#[derive(Debug)]
pub struct EndpointEssayScorer {
    pub client: EndpointClient,
}

impl EssayScorer for EndpointEssayScorer {
    fn score(&self, essay: &Essay, prompt_text: &str) -> Result<BTreeMap<TraitId, f64>> {
        let c = self
            .client
            .complete(&render_scoring_prompt(essay, prompt_text), 0.0, None)?;
        parse_trait_scores(require_content(&c)?).map_err(|e| Error::Protocol(e.to_string()))
    }
}

/// Endpoint-backed reviser.
#[derive(Debug)]
pub struct EndpointReviser {
    pub client: EndpointClient,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Reviser for EndpointReviser {
    fn revise(&self, essay: &Essay, feedback: &[(TraitId, &str)]) -> Result<String> {
        let c = self.client.complete(
            &render_revision_prompt(essay, feedback),
            self.temperature,
            Some(self.max_tokens),
        )?;
        Ok(require_content(&c)?.to_string())
    }
}

/// One implementation per role, built from configuration.
pub struct BackendSet {
    pub generator: Box<dyn FeedbackGenerator>,
    pub scorer: Box<dyn DimensionScorer>,
    pub reviser: Box<dyn Reviser>,
    pub essay_scorer: Box<dyn EssayScorer>,
}

fn endpoint(cfg: &BackendConfig) -> Result<EndpointClient> {
    EndpointClient::from_config(cfg)
}

impl BackendSet {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let b = &cfg.backends;
        let generator: Box<dyn FeedbackGenerator> = match b.feedback_generator.kind {
            BackendKind::Endpoint => Box::new(EndpointGenerator {
                client: endpoint(&b.feedback_generator)?,
                max_tokens: b.feedback_generator.max_tokens,
            }),
            _ => Box::new(match &b.feedback_generator.fixed_document {
                Some(doc) => mock::MockGenerator::fixed(doc),
                None => mock::MockGenerator::varied(cfg.seed),
            }),
        };
        let scorer: Box<dyn DimensionScorer> = match b.scorer.kind {
            BackendKind::Endpoint => Box::new(EndpointScorer {
                client: endpoint(&b.scorer)?,
                structured_field: b.scorer.structured_field.clone(),
            }),
            BackendKind::Heuristic => Box::new(mock::HeuristicScorer {
                params: cfg.alignment.params(),
            }),
            _ => Box::new(mock::MockScorer),
        };
        let reviser: Box<dyn Reviser> = match b.revision_model.kind {
            BackendKind::Endpoint => Box::new(EndpointReviser {
                client: endpoint(&b.revision_model)?,
                temperature: cfg.temperature,
                max_tokens: b.revision_model.max_tokens.unwrap_or(cfg.revision_max_tokens),
            }),
            BackendKind::AppendMarker => Box::new(mock::AppendMarkerReviser {
                marker: b
                    .revision_model
                    .marker
                    .clone()
                    .unwrap_or_else(|| mock::DEFAULT_MARKER.into()),
            }),
            _ => Box::new(mock::IdentityReviser),
        };
        let essay_scorer: Box<dyn EssayScorer> = match b.scoring_model.kind {
            BackendKind::Endpoint => Box::new(EndpointEssayScorer {
                client: endpoint(&b.scoring_model)?,
            }),
            BackendKind::Constant => Box::new(mock::ConstantScorer(b.scoring_model.constant.unwrap_or(0.0))),
            BackendKind::Keyed => Box::new(mock::KeyedScorer {
                marker: b
                    .scoring_model
                    .marker
                    .clone()
                    .unwrap_or_else(|| mock::DEFAULT_MARKER.into()),
            }),
            _ => Box::new(mock::GoldEcho),
        };
        Ok(BackendSet {
            generator,
            scorer,
            reviser,
            essay_scorer,
        })
    }

    /// Deterministic offline set: varied mock generator, mock scorer,
    /// identity reviser and gold-echo essay scorer.
    pub fn offline(seed: u64) -> Self {
        BackendSet {
            generator: Box::new(mock::MockGenerator::varied(seed)),
            scorer: Box::new(mock::MockScorer),
            reviser: Box::new(mock::IdentityReviser),
            essay_scorer: Box::new(mock::GoldEcho),
        }
    }

    pub fn heuristic(seed: u64, params: AlignmentParams) -> Self {
        BackendSet {
            scorer: Box::new(mock::HeuristicScorer { params }),
            ..Self::offline(seed)
        }
    }
}
