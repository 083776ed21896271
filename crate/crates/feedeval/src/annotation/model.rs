//! Task, judgment and event types of the annotation service.

use feedeval_core::metrics::Winner;
use feedeval_core::model::TraitId;
use feedeval_core::scoring::Dimension;
use serde::{Deserialize, Serialize};

/// What annotators see and judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum TaskPayload {
    /// Two feedback texts compared on one dimension.
    Pairwise {
        dimension: Dimension,
        #[serde(default)]
        essay_id: Option<String>,
        essay: String,
        #[serde(default)]
        excerpt: Option<String>,
        #[serde(rename = "trait", default)]
        trait_id: Option<TraitId>,
        feedback_a: String,
        feedback_b: String,
        /// The side FeedEval prefers, in the order given at creation.
        #[serde(default)]
        feedeval_winner: Option<Winner>,
    },
    /// One feedback text rated on the three 1-5 scales D1, D2 and D3.
    Likert {
        #[serde(default)]
        essay_id: Option<String>,
        essay: String,
        #[serde(default)]
        excerpt: Option<String>,
        #[serde(rename = "trait", default)]
        trait_id: Option<TraitId>,
        feedback: String,
    },
    /// Two revisions of one essay. `dimension` names the dimension whose
    /// selected feedback produced the revisions.
    RevisionPairwise {
        dimension: Dimension,
        #[serde(default)]
        essay_id: Option<String>,
        #[serde(default)]
        essay: Option<String>,
        revised_a: String,
        revised_b: String,
        #[serde(default)]
        feedeval_winner: Option<Winner>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum TaskKind {
    #[default]
    Pairwise,
    Likert,
    RevisionPairwise,
}

impl TaskPayload {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskPayload::Pairwise { .. } => TaskKind::Pairwise,
            TaskPayload::Likert { .. } => TaskKind::Likert,
            TaskPayload::RevisionPairwise { .. } => TaskKind::RevisionPairwise,
        }
    }

    /// The FeedEval preference in creation order, for pairwise kinds.
    pub fn feedeval_winner(&self) -> Option<Winner> {
        match self {
            TaskPayload::Pairwise { feedeval_winner, .. } | TaskPayload::RevisionPairwise { feedeval_winner, .. } => {
                *feedeval_winner
            }
            TaskPayload::Likert { .. } => None,
        }
    }

    /// Report group of a pairwise task, such as `specificity` or
    /// `revision_helpfulness`.
    pub fn group(&self) -> Option<String> {
        match self {
            TaskPayload::Pairwise { dimension, .. } => Some(dimension.name().to_string()),
            TaskPayload::RevisionPairwise { dimension, .. } => Some(format!("revision_{}", dimension.name())),
            TaskPayload::Likert { .. } => None,
        }
    }

    pub fn dimension(&self) -> Option<Dimension> {
        match self {
            TaskPayload::Pairwise { dimension, .. } | TaskPayload::RevisionPairwise { dimension, .. } => {
                Some(*dimension)
            }
            TaskPayload::Likert { .. } => None,
        }
    }

    fn texts(&self) -> Vec<(&'static str, &str)> {
        match self {
            TaskPayload::Pairwise {
                essay,
                feedback_a,
                feedback_b,
                ..
            } => vec![("essay", essay), ("feedback_a", feedback_a), ("feedback_b", feedback_b)],
            TaskPayload::Likert { essay, feedback, .. } => vec![("essay", essay), ("feedback", feedback)],
            TaskPayload::RevisionPairwise {
                revised_a, revised_b, ..
            } => vec![("revised_a", revised_a), ("revised_b", revised_b)],
        }
    }
}

/// Body of an admin task-creation request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default)]
    pub task_id: Option<String>,
    #[serde(default)]
    pub is_practice: bool,
    /// Practice round, starting at 1. Required for practice tasks.
    #[serde(default)]
    pub practice_round: Option<u8>,
    #[serde(flatten)]
    pub payload: TaskPayload,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(id) = &self.task_id {
            if id.trim().is_empty() || id.contains('/') || id == "next" {
                return Err(format!("task id {id:?} is not usable"));
            }
        }
        match (self.is_practice, self.practice_round) {
            (true, None) => return Err("practice tasks need practice_round".into()),
            (true, Some(0)) => return Err("practice_round starts at 1".into()),
            (false, Some(_)) => return Err("practice_round is only for practice tasks".into()),
            _ => {}
        }
        for (name, text) in self.payload.texts() {
            if text.trim().is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        Ok(())
    }
}

/// A task as stored: the creation-order payload plus the presentation swap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTask {
    pub task_id: String,
    pub is_practice: bool,
    #[serde(default)]
    pub practice_round: Option<u8>,
    /// When set, clients see the creation-order B text as A and vice versa.
    pub swapped: bool,
    pub payload: TaskPayload,
}

impl StoredTask {
    /// Maps a presented winner back to creation order.
    pub fn derandomize(&self, presented: Winner) -> Winner {
        if self.swapped {
            presented.flip()
        } else {
            presented
        }
    }

    /// Client view: texts in presentation order, without the swap flag or
    /// the FeedEval preference.
    pub fn view(&self) -> TaskView {
        let mut v = TaskView {
            task_id: self.task_id.clone(),
            kind: self.payload.kind(),
            is_practice: self.is_practice,
            practice_round: self.practice_round,
            ..Default::default()
        };
        let order = |a: &str, b: &str| {
            if self.swapped {
                (b.to_string(), a.to_string())
            } else {
                (a.to_string(), b.to_string())
            }
        };
        match &self.payload {
            TaskPayload::Pairwise {
                dimension,
                essay_id,
                essay,
                excerpt,
                trait_id,
                feedback_a,
                feedback_b,
                ..
            } => {
                let (a, b) = order(feedback_a, feedback_b);
                v.dimension = Some(*dimension);
                v.essay_id = essay_id.clone();
                v.essay = Some(essay.clone());
                v.excerpt = excerpt.clone();
                v.trait_id = *trait_id;
                v.feedback_a = Some(a);
                v.feedback_b = Some(b);
            }
            TaskPayload::Likert {
                essay_id,
                essay,
                excerpt,
                trait_id,
                feedback,
            } => {
                v.essay_id = essay_id.clone();
                v.essay = Some(essay.clone());
                v.excerpt = excerpt.clone();
                v.trait_id = *trait_id;
                v.feedback = Some(feedback.clone());
                v.scales = Some(LIKERT_SCALES.map(String::from).to_vec());
            }
            TaskPayload::RevisionPairwise {
                dimension,
                essay_id,
                essay,
                revised_a,
                revised_b,
                ..
            } => {
                let (a, b) = order(revised_a, revised_b);
                v.dimension = Some(*dimension);
                v.essay_id = essay_id.clone();
                v.essay = essay.clone();
                v.revised_a = Some(a);
                v.revised_b = Some(b);
            }
        }
        v
    }
}

/// Names of the three Likert scales.
pub const LIKERT_SCALES: [&str; 3] = [
    "D1: faithfulness to essay",
    "D2: usefulness for revision",
    "D3: rubric alignment",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub kind: TaskKind,
    pub is_practice: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub practice_round: Option<u8>,
    /// 1-based position within the practice round.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_item: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Dimension>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub essay_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub essay: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excerpt: Option<String>,
    #[serde(rename = "trait", skip_serializing_if = "Option::is_none")]
    pub trait_id: Option<TraitId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_a: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_b: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revised_a: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revised_b: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairwiseAnswer {
    pub winner: Winner,
}

/// Likert ratings. Kept as plain integers so out-of-range values reach
/// validation instead of failing to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikertAnswer {
    pub d1: i64,
    pub d2: i64,
    pub d3: i64,
}

impl LikertAnswer {
    pub fn values(&self) -> [i64; 3] {
        [self.d1, self.d2, self.d3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Pairwise(PairwiseAnswer),
    Likert(LikertAnswer),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentSubmission {
    pub task_id: String,
    pub annotator_id: String,
    pub answer: Answer,
    #[serde(default)]
    pub session_id: Option<String>,
    /// Client-side timestamp, stored verbatim.
    #[serde(default)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredJudgment {
    pub task_id: String,
    pub annotator_id: String,
    /// The answer as submitted, in presentation order.
    pub answer: Answer,
    /// Pairwise winner mapped back to creation order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derandomized: Option<Winner>,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
    pub received_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventBody {
    AnnotatorRegistered {
        annotator_id: String,
        #[serde(default)]
        name: Option<String>,
    },
    TaskCreated {
        task: StoredTask,
    },
    TaskServed {
        task_id: String,
        annotator_id: String,
    },
    JudgmentRecorded {
        judgment: StoredJudgment,
    },
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    /// True when an identical judgment was already stored.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    #[serde(default)]
    pub annotator_id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub practice_judged: usize,
    pub practice_total: usize,
    pub main_judged: usize,
    pub main_total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTask {
    /// Absent when nothing is left to judge.
    pub task: Option<TaskView>,
    pub progress: Progress,
}
