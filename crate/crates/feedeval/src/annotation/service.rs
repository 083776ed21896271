//! Annotation workflow state and operations, independent of HTTP.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use feedeval_core::scoring::fnv1a;
use serde::{Deserialize, Serialize};

use super::model::{
    Ack, Answer, Event, EventBody, JudgmentSubmission, NextTask, Progress, Registration, StoredJudgment, StoredTask,
    TaskPayload, TaskSpec, TaskView,
};
use super::store::EventLog;

/// A (task, annotator) pair without a judgment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MissingPair {
    pub task_id: String,
    pub annotator_id: String,
}

/// Failures mapped one-to-one onto HTTP status classes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{} (task, annotator) pairs are not judged", .0.len())]
    Incomplete(Vec<MissingPair>),
    #[error("configuration: {0}")]
    Configuration(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthorized(_) => 401,
            ServiceError::NotFound(_) => 404,
            ServiceError::Conflict(_) | ServiceError::Incomplete(_) => 409,
            ServiceError::Invalid(_) | ServiceError::Configuration(_) => 422,
            ServiceError::BadRequest(_) => 400,
            ServiceError::Storage(_) => 500,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Unauthorized(_) => "unauthorized",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Invalid(_) => "invalid",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Incomplete(_) => "incomplete",
            ServiceError::Configuration(_) => "configuration",
            ServiceError::Storage(_) => "storage",
        }
    }
}

impl From<crate::error::Error> for ServiceError {
    fn from(e: crate::error::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

/// Everything the event log determines. Rebuilt by replaying events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub last_seq: u64,
    /// Annotator id to display name, sorted by id.
    pub annotators: BTreeMap<String, Option<String>>,
    /// Task id to (creation seq, task).
    pub tasks: BTreeMap<String, (u64, StoredTask)>,
    /// (annotator, task) to the seq at which the task was first served.
    pub served: BTreeMap<(String, String), u64>,
    /// (task, annotator) to (seq, judgment).
    pub judgments: BTreeMap<(String, String), (u64, StoredJudgment)>,
}

impl State {
    pub fn apply(&mut self, ev: &Event) {
        self.last_seq = ev.seq;
        match &ev.body {
            EventBody::AnnotatorRegistered { annotator_id, name } => {
                self.annotators.insert(annotator_id.clone(), name.clone());
            }
            EventBody::TaskCreated { task } => {
                self.tasks.insert(task.task_id.clone(), (ev.seq, task.clone()));
            }
            EventBody::TaskServed { task_id, annotator_id } => {
                self.served
                    .entry((annotator_id.clone(), task_id.clone()))
                    .or_insert(ev.seq);
            }
            EventBody::JudgmentRecorded { judgment } => {
                self.judgments.insert(
                    (judgment.task_id.clone(), judgment.annotator_id.clone()),
                    (ev.seq, judgment.clone()),
                );
            }
        }
    }

    pub fn replay(events: &[Event]) -> State {
        let mut s = State::default();
        for e in events {
            s.apply(e);
        }
        s
    }

    fn judged(&self, task_id: &str, annotator: &str) -> bool {
        self.judgments
            .contains_key(&(task_id.to_string(), annotator.to_string()))
    }

    /// Practice tasks in serving order: by round, then creation.
    fn practice_order(&self) -> Vec<&StoredTask> {
        let mut v: Vec<(u8, u64, &StoredTask)> = self
            .tasks
            .values()
            .filter(|(_, t)| t.is_practice)
            .map(|(seq, t)| (t.practice_round.unwrap_or(1), *seq, t))
            .collect();
        v.sort_by_key(|(r, s, _)| (*r, *s));
        v.into_iter().map(|(_, _, t)| t).collect()
    }

    fn progress(&self, annotator: &str) -> Progress {
        let mut p = Progress {
            practice_judged: 0,
            practice_total: 0,
            main_judged: 0,
            main_total: 0,
        };
        for (_, t) in self.tasks.values() {
            let judged = self.judged(&t.task_id, annotator);
            if t.is_practice {
                p.practice_total += 1;
                p.practice_judged += judged as usize;
            } else {
                p.main_total += 1;
                p.main_judged += judged as usize;
            }
        }
        p
    }

    /// The view with practice round position filled in.
    fn view_of(&self, task: &StoredTask) -> TaskView {
        let mut v = task.view();
        if let Some(round) = task.practice_round.filter(|_| task.is_practice) {
            let in_round: Vec<&StoredTask> = self
                .practice_order()
                .into_iter()
                .filter(|t| t.practice_round == Some(round))
                .collect();
            v.round_size = Some(in_round.len());
            v.round_item = in_round.iter().position(|t| t.task_id == task.task_id).map(|i| i + 1);
        }
        v
    }
}

/// SplitMix64 finalizer, spreading FNV-1a output over all bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-annotator position of a main task in that annotator's order.
pub fn order_key(seed: u64, annotator: &str, task_id: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(annotator.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(task_id.as_bytes());
    mix(fnv1a(&bytes))
}

/// Whether the A/B texts of a new task are shown swapped.
pub fn swap_for(seed: u64, task_id: &str) -> bool {
    let mut bytes = b"swap".to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(task_id.as_bytes());
    mix(fnv1a(&bytes)) >> 63 == 1
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub struct AnnotationService {
    log: EventLog,
    state: State,
    seed: u64,
}

impl AnnotationService {
    /// Opens the log at `path` and replays it.
    pub fn open(path: &Path, seed: u64) -> crate::error::Result<Self> {
        let (log, events) = EventLog::open(path)?;
        let state = State::replay(&events);
        log::info!(
            "annotation log {}: {} events, {} tasks, {} annotators",
            path.display(),
            events.len(),
            state.tasks.len(),
            state.annotators.len()
        );
        Ok(AnnotationService { log, state, seed })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn append(&mut self, body: EventBody) -> ServiceResult<u64> {
        let ev = Event {
            seq: self.state.last_seq + 1,
            body,
        };
        self.log.append(&ev)?;
        self.state.apply(&ev);
        Ok(ev.seq)
    }

    fn require_annotator(&self, annotator: &str) -> ServiceResult<()> {
        if self.state.annotators.contains_key(annotator) {
            Ok(())
        } else {
            Err(ServiceError::Unauthorized(format!("unknown annotator {annotator:?}")))
        }
    }

    fn task(&self, task_id: &str) -> ServiceResult<&StoredTask> {
        self.state
            .tasks
            .get(task_id)
            .map(|(_, t)| t)
            .ok_or_else(|| ServiceError::NotFound(format!("task {task_id:?}")))
    }

    /// Registers an annotator, generating an id when none is given.
    pub fn register(&mut self, reg: Registration) -> ServiceResult<String> {
        let id = match reg.annotator_id {
            Some(id) => {
                if id.trim().is_empty() {
                    return Err(ServiceError::Invalid("annotator_id is empty".into()));
                }
                if self.state.annotators.contains_key(&id) {
                    return Err(ServiceError::Conflict(format!("annotator {id:?} exists")));
                }
                id
            }
            None => (self.state.annotators.len() + 1..)
                .map(|n| format!("annotator-{n}"))
                .find(|id| !self.state.annotators.contains_key(id))
                .unwrap_or_default(),
        };
        self.append(EventBody::AnnotatorRegistered {
            annotator_id: id.clone(),
            name: reg.name,
        })?;
        Ok(id)
    }

    /// Creates tasks; all are validated before any is stored.
    pub fn create_tasks(&mut self, specs: Vec<TaskSpec>) -> ServiceResult<Vec<String>> {
        let mut ids = Vec::with_capacity(specs.len());
        let mut taken: BTreeSet<String> = self.state.tasks.keys().cloned().collect();
        let mut next = self.state.tasks.len() + 1;
        for s in &specs {
            s.validate().map_err(ServiceError::Invalid)?;
            let id = match &s.task_id {
                Some(id) => id.clone(),
                None => loop {
                    let id = format!("task-{next}");
                    next += 1;
                    if !taken.contains(&id) {
                        break id;
                    }
                },
            };
            if !taken.insert(id.clone()) {
                return Err(ServiceError::Conflict(format!("task {id:?} exists")));
            }
            ids.push(id);
        }
        for (s, id) in specs.into_iter().zip(&ids) {
            let swapped = !matches!(s.payload, TaskPayload::Likert { .. }) && swap_for(self.seed, id);
            self.append(EventBody::TaskCreated {
                task: StoredTask {
                    task_id: id.clone(),
                    is_practice: s.is_practice,
                    practice_round: s.practice_round,
                    swapped,
                    payload: s.payload,
                },
            })?;
        }
        Ok(ids)
    }

    /// The annotator's current task: an outstanding served task first, then
    /// unjudged practice tasks in round order, then unjudged main tasks in
    /// the annotator's seeded order. Main tasks wait until every practice
    /// task is judged.
    pub fn next_task(&mut self, annotator: &str) -> ServiceResult<NextTask> {
        self.require_annotator(annotator)?;
        let st = &self.state;
        let outstanding = st
            .served
            .iter()
            .filter(|((a, t), _)| a == annotator && !st.judged(t, annotator))
            .min_by_key(|(_, seq)| **seq)
            .map(|((_, t), _)| t.clone());
        let pick = outstanding.or_else(|| {
            let practice: Vec<&StoredTask> = st.practice_order();
            if let Some(t) = practice.iter().find(|t| !st.judged(&t.task_id, annotator)) {
                return Some(t.task_id.clone());
            }
            st.tasks
                .values()
                .filter(|(_, t)| !t.is_practice && !st.judged(&t.task_id, annotator))
                .map(|(_, t)| (order_key(self.seed, annotator, &t.task_id), t.task_id.clone()))
                .min()
                .map(|(_, id)| id)
        });
        let Some(task_id) = pick else {
            return Ok(NextTask {
                task: None,
                progress: st.progress(annotator),
            });
        };
        if !st.served.contains_key(&(annotator.to_string(), task_id.clone())) {
            self.append(EventBody::TaskServed {
                task_id: task_id.clone(),
                annotator_id: annotator.to_string(),
            })?;
        }
        let st = &self.state;
        let task = &st.tasks[&task_id].1;
        Ok(NextTask {
            task: Some(st.view_of(task)),
            progress: st.progress(annotator),
        })
    }

    /// Client view of one task. With an annotator given, the annotator
    /// must be registered.
    pub fn get_task(&self, task_id: &str, annotator: Option<&str>) -> ServiceResult<TaskView> {
        if let Some(a) = annotator {
            self.require_annotator(a)?;
        }
        Ok(self.state.view_of(self.task(task_id)?))
    }

    /// Stores a judgment. An identical resubmission acknowledges the
    /// original sequence number; a different answer is a conflict.
    pub fn submit(&mut self, sub: JudgmentSubmission) -> ServiceResult<Ack> {
        self.require_annotator(&sub.annotator_id)?;
        let task = self.task(&sub.task_id)?;
        let derandomized = match (&task.payload, &sub.answer) {
            (TaskPayload::Likert { .. }, Answer::Likert(l)) => {
                if let Some(v) = l.values().into_iter().find(|v| !(1..=5).contains(v)) {
                    return Err(ServiceError::Invalid(format!("Likert value {v} is outside 1..=5")));
                }
                None
            }
            (TaskPayload::Likert { .. }, Answer::Pairwise(_)) => {
                return Err(ServiceError::Invalid("Likert task needs d1, d2 and d3".into()));
            }
            (_, Answer::Pairwise(p)) => Some(task.derandomize(p.winner)),
            (_, Answer::Likert(_)) => {
                return Err(ServiceError::Invalid("pairwise task needs a winner".into()));
            }
        };
        let key = (sub.task_id.clone(), sub.annotator_id.clone());
        if let Some((seq, existing)) = self.state.judgments.get(&key) {
            return if existing.answer == sub.answer {
                Ok(Ack {
                    seq: *seq,
                    duplicate: true,
                })
            } else {
                Err(ServiceError::Conflict(format!(
                    "task {:?} already judged by {:?} with a different answer",
                    sub.task_id, sub.annotator_id
                )))
            };
        }
        if !self
            .state
            .served
            .contains_key(&(sub.annotator_id.clone(), sub.task_id.clone()))
        {
            return Err(ServiceError::Conflict(format!(
                "task {:?} was not served to {:?}",
                sub.task_id, sub.annotator_id
            )));
        }
        let seq = self.append(EventBody::JudgmentRecorded {
            judgment: StoredJudgment {
                task_id: sub.task_id,
                annotator_id: sub.annotator_id,
                answer: sub.answer,
                derandomized,
                session_id: sub.session_id,
                timestamp: sub.timestamp,
                received_at_ms: now_ms(),
            },
        })?;
        Ok(Ack { seq, duplicate: false })
    }
}
