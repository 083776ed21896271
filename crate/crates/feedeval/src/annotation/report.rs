//! Inter-annotator agreement and alignment with FeedEval.

use std::collections::BTreeMap;

use feedeval_core::metrics::{fleiss_kappa, icc_2_1, pairwise_alignment, AlignmentReport, PairwiseJudgment, Winner};
use serde::{Deserialize, Serialize};

use super::model::{Answer, StoredTask, TaskPayload};
use super::service::{MissingPair, ServiceError, ServiceResult, State};

/// Which tasks a report covers.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReportQuery {
    /// Task ids; all main tasks when absent.
    pub tasks: Option<Vec<String>>,
    /// Add a calibration section over practice tasks.
    pub practice: bool,
}

/// Agreement on one group of pairwise tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseGroup {
    pub items: usize,
    /// Fleiss' kappa over creation-order winners; null when undefined.
    pub fleiss_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Annotator-majority winner as gold against the FeedEval winner, over
    /// items that carry one.
    pub alignment: Option<AlignmentReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertScale {
    pub items: usize,
    /// ICC(2,1); null when undefined.
    pub icc: Option<f64>,
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Agreement within one practice round, over the tasks every annotator
/// has judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeRound {
    pub round: u8,
    pub items: usize,
    pub fleiss_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Per annotator, the share of judged pairwise practice items of this
    /// round that agree with the FeedEval winner.
    pub accuracy_vs_feedeval: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotators: Vec<String>,
    pub tasks: usize,
    /// Keyed by dimension name, with `revision_` prefixed for revision pairs.
    pub pairwise: BTreeMap<String, PairwiseGroup>,
    /// Keyed by D1, D2 and D3.
    pub likert: BTreeMap<String, LikertScale>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub practice: Option<Vec<PracticeRound>>,
}

fn winner_of(state: &State, task: &str, annotator: &str) -> Option<Winner> {
    state
        .judgments
        .get(&(task.to_string(), annotator.to_string()))
        .and_then(|(_, j)| j.derandomized)
}

fn counts(state: &State, tasks: &[&StoredTask], annotators: &[String]) -> Vec<Vec<u64>> {
    tasks
        .iter()
        .map(|t| {
            let mut row = vec![0u64; 2];
            for a in annotators {
                match winner_of(state, &t.task_id, a) {
                    Some(Winner::A) => row[0] += 1,
                    Some(Winner::B) => row[1] += 1,
                    None => {}
                }
            }
            row
        })
        .collect()
}

fn kappa(rows: &[Vec<u64>], raters: usize) -> (Option<f64>, Option<String>) {
    match fleiss_kappa(rows, raters as u64) {
        Ok(k) => (Some(k), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Builds the report. Every selected task must be judged by every
/// registered annotator, and pairwise tasks need an odd annotator count
/// so the majority winner is always defined.
pub fn agreement_report(state: &State, query: &ReportQuery) -> ServiceResult<AgreementReport> {
    let annotators: Vec<String> = state.annotators.keys().cloned().collect();
    if annotators.is_empty() {
        return Err(ServiceError::Configuration("no annotators are registered".into()));
    }
    let selected: Vec<&StoredTask> = match &query.tasks {
        Some(ids) => ids
            .iter()
            .map(|id| {
                state
                    .tasks
                    .get(id)
                    .map(|(_, t)| t)
                    .ok_or_else(|| ServiceError::NotFound(format!("task {id:?}")))
            })
            .collect::<ServiceResult<_>>()?,
        None => state
            .tasks
            .values()
            .map(|(_, t)| t)
            .filter(|t| !t.is_practice)
            .collect(),
    };
    let missing: Vec<MissingPair> = selected
        .iter()
        .flat_map(|t| {
            annotators
                .iter()
                .filter(|a| !state.judgments.contains_key(&(t.task_id.clone(), (*a).clone())))
                .map(|a| MissingPair {
                    task_id: t.task_id.clone(),
                    annotator_id: a.clone(),
                })
        })
        .collect();
    if !missing.is_empty() {
        return Err(ServiceError::Incomplete(missing));
    }
    let has_pairwise = selected.iter().any(|t| t.payload.group().is_some());
    if has_pairwise && annotators.len().is_multiple_of(2) {
        return Err(ServiceError::Configuration(format!(
            "{} annotators: the majority winner needs an odd count",
            annotators.len()
        )));
    }

    let mut groups: BTreeMap<String, Vec<&StoredTask>> = BTreeMap::new();
    let mut likert: Vec<&StoredTask> = Vec::new();
    for t in &selected {
        match t.payload.group() {
            Some(g) => groups.entry(g).or_default().push(t),
            None => likert.push(t),
        }
    }
    let mut pairwise = BTreeMap::new();
    for (name, tasks) in groups {
        let rows = counts(state, &tasks, &annotators);
        let (fleiss, note) = kappa(&rows, annotators.len());
        let judged: Vec<PairwiseJudgment> = tasks
            .iter()
            .zip(&rows)
            .filter_map(|(t, row)| {
                let predicted = t.payload.feedeval_winner()?;
                let gold = if row[0] > row[1] { Winner::A } else { Winner::B };
                Some(PairwiseJudgment {
                    item_id: t.task_id.clone(),
                    gold_winner: gold,
                    predicted_winner: predicted,
                    dimension: t.payload.dimension()?,
                })
            })
            .collect();
        let alignment = if judged.is_empty() {
            None
        } else {
            Some(pairwise_alignment(&judged).map_err(|e| ServiceError::Configuration(e.to_string()))?)
        };
        pairwise.insert(
            name,
            PairwiseGroup {
                items: tasks.len(),
                fleiss_kappa: fleiss,
                note,
                alignment,
            },
        );
    }

    let mut scales = BTreeMap::new();
    if !likert.is_empty() {
        for d in 0..3 {
            let matrix: Vec<Vec<f64>> = likert
                .iter()
                .map(|t| {
                    annotators
                        .iter()
                        .map(|a| match state.judgments.get(&(t.task_id.clone(), a.clone())) {
                            Some((_, j)) => match j.answer {
                                Answer::Likert(l) => l.values()[d] as f64,
                                Answer::Pairwise(_) => f64::NAN,
                            },
                            None => f64::NAN,
                        })
                        .collect()
                })
                .collect();
            let (icc, note) = match icc_2_1(&matrix) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let all: Vec<f64> = matrix.iter().flatten().copied().collect();
            let mean = feedeval_core::metrics::mean(&all).ok();
            scales.insert(
                format!("D{}", d + 1),
                LikertScale {
                    items: likert.len(),
                    icc,
                    mean,
                    note,
                },
            );
        }
    }

    let practice = query.practice.then(|| practice_rounds(state, &annotators));
    Ok(AgreementReport {
        annotators,
        tasks: selected.len(),
        pairwise,
        likert: scales,
        practice,
    })
}

fn practice_rounds(state: &State, annotators: &[String]) -> Vec<PracticeRound> {
    let mut rounds: BTreeMap<u8, Vec<&StoredTask>> = BTreeMap::new();
    for (_, t) in state.tasks.values() {
        if t.is_practice && !matches!(t.payload, TaskPayload::Likert { .. }) {
            rounds.entry(t.practice_round.unwrap_or(1)).or_default().push(t);
        }
    }
    rounds
        .into_iter()
        .map(|(round, tasks)| {
            let complete: Vec<&StoredTask> = tasks
                .iter()
                .copied()
                .filter(|t| annotators.iter().all(|a| winner_of(state, &t.task_id, a).is_some()))
                .collect();
            let (fleiss, note) = if complete.is_empty() {
                (None, Some("no practice item is judged by every annotator".into()))
            } else {
                kappa(&counts(state, &complete, annotators), annotators.len())
            };
            let accuracy_vs_feedeval = annotators
                .iter()
                .filter_map(|a| {
                    let graded: Vec<bool> = tasks
                        .iter()
                        .filter_map(|t| Some(winner_of(state, &t.task_id, a)? == t.payload.feedeval_winner()?))
                        .collect();
                    (!graded.is_empty()).then(|| {
                        (
                            a.clone(),
                            graded.iter().filter(|x| **x).count() as f64 / graded.len() as f64,
                        )
                    })
                })
                .collect();
            PracticeRound {
                round,
                items: complete.len(),
                fleiss_kappa: fleiss,
                note,
                accuracy_vs_feedeval,
            }
        })
        .collect()
}
