//! Helpfulness preference pairs and validity NLI examples built from
//! source-tagged records.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specificity::SpecEvalPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairSource {
    SpecEval,
    Recipe4U,
    Feat,
    AsapRevised,
}

/// A chosen/rejected feedback pair for reward-model training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub source: PairSource,
    pub context: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: BTreeMap<String, String>,
}

impl PreferencePair {
    pub fn new(
        source: PairSource,
        context: impl Into<String>,
        chosen: impl Into<String>,
        rejected: impl Into<String>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let (chosen, rejected) = (chosen.into(), rejected.into());
        if chosen.trim().is_empty() || rejected.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        if chosen == rejected {
            return Err(Error::InvalidArgument("chosen and rejected are identical".into()));
        }
        Ok(PreferencePair {
            source,
            context: context.into(),
            chosen,
            rejected,
            meta,
        })
    }

    /// Wraps a SpecEval pair; the essay text becomes the context.
    pub fn from_speceval(pair: &SpecEvalPair, essay_text: &str) -> Result<Self> {
        let mut meta = BTreeMap::new();
        meta.insert("essay_id".to_string(), pair.essay_id.clone());
        meta.insert("trait".to_string(), pair.trait_id.label_key().to_string());
        meta.insert("chosen_f1".to_string(), format!("{}", pair.chosen_f1));
        meta.insert("rejected_f1".to_string(), format!("{}", pair.rejected_f1));
        Self::new(PairSource::SpecEval, essay_text, &*pair.chosen, &*pair.rejected, meta)
    }
}

/// How FEAT rankings expand into pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankExpansion {
    /// Every (better, worse) combination.
    #[default]
    AllPairs,
    /// Only neighbours in the ranking.
    Adjacent,
}

/// One upstream row. Which optional fields are required depends on `source`:
/// Recipe4U needs `accepted` and `not_adopted`, FEAT needs `ranked` (best
/// first) and AsapRevised needs `original` and `revised`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceRecord {
    pub source: Option<PairSource>,
    pub id: String,
    pub context: Option<String>,
    pub accepted: Option<String>,
    pub not_adopted: Option<Vec<String>>,
    pub ranked: Option<Vec<String>>,
    pub original: Option<String>,
    pub revised: Option<String>,
}

/// A record that produced no pairs, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub source: Option<PairSource>,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HelpfulnessBuild {
    pub pairs: Vec<PreferencePair>,
    pub skipped: Vec<SkippedRecord>,
    /// Exact (context, chosen, rejected) repeats that were dropped.
    pub duplicates: usize,
}

fn require<'a, T>(field: &'a Option<T>, name: &str) -> core::result::Result<&'a T, String> {
    field.as_ref().ok_or_else(|| format!("missing field `{name}`"))
}

fn record_pairs(
    rec: &SourceRecord,
    source: PairSource,
    expansion: RankExpansion,
) -> core::result::Result<Vec<(String, String)>, String> {
    let raw: Vec<(String, String)> = match source {
        PairSource::Recipe4U => {
            let accepted = require(&rec.accepted, "accepted")?;
            let rejected = require(&rec.not_adopted, "not_adopted")?;
            if rejected.is_empty() {
                return Err("`not_adopted` is empty".into());
            }
            rejected.iter().map(|r| (accepted.clone(), r.clone())).collect()
        }
        PairSource::Feat => {
            let ranked = require(&rec.ranked, "ranked")?;
            if ranked.len() < 2 {
                return Err(format!("`ranked` has {} item(s), need 2", ranked.len()));
            }
            let mut out = Vec::new();
            for hi in 0..ranked.len() {
                for lo in hi + 1..ranked.len() {
                    if expansion == RankExpansion::Adjacent && lo != hi + 1 {
                        continue;
                    }
                    out.push((ranked[hi].clone(), ranked[lo].clone()));
                }
            }
            out
        }
        PairSource::AsapRevised => {
            let original = require(&rec.original, "original")?;
            let revised = require(&rec.revised, "revised")?;
            alloc::vec![(revised.clone(), original.clone())]
        }
        PairSource::SpecEval => return Err("SpecEval pairs are built from essays, not source records".into()),
    };
    Ok(raw)
}

/// Adapts source records into preference pairs.
///
/// Records are processed in (source, id) order so the output does not depend
/// on input order. Records missing a required field are skipped with a
/// reason; individual self-pairs or empty texts are dropped the same way;
/// exact (context, chosen, rejected) repeats are counted and dropped.
pub fn build_helpfulness_pairs(records: &[SourceRecord], expansion: RankExpansion) -> HelpfulnessBuild {
    let mut order: Vec<&SourceRecord> = records.iter().collect();
    order.sort_by(|a, b| (a.source, &a.id).cmp(&(b.source, &b.id)));
    let mut out = HelpfulnessBuild::default();
    let mut seen: BTreeSet<(String, String, String)> = BTreeSet::new();
    for rec in order {
        let skip = |reason: String| SkippedRecord {
            source: rec.source,
            id: rec.id.clone(),
            reason,
        };
        let Some(source) = rec.source else {
            out.skipped.push(skip("missing field `source`".into()));
            continue;
        };
        let context = match require(&rec.context, "context") {
            Ok(c) => c.clone(),
            Err(e) => {
                out.skipped.push(skip(e));
                continue;
            }
        };
        let raw = match record_pairs(rec, source, expansion) {
            Ok(r) => r,
            Err(e) => {
                out.skipped.push(skip(e));
                continue;
            }
        };
        for (rank, (chosen, rejected)) in raw.into_iter().enumerate() {
            let mut meta = BTreeMap::new();
            meta.insert("record_id".to_string(), rec.id.clone());
            meta.insert("pair_index".to_string(), format!("{rank}"));
            match PreferencePair::new(source, context.clone(), chosen, rejected, meta) {
                Ok(p) => {
                    let key = (p.context.clone(), p.chosen.clone(), p.rejected.clone());
                    if seen.insert(key) {
                        out.pairs.push(p);
                    } else {
                        out.duplicates += 1;
                    }
                }
                Err(e) => out.skipped.push(skip(format!("pair {rank}: {e}"))),
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
}

/// Rubric description (premise) and feedback (hypothesis) with its label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
    pub evaluated_level: i64,
    pub premise_level: i64,
}

impl NliExample {
    /// Whether the label agrees with the level equality rule.
    pub fn is_consistent(&self) -> bool {
        (self.label == NliLabel::Entailment) == (self.premise_level == self.evaluated_level)
    }
}

/// A scored response with its feedback and the full rubric it was scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityRecord {
    pub id: String,
    #[serde(default)]
    pub response: String,
    pub rubric: BTreeMap<i64, String>,
    pub score: i64,
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidityBuild {
    pub examples: Vec<NliExample>,
    pub skipped: Vec<SkippedRecord>,
}

/// Emits one entailment at the evaluated level and one contradiction at a
/// uniformly drawn different level per record.
///
/// Records are processed in id order and each consumes exactly one draw, so
/// the output is a pure function of the records and the generator state.
pub fn build_validity_nli<R: Rng + ?Sized>(records: &[ValidityRecord], rng: &mut R) -> ValidityBuild {
    let mut order: Vec<&ValidityRecord> = records.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = ValidityBuild::default();
    for rec in order {
        let skip = |reason: String| SkippedRecord {
            source: None,
            id: rec.id.clone(),
            reason,
        };
        if rec.rubric.len() < 2 {
            out.skipped
                .push(skip(format!("rubric has {} level(s), need 2", rec.rubric.len())));
            continue;
        }
        if rec.feedback.trim().is_empty() {
            out.skipped.push(skip("empty feedback".into()));
            continue;
        }
        let Some(entailed) = rec.rubric.get(&rec.score) else {
            out.skipped
                .push(skip(format!("score {} has no rubric level", rec.score)));
            continue;
        };
        let others: Vec<(&i64, &String)> = rec.rubric.iter().filter(|(level, _)| **level != rec.score).collect();
        let (&level, premise) = others[rng.gen_range(0..others.len())];
        out.examples.push(NliExample {
            premise: entailed.clone(),
            hypothesis: rec.feedback.clone(),
            label: NliLabel::Entailment,
            evaluated_level: rec.score,
            premise_level: rec.score,
        });
        out.examples.push(NliExample {
            premise: premise.clone(),
            hypothesis: rec.feedback.clone(),
            label: NliLabel::Contradiction,
            evaluated_level: rec.score,
            premise_level: level,
        });
    }
    out
}
