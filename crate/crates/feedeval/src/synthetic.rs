//! Seeded synthetic corpus in the ASAP++ layout, for offline runs and tests.
//!
//! Scores are assigned so that every (prompt, trait, fold) cell of the fold
//! split drawn with the same seed holds at least two distinct levels, which
//! keeps per-fold QWK defined.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use feedeval_core::folds::assign_folds;
use feedeval_core::model::{feedback_traits, score_range, traits_for_prompt, PromptId, TraitId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::write_text;

const SUBJECTS: [&str; 8] = [
    "The cyclist",
    "My neighbor",
    "The author",
    "A student",
    "The narrator",
    "Our town",
    "The reader",
    "Every family",
];
const VERBS: [&str; 8] = [
    "noticed",
    "remembered",
    "argued about",
    "worried about",
    "wrote about",
    "described",
    "returned to",
    "thought about",
];
const OBJECTS: [&str; 8] = [
    "the long road through the desert",
    "the computer in the library",
    "the garden behind the old house",
    "the storm that came without warning",
    "a promise made years ago",
    "the quiet hours before dawn",
    "the rules of the new school",
    "a letter from a distant cousin",
];
const TAILS: [&str; 6] = [
    "",
    " because it mattered",
    " with real care",
    " for the first time",
    " and learned something",
    " in great detail",
];

const PROMPT_TEXT: [&str; 6] = [
    "Write a letter to your local newspaper about the effects computers have on people.",
    "Write a persuasive essay about censorship in libraries.",
    "Explain how the features of the setting affect the cyclist.",
    "Explain why the author concludes the story with the final paragraph.",
    "Describe the mood the author creates in the memoir.",
    "Describe the obstacles the builders faced when trying to dock dirigibles.",
];

const EXCERPTS: [&str; 4] = [
    "Rough Road Ahead: Do Not Exceed Posted Speed Limit.",
    "Winter Hibiscus: the plant would return with the geese in spring.",
    "Narciso Rodriguez: home was the warmth of the kitchen.",
    "The Mooring Mast: the builders met safety and weather obstacles.",
];

/// Paths of a written synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub essays: PathBuf,
    pub rubrics_dir: PathBuf,
    pub count: usize,
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {}{}.",
        SUBJECTS.choose(rng).copied().unwrap_or_default(),
        VERBS.choose(rng).copied().unwrap_or_default(),
        OBJECTS.choose(rng).copied().unwrap_or_default(),
        TAILS.choose(rng).copied().unwrap_or_default(),
    )
}

fn essay_text(rng: &mut ChaCha8Rng, id: usize) -> String {
    let n = rng.gen_range(4..=9);
    let mut body: Vec<String> = (0..n).map(|_| sentence(rng)).collect();
    body.push(format!("This is essay number {id}."));
    body.join(" ")
}

/// Rubric document of one prompt in TOML.
pub fn rubric_toml(prompt: PromptId) -> Result<String> {
    let p = prompt.get() as usize;
    let mut out = String::new();
    let text = PROMPT_TEXT[p - 1];
    writeln!(out, "prompt_text = {text:?}").map_err(|e| Error::Config(e.to_string()))?;
    if p >= 3 {
        writeln!(out, "excerpt = {:?}", EXCERPTS[p - 3]).map_err(|e| Error::Config(e.to_string()))?;
    }
    for t in feedback_traits(prompt) {
        let r = score_range(prompt, t)?;
        writeln!(out, "\n[{:?}]", t.display_name()).map_err(|e| Error::Config(e.to_string()))?;
        for level in r.lo..=r.hi {
            let quality = match (level - r.lo) * 4 / (r.hi - r.lo).max(1) {
                0 => "is absent or unclear",
                1 => "is limited",
                2 => "is adequate",
                3 => "is strong",
                _ => "is excellent",
            };
            writeln!(out, "{level} = \"{} {quality}.\"", t.display_name()).map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    Ok(out)
}

/// Writes `per_prompt` essays for each of the six prompts as `essays.tsv`
/// plus a `rubrics/` directory under `dir`. `folds` and `seed` must match the
/// run that will evaluate the corpus for the per-fold guarantee to hold.
pub fn write_corpus(dir: &Path, per_prompt: usize, folds: usize, seed: u64) -> Result<SyntheticCorpus> {
    if per_prompt < 2 * folds {
        return Err(Error::Config(format!(
            "need at least {} essays per prompt for {folds} folds",
            2 * folds
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let prompts: Vec<PromptId> = (1..=6)
        .flat_map(|p| std::iter::repeat_n(p, per_prompt))
        .map(PromptId::new)
        .collect::<std::result::Result<_, _>>()?;
    let fold_of = assign_folds(&prompts, folds, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut position: BTreeMap<(PromptId, usize), usize> = BTreeMap::new();
    let offsets: BTreeMap<(PromptId, TraitId), i64> = prompts
        .iter()
        .flat_map(|p| traits_for_prompt(*p).iter().map(move |t| (*p, *t)))
        .map(|k| (k, rng.gen_range(0..16)))
        .collect();
    let all = TraitId::ALL;
    let mut tsv = String::from("essay_id\tessay_set\tessay");
    for t in all {
        tsv.push('\t');
        tsv.push_str(t.display_name());
    }
    tsv.push('\n');
    for (i, (&p, &fold)) in prompts.iter().zip(&fold_of).enumerate() {
        let pos = position.entry((p, fold)).or_insert(0);
        let id = i + 1;
        write!(tsv, "{id}\t{}\t{}", p.get(), essay_text(&mut rng, id)).map_err(|e| Error::Config(e.to_string()))?;
        for t in all {
            tsv.push('\t');
            if let Ok(r) = score_range(p, t) {
                let span = r.hi - r.lo + 1;
                let level = r.lo + (offsets[&(p, t)] + *pos as i64) % span;
                write!(tsv, "{level}").map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        tsv.push('\n');
        *pos += 1;
    }
    let essays = dir.join("essays.tsv");
    write_text(&tsv, &essays, "asap_tsv")?;
    let rubrics_dir = dir.join("rubrics");
    std::fs::create_dir_all(&rubrics_dir).map_err(|e| Error::io(&rubrics_dir, e))?;
    for p in 1..=6 {
        let prompt = PromptId::new(p)?;
        write_text(
            &rubric_toml(prompt)?,
            &rubrics_dir.join(format!("prompt_{p}.toml")),
            "rubric",
        )?;
    }
    Ok(SyntheticCorpus {
        essays,
        rubrics_dir,
        count: prompts.len(),
    })
}
