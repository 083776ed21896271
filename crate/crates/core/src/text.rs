//! Sentence segmentation, word tokenization and edit-distance similarity.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// One sentence of a source text, located by byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

const TERMINALS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 7] = ['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '}'];
const OPENERS: [char; 6] = ['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

// Lower-case, without the trailing period.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "e.g", "i.e", "cf", "no", "fig", "approx", "dept",
    "est", "gen", "gov", "inc", "ltd", "co", "corp", "jan", "feb", "aug", "sept", "oct", "nov",
];

/// Splits `text` into sentences.
///
/// A run of `.`, `!` or `?` (plus any closing quotes or brackets) ends a
/// sentence when it is followed by end of text, or by whitespace and then a
/// capitalised word. A period after a known abbreviation or a single-letter
/// initial does not split. Anonymization tokens such as `@PERSON1` are plain
/// words: they count as capitalised when they open a sentence and a mark after
/// them splits as usual.
pub fn segment_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut bounds: Vec<(usize, usize)> = Vec::new();
    let mut sent_start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if sent_start.is_none() && !c.is_whitespace() {
            sent_start = Some(pos);
        }
        if !TERMINALS.contains(&c) {
            i += 1;
            continue;
        }
        let mark_pos = pos;
        let mut j = i;
        while j < chars.len() && TERMINALS.contains(&chars[j].1) {
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let split = if k == chars.len() {
            true
        } else if k > j && starts_sentence(&chars[k..]) {
            c != '.' || !is_abbreviation(&text[..mark_pos])
        } else {
            false
        };
        if split {
            if let Some(s) = sent_start.take() {
                bounds.push((s, end));
            }
            i = k;
        } else {
            i = j;
        }
    }
    if let Some(s) = sent_start {
        let end = s + text[s..].trim_end().len();
        if end > s {
            bounds.push((s, end));
        }
    }
    bounds
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| SentenceSpan {
            index,
            start,
            end,
            text: String::from(&text[start..end]),
        })
        .collect()
}

fn starts_sentence(rest: &[(usize, char)]) -> bool {
    let mut it = rest.iter().map(|&(_, c)| c).skip_while(|c| OPENERS.contains(c));
    match it.next() {
        Some(c) if c.is_uppercase() => true,
        Some('@') => it.next().is_some_and(|c| c.is_uppercase()),
        _ => false,
    }
}

fn is_abbreviation(before_mark: &str) -> bool {
    let word = before_mark
        .rsplit(|c: char| c.is_whitespace() || OPENERS.contains(&c))
        .next()
        .unwrap_or("");
    if word.starts_with('@') {
        return false;
    }
    let mut chars = word.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if c.is_uppercase() {
            return true;
        }
    }
    let lower: String = word.chars().flat_map(char::to_lowercase).collect();
    ABBREVIATIONS.contains(&lower.as_str())
}

const STOP_WORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
];

pub fn is_stop_word(word: &str) -> bool {
    STOP_WORDS.binary_search(&word).is_ok()
}

/// Lower-cased word tokens. Apostrophes inside words are kept (`don't`),
/// `@` is kept so anonymization tokens survive as single words.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '@' || c == '\'' || c == '\u{2019}'))
        .map(|w| w.trim_matches(|c| c == '\'' || c == '\u{2019}'))
        .filter(|w| !w.is_empty())
        .map(|w| {
            w.chars()
                .map(|c| if c == '\u{2019}' { '\'' } else { c })
                .flat_map(char::to_lowercase)
                .collect()
        })
        .collect()
}

/// Words with stop words removed.
pub fn content_words(text: &str) -> Vec<String> {
    words(text).into_iter().filter(|w| !is_stop_word(w)).collect()
}

/// Lower-case, punctuation folded to single spaces, trimmed.
pub fn normalize_for_match(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '@' {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|)`; two empty strings are identical.
pub fn normalized_similarity(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Smallest edit distance between `needle` and any substring of `haystack`.
pub fn substring_distance(needle: &[char], haystack: &[char]) -> usize {
    let mut prev = vec![0usize; haystack.len() + 1];
    let mut cur = vec![0usize; haystack.len() + 1];
    for (i, cn) in needle.iter().enumerate() {
        cur[0] = i + 1;
        for (j, ch) in haystack.iter().enumerate() {
            let sub = prev[j] + usize::from(cn != ch);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev.into_iter().min().unwrap_or(needle.len())
}

/// How well `needle` occurs somewhere inside `haystack`, in `[0, 1]`.
pub fn substring_similarity(needle: &[char], haystack: &[char]) -> f64 {
    if needle.is_empty() {
        return 0.0;
    }
    let d = substring_distance(needle, haystack).min(needle.len());
    1.0 - d as f64 / needle.len() as f64
}

/// Spans enclosed in quotation marks: `"…"`, `“…”`, `'…'`, `‘…’` and `` `…' ``.
///
/// Single quotes only open after a non-alphanumeric character and only close
/// before one, so apostrophes in `essay's` or `don't` are not mistaken for quotes.
pub fn quoted_segments(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let closers: &[char] = match c {
            '"' => &['"'],
            '\u{201c}' => &['\u{201d}', '"'],
            '\'' | '\u{2018}' | '`' => &['\'', '\u{2019}'],
            _ => {
                i += 1;
                continue;
            }
        };
        let opens = (i == 0 || !chars[i - 1].is_alphanumeric()) && chars.get(i + 1).is_some_and(|n| !n.is_whitespace());
        if !opens {
            i += 1;
            continue;
        }
        let mut close = None;
        for j in i + 1..chars.len() {
            if closers.contains(&chars[j])
                && !chars[j - 1].is_whitespace()
                && chars.get(j + 1).is_none_or(|n| !n.is_alphanumeric())
                && j > i + 1
            {
                close = Some(j);
                break;
            }
        }
        match close {
            Some(j) => {
                out.push(chars[i + 1..j].iter().collect());
                i = j + 1;
            }
            None => i += 1,
        }
    }
    out
}
