//! Lenient parsing of model answers.
//!
//! Models wrap their JSON in prose, mix single and double quotes and leave
//! trailing commas. [`parse_object`] extracts the outermost brace-delimited
//! object and tolerates all of that; trait keys are then matched leniently.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::TraitId;
use crate::specificity::ExtractedSegment;

/// A scalar value found in an answer object.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerValue {
    Text(String),
    Number(f64),
    Other(String),
}

impl AnswerValue {
    pub fn as_text(&self) -> String {
        match self {
            AnswerValue::Text(s) | AnswerValue::Other(s) => s.clone(),
            AnswerValue::Number(n) => format!("{n}"),
        }
    }

    /// Numeric value; numeric strings such as `"3"` are accepted.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AnswerValue::Number(n) => Some(*n),
            AnswerValue::Text(s) => s.trim().parse().ok().filter(|v: &f64| v.is_finite()),
            AnswerValue::Other(_) => None,
        }
    }
}

/// Slice from the first `{` to the last `}`.
pub fn outermost_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Parses the outermost object of `text` into key/value pairs in source order.
pub fn parse_object(text: &str) -> Result<Vec<(String, AnswerValue)>> {
    let body = outermost_object(text).ok_or_else(|| Error::Parse("no brace-delimited object".into()))?;
    Scanner::new(body).object()
}

struct Scanner {
    chars: Vec<char>,
    pos: usize,
}

impl Scanner {
    fn new(src: &str) -> Self {
        Scanner {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!("expected '{c}' at character {}", self.pos)))
        }
    }

    fn object(&mut self) -> Result<Vec<(String, AnswerValue)>> {
        self.expect('{')?;
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some('}') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(',') => {
                    self.pos += 1;
                    continue;
                }
                None => return Err(Error::Parse("unterminated object".into())),
                _ => {}
            }
            let key = self.key()?;
            self.expect(':')?;
            self.skip_ws();
            let value = self.value()?;
            out.push((key, value));
        }
    }

    fn key(&mut self) -> Result<String> {
        match self.peek() {
            Some(q @ ('"' | '\'' | '\u{201c}' | '\u{2018}')) => {
                self.pos += 1;
                self.quoted(closing(q), &[':'])
            }
            _ => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c != ':' && c != '}') {
                    self.pos += 1;
                }
                let k: String = self.chars[start..self.pos].iter().collect();
                if k.trim().is_empty() {
                    return Err(Error::Parse(format!("empty key at character {start}")));
                }
                Ok(k.trim().to_string())
            }
        }
    }

    fn value(&mut self) -> Result<AnswerValue> {
        match self.peek() {
            Some(q @ ('"' | '\'' | '\u{201c}' | '\u{2018}')) => {
                self.pos += 1;
                Ok(AnswerValue::Text(self.quoted(closing(q), &[',', '}'])?))
            }
            Some('{') | Some('[') => {
                let open = self.peek().unwrap_or('{');
                let close = if open == '{' { '}' } else { ']' };
                let start = self.pos;
                let mut depth = 0usize;
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == open {
                        depth += 1;
                    } else if c == close {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                }
                Ok(AnswerValue::Other(self.chars[start..self.pos].iter().collect()))
            }
            _ => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c != ',' && c != '}') {
                    self.pos += 1;
                }
                let raw: String = self.chars[start..self.pos].iter().collect();
                let raw = raw.trim();
                match raw.parse::<f64>() {
                    Ok(n) if n.is_finite() => Ok(AnswerValue::Number(n)),
                    _ => Ok(AnswerValue::Other(raw.to_string())),
                }
            }
        }
    }

    /// Reads a quoted string whose opening quote was consumed. A closing
    /// quote only counts when the next non-space character is one of
    /// `followers`, so apostrophes inside single-quoted text survive.
    fn quoted(&mut self, close: &[char], followers: &[char]) -> Result<String> {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == '\\' {
                let Some(e) = self.peek() else { break };
                self.pos += 1;
                match e {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'u' => {
                        let hex: String = self.chars.iter().skip(self.pos).take(4).collect();
                        match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                            Some(ch) if hex.len() == 4 => {
                                out.push(ch);
                                self.pos += 4;
                            }
                            _ => out.push('u'),
                        }
                    }
                    other => out.push(other),
                }
                continue;
            }
            if close.contains(&c) {
                let mut k = self.pos;
                while self.chars.get(k).is_some_and(|c| c.is_whitespace()) {
                    k += 1;
                }
                let at_end = k >= self.chars.len();
                if at_end || self.chars.get(k).is_some_and(|n| followers.contains(n)) {
                    return Ok(out);
                }
            }
            out.push(c);
        }
        Err(Error::Parse("unterminated string".into()))
    }
}

fn closing(open: char) -> &'static [char] {
    match open {
        '"' => &['"'],
        '\'' => &['\''],
        '\u{201c}' => &['\u{201d}', '"'],
        _ => &['\u{2019}', '\''],
    }
}

/// Trait-keyed texts found in a feedback answer. Keys that do not name a
/// trait are ignored; when a trait appears twice the first wins.
pub fn parse_trait_texts(text: &str) -> Result<BTreeMap<TraitId, String>> {
    let mut out = BTreeMap::new();
    for (k, v) in parse_object(text)? {
        if let Ok(t) = TraitId::parse(&k) {
            let s = v.as_text();
            if !s.trim().is_empty() {
                out.entry(t).or_insert(s);
            }
        }
    }
    Ok(out)
}

/// Trait-keyed numeric scores found in a scoring answer.
pub fn parse_trait_scores(text: &str) -> Result<BTreeMap<TraitId, f64>> {
    let mut out = BTreeMap::new();
    for (k, v) in parse_object(text)? {
        if let (Ok(t), Some(n)) = (TraitId::parse(&k), v.as_number()) {
            out.entry(t).or_insert(n);
        }
    }
    Ok(out)
}

/// Parses a scalar answer: the first decimal literal in the text.
pub fn parse_decimal(text: &str) -> Result<f64> {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Parse(format!("non-finite score {t:?}")))
        };
    }
    Err(Error::Parse(format!("not a decimal literal: {t:?}")))
}

/// Parses an extraction answer: the outermost JSON array of
/// `{feedback_sentence, segment}` objects.
pub fn parse_extraction(text: &str) -> Result<Vec<ExtractedSegment>> {
    let start = text.find('[').ok_or_else(|| Error::Parse("no JSON array".into()))?;
    let end = text.rfind(']').ok_or_else(|| Error::Parse("no JSON array".into()))?;
    if end < start {
        return Err(Error::Parse("no JSON array".into()));
    }
    serde_json::from_str(&text[start..=end]).map_err(|e| Error::Parse(format!("extraction: {e}")))
}
