//! Essay ingestion from the ASAP++ tab-separated layout or JSONL.

use std::collections::BTreeMap;
use std::path::Path;

use feedeval_core::model::{traits_for_prompt, Essay, PromptId, TraitId};
use serde::{Deserialize, Serialize};

use crate::config::ColumnMap;
use crate::error::{Error, Result};

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number, header included.
    pub line: u64,
    pub essay_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub essays: usize,
    pub per_prompt: BTreeMap<PromptId, usize>,
    pub errors: Vec<RowError>,
}

impl IngestReport {
    fn of(essays: &[Essay], errors: Vec<RowError>) -> Self {
        let mut per_prompt = BTreeMap::new();
        for e in essays {
            *per_prompt.entry(e.prompt_id()).or_insert(0) += 1;
        }
        IngestReport {
            essays: essays.len(),
            per_prompt,
            errors,
        }
    }
}

/// Loads essays from `.jsonl` records or an ASAP++-style TSV.
pub fn ingest_essays(path: &Path, columns: &ColumnMap) -> Result<(Vec<Essay>, IngestReport)> {
    let is_jsonl = path
        .extension()
        .is_some_and(|x| x.eq_ignore_ascii_case("jsonl") || x.eq_ignore_ascii_case("json"));
    if is_jsonl {
        ingest_jsonl(path)
    } else {
        ingest_asap(path, columns)
    }
}

fn ingest_jsonl(path: &Path) -> Result<(Vec<Essay>, IngestReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut essays = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Essay>(line) {
            Ok(e) => essays.push(e),
            Err(e) => errors.push(RowError {
                line: i as u64 + 1,
                essay_id: None,
                message: e.to_string(),
            }),
        }
    }
    let report = IngestReport::of(&essays, errors);
    Ok((essays, report))
}

/// Decodes a field as UTF-8, falling back to Latin-1 byte-for-character
/// mapping for the legacy encodings found in older ASAP releases.
fn decode(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

struct Layout {
    id: usize,
    prompt: usize,
    text: usize,
    excerpt: Option<usize>,
    traits: Vec<(usize, TraitId)>,
}

fn layout(header: &[String], columns: &ColumnMap) -> Result<Layout> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Ingest(format!("missing column `{name}`")))
    };
    let id = find(&columns.essay_id)?;
    let prompt = find(&columns.prompt_id)?;
    let text = find(&columns.text)?;
    let excerpt = columns.excerpt.as_deref().map(find).transpose()?;
    let mut traits = Vec::new();
    if columns.traits.is_empty() {
        for (i, h) in header.iter().enumerate() {
            if [id, prompt, text].contains(&i) || Some(i) == excerpt {
                continue;
            }
            if let Ok(t) = TraitId::parse(h) {
                traits.push((i, t));
            }
        }
    } else {
        for (name, t) in &columns.traits {
            traits.push((find(name)?, *t));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (_, t) in &traits {
        if !seen.insert(*t) {
            return Err(Error::Ingest(format!("two columns map to {t}")));
        }
    }
    Ok(Layout {
        id,
        prompt,
        text,
        excerpt,
        traits,
    })
}

fn parse_int(raw: &str, what: &str) -> std::result::Result<i64, String> {
    raw.trim()
        .parse::<i64>()
        .map_err(|_| format!("{what} value {raw:?} is not an integer"))
}

fn parse_row(fields: &[String], lay: &Layout) -> std::result::Result<Essay, String> {
    let get = |i: usize| fields.get(i).map(String::as_str).unwrap_or("");
    let prompt = parse_int(get(lay.prompt), "prompt")?;
    let prompt_id = PromptId::new(prompt).map_err(|e| e.to_string())?;
    let mut scores = BTreeMap::new();
    for &(col, t) in &lay.traits {
        let raw = get(col).trim();
        if raw.is_empty() {
            continue;
        }
        scores.insert(t, parse_int(raw, t.display_name())?);
    }
    let missing: Vec<&str> = traits_for_prompt(prompt_id)
        .iter()
        .filter(|t| !scores.contains_key(t))
        .map(|t| t.display_name())
        .collect();
    if !missing.is_empty() {
        return Err(format!("missing scores for {}", missing.join(", ")));
    }
    let excerpt = lay.excerpt.map(get).filter(|x| !x.trim().is_empty());
    Essay::new(get(lay.id).trim(), prompt, get(lay.text), excerpt, scores).map_err(|e| e.to_string())
}

/// Parses an ASAP++-style TSV: a header row, tab delimiters and no quoting.
/// Rows that fail validation are collected in the report; I/O and header
/// problems fail the whole call.
pub fn ingest_asap(path: &Path, columns: &ColumnMap) -> Result<(Vec<Essay>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let mut records = reader.byte_records();
    let Some(header) = records.next() else {
        return Ok((Vec::new(), IngestReport::default()));
    };
    let header: Vec<String> = header
        .map_err(|e| Error::Ingest(e.to_string()))?
        .iter()
        .map(decode)
        .collect();
    let lay = layout(&header, columns)?;
    let mut essays = Vec::new();
    let mut errors = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<String> = rec.iter().map(decode).collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        match parse_row(&fields, &lay) {
            Ok(e) => essays.push(e),
            Err(message) => errors.push(RowError {
                line,
                essay_id: fields.get(lay.id).map(|s| s.trim().to_string()),
                message,
            }),
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut unique = Vec::with_capacity(essays.len());
    for e in essays {
        if seen.insert(e.essay_id().to_string()) {
            unique.push(e);
        } else {
            errors.push(RowError {
                line: 0,
                essay_id: Some(e.essay_id().to_string()),
                message: "duplicate essay id".into(),
            });
        }
    }
    let report = IngestReport::of(&unique, errors);
    Ok((unique, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str = "essay_id\tessay_set\tessay\tOverall\tContent\tOrganization\tWord Choice\tSentence Fluency\tConventions\tPrompt Adherence\tLanguage\tNarrativity\n";

    fn write(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".tsv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_rows_and_collects_errors() {
        let body = format!(
            "{HEADER}\
             1\t1\tDear \"editor\", computers help.\t8\t4\t4\t3\t3\t4\t\t\t\n\
             2\t1\tToo high.\t8\t9\t4\t3\t3\t4\t\t\t\n\
             3\t3\tThe cyclist rode.\t2\t2\t\t\t\t\t3\t2\t3\n\
             4\t7\tBad prompt.\t1\t\t\t\t\t\t\t\t\n\
             5\t3\tHalf point.\t2\t2.5\t\t\t\t\t3\t2\t3\n\
             6\t3\tMissing narrativity.\t2\t2\t\t\t\t\t3\t2\t\n"
        );
        let f = write(&body);
        let (essays, rep) = ingest_asap(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(essays.len(), 2);
        assert_eq!(essays[0].text(), "Dear \"editor\", computers help.");
        assert_eq!(rep.per_prompt[&PromptId::new(1).unwrap()], 1);
        assert_eq!(rep.per_prompt[&PromptId::new(3).unwrap()], 1);
        let ids: Vec<&str> = rep.errors.iter().map(|e| e.essay_id.as_deref().unwrap()).collect();
        assert_eq!(ids, ["2", "4", "5", "6"]);
        assert!(rep.errors[0].message.contains("Content"), "{}", rep.errors[0].message);
        assert_eq!(rep.errors[0].line, 3);
        assert!(rep.errors[2].message.contains("not an integer"));
        assert!(rep.errors[3].message.contains("Narrativity"));
    }

    #[test]
    fn empty_file() {
        let f = write("");
        let (essays, rep) = ingest_asap(f.path(), &ColumnMap::default()).unwrap();
        assert!(essays.is_empty());
        assert_eq!(rep, IngestReport::default());
    }

    #[test]
    fn latin1_fallback_and_missing_column() {
        let mut bytes = HEADER.as_bytes().to_vec();
        bytes.extend_from_slice(b"1\t2\tcaf\xe9 text.\t4\t4\t4\t3\t3\t4\t\t\t\n");
        let mut f = tempfile::Builder::new().suffix(".tsv").tempfile().unwrap();
        f.write_all(&bytes).unwrap();
        let (essays, _) = ingest_asap(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(essays[0].text(), "café text.");
        let cols = ColumnMap {
            text: "body".into(),
            ..Default::default()
        };
        assert!(ingest_asap(f.path(), &cols).is_err());
    }
}
