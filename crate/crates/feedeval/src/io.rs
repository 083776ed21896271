//! JSONL artifacts, atomic writes and checksums.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's contents, streamed.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut h = Sha256::new();
    loop {
        let buf = f.fill_buf().map_err(|e| Error::io(path, e))?;
        if buf.is_empty() {
            break;
        }
        h.update(buf);
        let n = buf.len();
        f.consume(n);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Summary of one written artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteReport {
    pub schema: String,
    pub count: usize,
    pub bytes: u64,
    pub checksum: String,
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `path` through a temporary sibling that is synced and renamed into
/// place. The temporary file is removed when anything fails.
fn write_atomic<F>(path: &Path, body: F) -> Result<(u64, String)>
where
    F: FnOnce(&mut HashingWriter<BufWriter<File>>) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = HashingWriter::new(BufWriter::new(file));
        body(&mut w)?;
        let (inner, bytes, checksum) = w.finish();
        let file = inner.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok((bytes, checksum))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Writes one JSON document per line with LF terminators. Field order is the
/// declaration order of the serialized types, so identical input gives an
/// identical checksum.
pub fn emit_jsonl<T, I>(items: I, path: &Path, schema: &str) -> Result<WriteReport>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut count = 0;
    let (bytes, checksum) = write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            count += 1;
        }
        Ok(())
    })?;
    Ok(WriteReport {
        schema: schema.to_string(),
        count,
        bytes,
        checksum,
    })
}

/// Writes a pretty-printed JSON document atomically.
pub fn write_json<T: Serialize>(value: &T, path: &Path, schema: &str) -> Result<WriteReport> {
    let (bytes, checksum) = write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    })?;
    Ok(WriteReport {
        schema: schema.to_string(),
        count: 1,
        bytes,
        checksum,
    })
}

/// Writes raw text atomically.
pub fn write_text(text: &str, path: &Path, schema: &str) -> Result<WriteReport> {
    let (bytes, checksum) = write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))?;
    Ok(WriteReport {
        schema: schema.to_string(),
        count: 1,
        bytes,
        checksum,
    })
}

/// Reads a JSONL file; blank lines are skipped and errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item =
            serde_json::from_str(&line).map_err(|e| Error::Ingest(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))
}

/// Writer that counts and hashes everything passing through it.
pub struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
    bytes: u64,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        HashingWriter {
            inner,
            hasher: Sha256::new(),
            bytes: 0,
        }
    }

    fn finish(self) -> (W, u64, String) {
        let sum = self.hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        (self.inner, self.bytes, sum)
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Row {
        b: u32,
        a: String,
    }

    #[test]
    fn round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/rows.jsonl");
        let rows = vec![Row { b: 1, a: "é".into() }, Row { b: 2, a: "z".into() }];
        let r1 = emit_jsonl(&rows, &p, "row").unwrap();
        assert_eq!(r1.count, 2);
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "{\"b\":1,\"a\":\"é\"}\n{\"b\":2,\"a\":\"z\"}\n"
        );
        assert_eq!(r1.checksum, file_sha256(&p).unwrap());
        assert_eq!(r1.bytes, fs::metadata(&p).unwrap().len());
        let r2 = emit_jsonl(&rows, &p, "row").unwrap();
        assert_eq!(r1, r2);
        let back: Vec<Row> = read_jsonl(&p).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn empty_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        let r = emit_jsonl(Vec::<Row>::new(), &p, "row").unwrap();
        assert_eq!((r.count, r.bytes), (0, 0));
        assert_eq!(r.checksum, sha256_hex(b""));
    }

    #[test]
    fn failed_write_leaves_nothing() {
        struct Bad;
        impl Serialize for Bad {
            fn serialize<S: serde::Serializer>(&self, _: S) -> std::result::Result<S::Ok, S::Error> {
                Err(serde::ser::Error::custom("boom"))
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        assert!(emit_jsonl([Bad], &p, "bad").is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        fs::write(&p, "{\"b\":1,\"a\":\"x\"}\n\nnot json\n").unwrap();
        let err = read_jsonl::<Row>(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }
}
