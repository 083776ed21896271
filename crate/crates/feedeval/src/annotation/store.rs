//! Append-only JSONL event log with fsync on every append.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::model::Event;
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens or creates the log and returns the events already in it. A
    /// final line without its newline was never acknowledged and is
    /// truncated away; any other unparseable line is an error.
    pub fn open(path: &Path) -> Result<(EventLog, Vec<Event>)> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut events = Vec::new();
        let mut good_len: u64 = 0;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut line_no = 0usize;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = line.ends_with('\n');
            if line.trim().is_empty() {
                if complete {
                    good_len += n as u64;
                }
                continue;
            }
            if !complete {
                log::warn!("{}: dropping incomplete final line", path.display());
                break;
            }
            let ev: Event = serde_json::from_str(line.trim_end())
                .map_err(|e| Error::Protocol(format!("{}:{line_no}: {e}", path.display())))?;
            if let Some(last) = events.last().map(|e: &Event| e.seq) {
                if ev.seq <= last {
                    return Err(Error::Protocol(format!(
                        "{}:{line_no}: sequence {} after {last}",
                        path.display(),
                        ev.seq
                    )));
                }
            }
            events.push(ev);
            good_len += n as u64;
        }
        drop(reader);
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len != good_len {
            file.set_len(good_len).map_err(|e| Error::io(path, e))?;
            file.sync_all().map_err(|e| Error::io(path, e))?;
        }
        file.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        Ok((
            EventLog {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    /// Appends one event and returns once it is on disk.
    pub fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::model::EventBody;

    fn ev(seq: u64) -> Event {
        Event {
            seq,
            body: EventBody::AnnotatorRegistered {
                annotator_id: format!("a{seq}"),
                name: None,
            },
        }
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let (mut log, events) = EventLog::open(&path).unwrap();
        assert!(events.is_empty());
        log.append(&ev(1)).unwrap();
        log.append(&ev(2)).unwrap();
        drop(log);
        let (_, events) = EventLog::open(&path).unwrap();
        assert_eq!(events, vec![ev(1), ev(2)]);
    }

    #[test]
    fn torn_tail_is_dropped_and_corruption_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let (mut log, _) = EventLog::open(&path).unwrap();
        log.append(&ev(1)).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":2,\"ev").unwrap();
        drop(f);
        let (mut log, events) = EventLog::open(&path).unwrap();
        assert_eq!(events.len(), 1);
        log.append(&ev(2)).unwrap();
        drop(log);
        assert_eq!(EventLog::open(&path).unwrap().1.len(), 2);

        std::fs::write(&path, "garbage\n").unwrap();
        assert!(EventLog::open(&path).is_err());
    }
}
