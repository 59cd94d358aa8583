//! Append-only event log (one JSON object per line) and snapshots.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use alienzoo_core::survey::SurveyResponse;
use alienzoo_core::{Condition, PlantVector};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::state::SessionEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Created {
        condition: Condition,
        seed: u64,
    },
    Advanced {},
    Fed {
        leaves: PlantVector,
        decision_time_ms: u64,
    },
    Attention {
        answer: i64,
    },
    Survey {
        response: SurveyResponse,
    },
    PaymentIssued {
        code_hash: String,
    },
    PaymentDeleted {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: String,
    /// Per-session, starting at 0 and increasing by one.
    pub seq: u64,
    /// UTC milliseconds since the epoch.
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

pub trait EventSink: Send {
    /// Persist one record. Either the whole line is written or an error
    /// is returned.
    fn append(&mut self, record: &EventRecord) -> Result<(), ServiceError>;
}

pub struct FileLog {
    file: File,
    path: PathBuf,
}

impl FileLog {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(FileLog {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for FileLog {
    fn append(&mut self, record: &EventRecord) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

/// In-memory sink; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemoryLog {
    lines: Arc<Mutex<Vec<String>>>,
}

impl MemoryLog {
    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().expect("log poisoned").clone()
    }

    pub fn records(&self) -> Result<Vec<EventRecord>, ServiceError> {
        parse_lines(self.lines().join("\n").as_bytes())
    }
}

impl EventSink for MemoryLog {
    fn append(&mut self, record: &EventRecord) -> Result<(), ServiceError> {
        let line = serde_json::to_string(record)?;
        self.lines.lock().expect("log poisoned").push(line);
        Ok(())
    }
}

fn parse_lines(reader: impl BufRead) -> Result<Vec<EventRecord>, ServiceError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            // A crash can leave half a line at the very end.
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(ServiceError::Storage(format!(
                    "event log line {}: {e}",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// All records of the log at `path`; a missing file is an empty log.
pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, ServiceError> {
    match File::open(path) {
        Ok(f) => parse_lines(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sessions: Vec<SessionEntry>,
}

/// Write via a temporary file and rename, so a reader never sees half a
/// snapshot.
pub fn write_snapshot(path: &Path, snapshot: &Snapshot) -> Result<(), ServiceError> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec(snapshot)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Option<Snapshot>, ServiceError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seq: u64, event: Event) -> EventRecord {
        EventRecord {
            session_id: "s".into(),
            seq,
            timestamp_ms: 1000 + seq,
            event,
        }
    }

    #[test]
    fn line_shape() {
        let r = record(
            2,
            Event::Fed {
                leaves: "0,5,0,1,0".parse().unwrap(),
                decision_time_ms: 4100,
            },
        );
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"session_id":"s","seq":2,"timestamp_ms":1002,"kind":"fed","payload":{"leaves":[0,5,0,1,0],"decision_time_ms":4100}}"#
        );
        assert_eq!(serde_json::from_str::<EventRecord>(&line).unwrap(), r);
        let adv = serde_json::to_string(&record(3, Event::Advanced {})).unwrap();
        assert_eq!(
            serde_json::from_str::<EventRecord>(&adv).unwrap(),
            record(3, Event::Advanced {})
        );
    }

    #[test]
    fn file_log_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log/events.jsonl");
        let mut log = FileLog::open(&path).unwrap();
        let records = vec![
            record(
                0,
                Event::Created {
                    condition: Condition::Cfe,
                    seed: 4,
                },
            ),
            record(1, Event::Advanced {}),
            record(2, Event::Attention { answer: 12 }),
        ];
        for r in &records {
            log.append(r).unwrap();
        }
        assert_eq!(read_log(&path).unwrap(), records);

        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"session_id":"s","se"#).unwrap();
        assert_eq!(read_log(&path).unwrap(), records);
        assert!(read_log(&dir.path().join("missing")).unwrap().is_empty());
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let text = "{\"bad\":1}\n{\"session_id\":\"s\",\"seq\":0,\"timestamp_ms\":0,\"kind\":\"advanced\",\"payload\":{}}\n";
        assert!(parse_lines(text.as_bytes()).is_err());
    }
}
