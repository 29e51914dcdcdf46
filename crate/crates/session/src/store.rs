//! Append-only JSON-lines log, one file per session. A session is restored
//! by replaying its records in order.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use trade_core::{Feedback, TerminalReason};
use uuid::Uuid;

use crate::config::SessionConfig;
use crate::error::{Result, SessionError};
use crate::score::Score;

/// Why a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCause {
    /// The negotiator stopped on its own, e.g. budget or angle threshold.
    Negotiation,
    TimeLimit,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Created { at: DateTime<Utc>, id: Uuid, config: SessionConfig },
    Offered { at: DateTime<Utc>, token: u64 },
    Responded { at: DateTime<Utc>, token: u64, feedback: Feedback, tag: Option<String> },
    Ended { at: DateTime<Utc>, cause: EndCause, reason: TerminalReason, score: Score },
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| SessionError::Io { path: dir.clone(), source })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn append(&self, id: Uuid, records: &[Record]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let path = self.path(id);
        let io = |source| SessionError::Io { path: path.clone(), source };
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("records serialize"));
            text.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        f.write_all(text.as_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Vec<Record>> {
        let text = fs::read_to_string(path).map_err(|source| SessionError::Io { path: path.to_path_buf(), source })?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| SessionError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// Every session log in the directory, sorted by file name.
    pub fn load_all(&self) -> Result<Vec<(PathBuf, Vec<Record>)>> {
        let io = |source| SessionError::Io { path: self.dir.clone(), source };
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths.into_iter().map(|p| Ok((p.clone(), Self::read(&p)?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appended_records_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let id = Uuid::nil();
        let at = DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z").unwrap().with_timezone(&Utc);
        let recs = vec![
            Record::Offered { at, token: 1 },
            Record::Responded { at, token: 1, feedback: Feedback::Counter(vec![1.0, -2.0, 0.0]), tag: None },
        ];
        store.append(id, &recs[..1]).unwrap();
        store.append(id, &recs[1..]).unwrap();
        assert_eq!(Store::read(&store.path(id)).unwrap(), recs);
        let line = fs::read_to_string(store.path(id)).unwrap();
        assert!(line.contains("\"at\":\"2024-05-01T12:00:00Z\""));
    }

    #[test]
    fn corrupt_lines_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"type\":\"offered\",\"at\":\"2024-05-01T12:00:00Z\",\"token\":1}\nnot json\n").unwrap();
        let err = Store::read(&p).unwrap_err().to_string();
        assert!(err.contains("x.jsonl:2"), "{err}");
    }
}
