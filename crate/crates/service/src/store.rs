//! Durable storage: the append-only event log and state snapshots.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use guesslab::session::GuessEvent;
use serde::{Deserialize, Serialize};

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    ParticipantRegistered {
        participant_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        display_name: Option<String>,
        at: DateTime<Utc>,
    },
    SessionStarted {
        session_id: String,
        participant_id: String,
        sentence_id: String,
        prefix_len: usize,
        budget: usize,
        at: DateTime<Utc>,
    },
    Guess(GuessEvent),
    SessionAbandoned {
        session_id: String,
        reason: AbandonReason,
        at: DateTime<Utc>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbandonReason {
    Participant,
    Timeout,
}

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("storage unavailable: {0}")]
    Unavailable(String),
    #[error("event log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

pub trait LogStore: Send + Sync {
    /// Appends one record durably; returns only once it is on disk.
    fn append(&self, record: &LogRecord) -> Result<(), StorageError>;

    fn read_all(&self) -> Result<Vec<LogRecord>, StorageError>;
}

/// JSON Lines file, synced after every append.
pub struct FileLogStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl FileLogStore {
    /// Opens or creates the log. A final line cut short by a crash is
    /// dropped from the file before appending resumes.
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        let unavailable = |e: std::io::Error| StorageError::Unavailable(format!("{}: {e}", path.display()));
        if path.exists() {
            let bytes = std::fs::read(path).map_err(unavailable)?;
            if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating partial last line");
                let f = OpenOptions::new().write(true).open(path).map_err(unavailable)?;
                f.set_len(keep as u64).map_err(unavailable)?;
                f.sync_all().map_err(unavailable)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(unavailable)?;
        Ok(FileLogStore {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogStore for FileLogStore {
    fn append(&self, record: &LogRecord) -> Result<(), StorageError> {
        let mut line = serde_json::to_vec(record).expect("log record serializes");
        line.push(b'\n');
        let mut file = self.file.lock().unwrap();
        file.write_all(&line)
            .and_then(|_| file.sync_data())
            .map_err(|e| StorageError::Unavailable(e.to_string()))
    }

    fn read_all(&self) -> Result<Vec<LogRecord>, StorageError> {
        let _guard = self.file.lock().unwrap();
        read_log(&self.path)
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, StorageError> {
    let file = File::open(path).map_err(|e| StorageError::Unavailable(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StorageError::Unavailable(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StorageError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// In-memory log. Appends can be made to fail to exercise outage handling.
#[derive(Default)]
pub struct MemoryLogStore {
    records: Mutex<Vec<LogRecord>>,
    failing: AtomicBool,
}

impl MemoryLogStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }
}

impl LogStore for MemoryLogStore {
    fn append(&self, record: &LogRecord) -> Result<(), StorageError> {
        if self.failing.load(Ordering::SeqCst) {
            return Err(StorageError::Unavailable("disk offline".into()));
        }
        self.records.lock().unwrap().push(record.clone());
        Ok(())
    }

    fn read_all(&self) -> Result<Vec<LogRecord>, StorageError> {
        if self.failing.load(Ordering::SeqCst) {
            return Err(StorageError::Unavailable("disk offline".into()));
        }
        Ok(self.records.lock().unwrap().clone())
    }
}

/// Writes `bytes` to `path` atomically: temp file, sync, rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)
}
