//! Observation and session files consumed by the analysis commands.
//!
//! Both readers accept plain JSON Lines as well as the service export, whose
//! lines carry a `kind` tag (`header`, `session`, `observation`); lines of
//! other kinds are skipped.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::session::Observation;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("observation for session {0} which the sessions file does not list")]
    UnknownSession(String),
}

/// Per-session guess totals as listed in a sessions file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTotals {
    pub session_id: String,
    pub total_guesses: u64,
    pub correct_guesses: u64,
}

fn read_tagged<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let json_err = |source| DatasetError::Json {
            path: path.to_owned(),
            line: i + 1,
            source,
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(json_err)?;
        match value.get("kind").and_then(|k| k.as_str()) {
            Some(k) if k != kind => continue,
            _ => out.push(serde_json::from_value(value).map_err(json_err)?),
        }
    }
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>, DatasetError> {
    read_tagged(path, "observation")
}

pub fn read_session_totals(path: &Path) -> Result<Vec<SessionTotals>, DatasetError> {
    read_tagged(path, "session")
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// One session's guess totals and observations.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionData {
    pub session_id: String,
    pub total_guesses: u64,
    pub correct_guesses: u64,
    pub observations: Vec<Observation>,
}

/// Groups observations by session, ordered by session id. Sessions without
/// observations are left out. Without a totals list, a session's guess count
/// is reconstructed as the sum of its attempts, which misses wrong guesses
/// on a character that was never solved.
pub fn group_sessions(
    observations: Vec<Observation>,
    totals: Option<&[SessionTotals]>,
) -> Result<Vec<SessionData>, DatasetError> {
    let mut by_session: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for o in observations {
        by_session.entry(o.session_id.clone()).or_default().push(o);
    }
    let listed: Option<BTreeMap<&str, &SessionTotals>> =
        totals.map(|t| t.iter().map(|s| (s.session_id.as_str(), s)).collect());
    by_session
        .into_iter()
        .map(|(session_id, observations)| {
            let (total_guesses, correct_guesses) = match &listed {
                Some(map) => {
                    let t = map
                        .get(session_id.as_str())
                        .ok_or_else(|| DatasetError::UnknownSession(session_id.clone()))?;
                    (t.total_guesses, t.correct_guesses)
                }
                None => (
                    observations.iter().map(|o| o.attempts as u64).sum(),
                    observations.len() as u64,
                ),
            };
            Ok(SessionData {
                session_id,
                total_guesses,
                correct_guesses,
                observations,
            })
        })
        .collect()
}
