//! In-memory experiment state, rebuilt from the event log.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use guesslab::corpus::SentenceRecord;
use guesslab::session::{start_session, Observation, Session, SessionConfig, SessionError, SessionStatus};
use serde::{Deserialize, Serialize};

use crate::store::LogRecord;

/// Sentence pool indexed by id.
pub struct SentencePool {
    sentences: Vec<SentenceRecord>,
    by_id: HashMap<String, usize>,
}

impl SentencePool {
    pub fn new(sentences: Vec<SentenceRecord>) -> Self {
        let by_id = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        SentencePool { sentences, by_id }
    }

    pub fn get(&self, id: &str) -> Option<&SentenceRecord> {
        self.by_id.get(id).map(|&i| &self.sentences[i])
    }

    pub fn sentences(&self) -> &[SentenceRecord] {
        &self.sentences
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub display_name: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub participants: usize,
    pub sessions_started: usize,
    pub sessions_completed: usize,
    pub sessions_abandoned: usize,
    pub sessions_active: usize,
    pub total_guesses: usize,
    pub correct_guesses: usize,
    pub observations: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ApplyError {
    #[error("record {index}: {message}")]
    Inconsistent { index: usize, message: String },
    #[error("record {index}: {source}")]
    Session {
        index: usize,
        #[source]
        source: SessionError,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub participants: BTreeMap<String, Participant>,
    pub sessions: BTreeMap<String, Session>,
    /// Sentences each participant has been given.
    pub seen: BTreeMap<String, BTreeSet<String>>,
    /// Observations in log order.
    pub observations: Vec<Observation>,
    /// Number of log records applied so far.
    pub records_applied: usize,
}

impl ExperimentState {
    /// Applies one log record. Both startup replay and the request path
    /// go through here, after the record has been made durable.
    pub fn apply(
        &mut self,
        record: &LogRecord,
        pool: &SentencePool,
        config: &SessionConfig,
    ) -> Result<(), ApplyError> {
        let index = self.records_applied;
        let bad = |message: String| ApplyError::Inconsistent { index, message };
        match record {
            LogRecord::ParticipantRegistered {
                participant_id,
                display_name,
                at,
            } => {
                if self.participants.contains_key(participant_id) {
                    return Err(bad(format!("participant {participant_id} registered twice")));
                }
                self.participants.insert(
                    participant_id.clone(),
                    Participant {
                        id: participant_id.clone(),
                        display_name: display_name.clone(),
                        created_at: *at,
                    },
                );
            }
            LogRecord::SessionStarted {
                session_id,
                participant_id,
                sentence_id,
                prefix_len,
                budget,
                at,
            } => {
                if !self.participants.contains_key(participant_id) {
                    return Err(bad(format!("unknown participant {participant_id}")));
                }
                if self.sessions.contains_key(session_id) {
                    return Err(bad(format!("session {session_id} started twice")));
                }
                let sentence = pool
                    .get(sentence_id)
                    .ok_or_else(|| bad(format!("sentence {sentence_id} not in the pool")))?;
                let cfg = SessionConfig {
                    prefix_len: *prefix_len,
                    ..config.clone()
                };
                let (session, _) = start_session(session_id, participant_id, sentence, &cfg, *at)
                    .map_err(|source| ApplyError::Session { index, source })?;
                if session.initial_budget() != *budget {
                    return Err(bad(format!(
                        "session {session_id} budget {budget} disagrees with sentence ({})",
                        session.initial_budget()
                    )));
                }
                self.seen
                    .entry(participant_id.clone())
                    .or_default()
                    .insert(sentence_id.clone());
                self.sessions.insert(session_id.clone(), session);
            }
            LogRecord::Guess(event) => {
                let session = self
                    .sessions
                    .get_mut(&event.session_id)
                    .ok_or_else(|| bad(format!("guess for unknown session {}", event.session_id)))?;
                if let Some(obs) = session
                    .replay_event(config, event)
                    .map_err(|source| ApplyError::Session { index, source })?
                {
                    self.observations.push(obs);
                }
            }
            LogRecord::SessionAbandoned { session_id, at, .. } => {
                let session = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| bad(format!("abandon of unknown session {session_id}")))?;
                session
                    .abandon(*at)
                    .map_err(|source| ApplyError::Session { index, source })?;
            }
        }
        self.records_applied += 1;
        Ok(())
    }

    pub fn replay<'a, I>(
        records: I,
        pool: &SentencePool,
        config: &SessionConfig,
    ) -> Result<Self, ApplyError>
    where
        I: IntoIterator<Item = &'a LogRecord>,
    {
        let mut state = ExperimentState::default();
        for r in records {
            state.apply(r, pool, config)?;
        }
        Ok(state)
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats {
            participants: self.participants.len(),
            sessions_started: self.sessions.len(),
            observations: self.observations.len(),
            ..Stats::default()
        };
        for session in self.sessions.values() {
            match session.status() {
                SessionStatus::Active => s.sessions_active += 1,
                SessionStatus::Completed => s.sessions_completed += 1,
                SessionStatus::Abandoned => s.sessions_abandoned += 1,
            }
            s.total_guesses += session.total_guesses();
            s.correct_guesses += session.correct_guesses();
        }
        s
    }
}
