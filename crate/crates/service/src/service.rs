//! Request handling independent of HTTP.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use chrono::{DateTime, Utc};
use guesslab::session::{
    assign_sentence, start_session, GuessOutcome, SessionConfig, SessionError, SessionStatus,
};
use guesslab::Alphabet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::state::{ApplyError, ExperimentState, SentencePool, Stats};
use crate::store::{write_atomic, AbandonReason, LogRecord, LogStore, StorageError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown participant {0}")]
    UnknownParticipant(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("no sentence in the pool is long enough for the configured prefix")]
    PoolExhausted,
    #[error("session is {0:?}")]
    SessionNotActive(SessionStatus),
    #[error("{0:?} was already tried at this position")]
    RepeatGuess(char),
    #[error("{0:?} is not a single alphabet symbol")]
    InvalidSymbol(String),
    #[error("guess arrived too soon; retry after {} ms", retry_after.as_millis())]
    RateLimited { retry_after: Duration },
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("state no longer matches the event log: {0}")]
    Internal(String),
}

impl ServiceError {
    fn from_session(e: SessionError) -> Self {
        match e {
            SessionError::RateLimited { retry_after } => ServiceError::RateLimited { retry_after },
            SessionError::RepeatGuess(c) => ServiceError::RepeatGuess(c),
            SessionError::InvalidSymbol(c) => ServiceError::InvalidSymbol(c.to_string()),
            SessionError::SessionNotActive(s) => ServiceError::SessionNotActive(s),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<ApplyError> for ServiceError {
    fn from(e: ApplyError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecoveryError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("replaying the event log: {0}")]
    Replay(#[from] ApplyError),
}

/// Operational settings echoed in exports so they describe themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub prefix_len: usize,
    pub min_attempt_interval_ms: u64,
    pub session_ttl_secs: u64,
    pub export_salt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartedSession {
    pub session_id: String,
    pub prefix: String,
    pub prefix_len: usize,
    pub budget: usize,
    pub sentence_length: usize,
    pub min_attempt_interval_ms: u64,
}

/// What a client may see of a session. Neither the characters past the
/// cursor nor the sentence id are ever included: the same sentence can be
/// active in another session, even after this one has ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub participant_id: String,
    pub status: SessionStatus,
    pub revealed_text: String,
    pub cursor: usize,
    pub prefix_len: usize,
    pub sentence_length: usize,
    pub initial_budget: usize,
    pub budget_remaining: usize,
    pub wrong_guesses_current: Vec<char>,
    pub total_guesses: usize,
    pub correct_guesses: usize,
    pub started_at: DateTime<Utc>,
    pub last_event_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    last_record: Option<LogRecord>,
    state: ExperimentState,
}

struct Inner {
    state: ExperimentState,
    rng: ChaCha8Rng,
}

pub struct Service {
    inner: Mutex<Inner>,
    store: Arc<dyn LogStore>,
    clock: Arc<dyn Clock>,
    pool: SentencePool,
    session_cfg: SessionConfig,
    settings: Settings,
    snapshot_path: Option<PathBuf>,
}

pub struct ServiceParts {
    pub store: Arc<dyn LogStore>,
    pub clock: Arc<dyn Clock>,
    pub pool: SentencePool,
    pub alphabet: Alphabet,
    pub settings: Settings,
    pub snapshot: Option<PathBuf>,
    pub seed: u64,
}

fn random_id(rng: &mut ChaCha8Rng) -> String {
    hex::encode(rng.random::<[u8; 16]>())
}

impl Service {
    /// Restores state from the snapshot, if one matches the log, and the
    /// log records after it.
    pub fn open(parts: ServiceParts) -> Result<Self, RecoveryError> {
        let session_cfg = SessionConfig {
            prefix_len: parts.settings.prefix_len,
            min_attempt_interval: Duration::from_millis(parts.settings.min_attempt_interval_ms),
            alphabet: parts.alphabet,
        };
        let records = parts.store.read_all()?;
        let mut state = parts
            .snapshot
            .as_deref()
            .and_then(|p| load_snapshot(p, &records))
            .unwrap_or_default();
        for r in &records[state.records_applied..] {
            state.apply(r, &parts.pool, &session_cfg)?;
        }
        tracing::info!(records = records.len(), sessions = state.sessions.len(), "state recovered");
        // a restart with the same seed must not hand out the same ids again
        let mut rng = ChaCha8Rng::seed_from_u64(parts.seed);
        rng.set_stream(records.len() as u64);
        Ok(Service {
            inner: Mutex::new(Inner { state, rng }),
            store: parts.store,
            clock: parts.clock,
            pool: parts.pool,
            session_cfg,
            settings: parts.settings,
            snapshot_path: parts.snapshot,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.session_cfg.alphabet
    }

    /// Persists `record`, then applies it. Nothing changes if the write fails.
    fn commit(&self, inner: &mut Inner, record: LogRecord) -> Result<(), ServiceError> {
        self.store.append(&record)?;
        inner.state.apply(&record, &self.pool, &self.session_cfg)?;
        Ok(())
    }

    pub fn register(&self, display_name: Option<String>) -> Result<String, ServiceError> {
        let mut inner = self.lock();
        let mut participant_id = random_id(&mut inner.rng);
        while inner.state.participants.contains_key(&participant_id) {
            participant_id = random_id(&mut inner.rng);
        }
        let record = LogRecord::ParticipantRegistered {
            participant_id: participant_id.clone(),
            display_name,
            at: self.clock.now(),
        };
        self.commit(&mut inner, record)?;
        Ok(participant_id)
    }

    pub fn start_session(&self, participant_id: &str) -> Result<StartedSession, ServiceError> {
        let mut inner = self.lock();
        if !inner.state.participants.contains_key(participant_id) {
            return Err(ServiceError::UnknownParticipant(participant_id.to_owned()));
        }
        let seen: HashSet<String> = inner
            .state
            .seen
            .get(participant_id)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default();
        let Inner { rng, state } = &mut *inner;
        let sentence = assign_sentence(self.pool.sentences(), &seen, self.session_cfg.prefix_len, rng)
            .ok_or(ServiceError::PoolExhausted)?;
        let mut session_id = random_id(rng);
        while state.sessions.contains_key(&session_id) {
            session_id = random_id(rng);
        }
        let now = self.clock.now();
        let (session, prefix) = start_session(&session_id, participant_id, sentence, &self.session_cfg, now)
            .map_err(ServiceError::from_session)?;
        self.commit(
            &mut inner,
            LogRecord::SessionStarted {
                session_id: session_id.clone(),
                participant_id: participant_id.to_owned(),
                sentence_id: sentence.id.clone(),
                prefix_len: self.session_cfg.prefix_len,
                budget: session.initial_budget(),
                at: now,
            },
        )?;
        Ok(StartedSession {
            session_id,
            prefix,
            prefix_len: self.session_cfg.prefix_len,
            budget: session.initial_budget(),
            sentence_length: session.sentence_len(),
            min_attempt_interval_ms: self.settings.min_attempt_interval_ms,
        })
    }

    pub fn guess(&self, session_id: &str, symbol: &str) -> Result<GuessOutcome, ServiceError> {
        let mut chars = symbol.chars();
        let symbol = match (chars.next(), chars.next()) {
            (Some(c), None) => self
                .session_cfg
                .alphabet
                .canonical(c)
                .ok_or_else(|| ServiceError::InvalidSymbol(symbol.to_owned()))?,
            _ => return Err(ServiceError::InvalidSymbol(symbol.to_owned())),
        };
        let mut inner = self.lock();
        let session = inner
            .state
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))?;
        // dry run on a copy; the real session changes only through the log
        let mut probe = session.clone();
        let step = probe
            .submit_guess(&self.session_cfg, symbol, self.clock.now())
            .map_err(ServiceError::from_session)?;
        self.commit(&mut inner, LogRecord::Guess(step.event))?;
        Ok(step.outcome)
    }

    pub fn abandon(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        let mut inner = self.lock();
        let status = inner
            .state
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))?
            .status();
        if status != SessionStatus::Active {
            return Err(ServiceError::SessionNotActive(status));
        }
        self.commit(
            &mut inner,
            LogRecord::SessionAbandoned {
                session_id: session_id.to_owned(),
                reason: AbandonReason::Participant,
                at: self.clock.now(),
            },
        )?;
        Ok(view(&inner.state, session_id).expect("session exists"))
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        view(&self.lock().state, session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))
    }

    pub fn stats(&self) -> Stats {
        self.lock().state.stats()
    }

    /// Marks sessions idle for longer than the TTL as abandoned. Returns how
    /// many were marked.
    pub fn sweep(&self) -> Result<usize, ServiceError> {
        let ttl = Duration::from_secs(self.settings.session_ttl_secs);
        let now = self.clock.now();
        let mut inner = self.lock();
        let stale: Vec<String> = inner
            .state
            .sessions
            .values()
            .filter(|s| s.is_stale(now, ttl))
            .map(|s| s.id.clone())
            .collect();
        for id in &stale {
            self.commit(
                &mut inner,
                LogRecord::SessionAbandoned {
                    session_id: id.clone(),
                    reason: AbandonReason::Timeout,
                    at: now,
                },
            )?;
        }
        Ok(stale.len())
    }

    /// Writes the current state to the snapshot file, if one is configured.
    pub fn snapshot(&self) -> Result<(), ServiceError> {
        let Some(path) = &self.snapshot_path else {
            return Ok(());
        };
        let bytes = {
            let inner = self.lock();
            let records = self.store.read_all()?;
            let snap = Snapshot {
                last_record: records[..inner.state.records_applied].last().cloned(),
                state: inner.state.clone(),
            };
            serde_json::to_vec(&snap).expect("state serializes")
        };
        write_atomic(path, &bytes).map_err(|e| StorageError::Unavailable(e.to_string()))?;
        Ok(())
    }

    pub fn export_jsonl(&self) -> Vec<u8> {
        crate::export::export_jsonl(&self.lock().state, &self.settings, &self.session_cfg.alphabet)
    }

    pub fn pseudonym(&self, participant_id: &str) -> String {
        pseudonym(&self.settings.export_salt, participant_id)
    }
}

fn load_snapshot(path: &Path, records: &[LogRecord]) -> Option<ExperimentState> {
    let bytes = std::fs::read(path).ok()?;
    let snap: Snapshot = match serde_json::from_slice(&bytes) {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable snapshot");
            return None;
        }
    };
    let n = snap.state.records_applied;
    let matches = n <= records.len() && records[..n].last() == snap.last_record.as_ref();
    if !matches {
        tracing::warn!(path = %path.display(), "snapshot does not match the event log; replaying from the start");
        return None;
    }
    Some(snap.state)
}

pub fn pseudonym(salt: &str, id: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(id.as_bytes());
    hex::encode(h.finalize())
}

fn view(state: &ExperimentState, session_id: &str) -> Option<SessionView> {
    let s = state.sessions.get(session_id)?;
    Some(SessionView {
        session_id: s.id.clone(),
        participant_id: s.participant_id.clone(),
        status: s.status(),
        revealed_text: s.revealed_text(),
        cursor: s.cursor(),
        prefix_len: s.prefix_len(),
        sentence_length: s.sentence_len(),
        initial_budget: s.initial_budget(),
        budget_remaining: s.budget_remaining(),
        wrong_guesses_current: s.attempts_on_current().to_vec(),
        total_guesses: s.total_guesses(),
        correct_guesses: s.correct_guesses(),
        started_at: s.started_at(),
        last_event_at: s.last_event_at(),
    })
}
