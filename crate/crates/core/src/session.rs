//! Guess-by-guess experiment state machine.
//!
//! A session reveals the first `prefix_len` characters of a sentence and
//! then accepts one guess at a time for the character under the cursor.
//! Every accepted guess, right or wrong, spends one unit of budget. A
//! correct guess yields an [`Observation`] recording how many tries the
//! character took.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::corpus::SentenceRecord;

pub const DEFAULT_PREFIX_LEN: usize = 70;
pub const DEFAULT_MIN_ATTEMPT_INTERVAL: Duration = Duration::from_millis(300);

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub prefix_len: usize,
    pub min_attempt_interval: Duration,
    pub alphabet: Alphabet,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            prefix_len: DEFAULT_PREFIX_LEN,
            min_attempt_interval: DEFAULT_MIN_ATTEMPT_INTERVAL,
            alphabet: Alphabet::ukrainian(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    Abandoned,
}

/// One correctly guessed character.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub session_id: String,
    pub participant_id: String,
    pub sentence_id: String,
    /// 0-based character index; the first guessable position equals the
    /// prefix length.
    pub position: usize,
    pub attempts: u32,
    pub timestamp: DateTime<Utc>,
}

/// Raw log entry for a single accepted guess.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessEvent {
    pub session_id: String,
    pub position: usize,
    pub guessed_symbol: char,
    pub correct: bool,
    pub timestamp: DateTime<Utc>,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessOutcome {
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revealed_symbol: Option<char>,
    pub budget_remaining: usize,
    pub session_status: SessionStatus,
    pub position: usize,
    pub attempts_so_far: u32,
}

/// Everything produced by one accepted guess.
#[derive(Clone, Debug, PartialEq)]
pub struct GuessStep {
    pub outcome: GuessOutcome,
    pub event: GuessEvent,
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("sentence has {length} characters, need more than the {prefix_len}-character prefix")]
    SentenceTooShort { length: usize, prefix_len: usize },
    #[error("guess arrived too soon; retry after {retry_after:?}")]
    RateLimited { retry_after: Duration },
    #[error("{0:?} was already tried at this position")]
    RepeatGuess(char),
    #[error("{0:?} is not in the alphabet")]
    InvalidSymbol(char),
    #[error("session is {0:?}")]
    SessionNotActive(SessionStatus),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub participant_id: String,
    pub sentence_id: String,
    target: Vec<char>,
    prefix_len: usize,
    cursor: usize,
    initial_budget: usize,
    budget_remaining: usize,
    attempts_on_current: Vec<char>,
    status: SessionStatus,
    started_at: DateTime<Utc>,
    last_event_at: DateTime<Utc>,
    last_guess_at: Option<DateTime<Utc>>,
    next_seq: u64,
    wrong_guesses: usize,
    observations: usize,
}

/// Starts a session on `sentence`. Returns the session together with the
/// revealed prefix; the rest of the sentence stays inside the session.
pub fn start_session(
    id: impl Into<String>,
    participant_id: impl Into<String>,
    sentence: &SentenceRecord,
    config: &SessionConfig,
    now: DateTime<Utc>,
) -> Result<(Session, String), SessionError> {
    let target: Vec<char> = sentence.normalized_text.chars().collect();
    if target.len() <= config.prefix_len {
        return Err(SessionError::SentenceTooShort {
            length: target.len(),
            prefix_len: config.prefix_len,
        });
    }
    let budget = target.len() - config.prefix_len;
    let prefix: String = target[..config.prefix_len].iter().collect();
    let session = Session {
        id: id.into(),
        participant_id: participant_id.into(),
        sentence_id: sentence.id.clone(),
        target,
        prefix_len: config.prefix_len,
        cursor: config.prefix_len,
        initial_budget: budget,
        budget_remaining: budget,
        attempts_on_current: Vec::new(),
        status: SessionStatus::Active,
        started_at: now,
        last_event_at: now,
        last_guess_at: None,
        next_seq: 0,
        wrong_guesses: 0,
        observations: 0,
    };
    Ok((session, prefix))
}

impl Session {
    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn sentence_len(&self) -> usize {
        self.target.len()
    }

    pub fn initial_budget(&self) -> usize {
        self.initial_budget
    }

    pub fn budget_remaining(&self) -> usize {
        self.budget_remaining
    }

    pub fn attempts_on_current(&self) -> &[char] {
        &self.attempts_on_current
    }

    pub fn started_at(&self) -> DateTime<Utc> {
        self.started_at
    }

    pub fn last_event_at(&self) -> DateTime<Utc> {
        self.last_event_at
    }

    /// Guesses accepted so far, correct and wrong.
    pub fn total_guesses(&self) -> usize {
        self.initial_budget - self.budget_remaining
    }

    pub fn correct_guesses(&self) -> usize {
        self.observations
    }

    pub fn wrong_guesses(&self) -> usize {
        self.wrong_guesses
    }

    /// Prefix plus every correctly guessed character. Never includes the
    /// character under the cursor.
    pub fn revealed_text(&self) -> String {
        self.target[..self.cursor].iter().collect()
    }

    /// Whole sentence; only for sessions that are no longer active.
    pub fn full_text(&self) -> Option<String> {
        (self.status != SessionStatus::Active).then(|| self.target.iter().collect())
    }

    pub fn meta(&self) -> SessionMeta {
        SessionMeta {
            participant_id: self.participant_id.clone(),
            sentence_id: self.sentence_id.clone(),
            prefix_len: self.prefix_len,
            budget: self.initial_budget,
        }
    }

    pub fn submit_guess(
        &mut self,
        config: &SessionConfig,
        symbol: char,
        now: DateTime<Utc>,
    ) -> Result<GuessStep, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive(self.status));
        }
        if !config.alphabet.contains(symbol) {
            return Err(SessionError::InvalidSymbol(symbol));
        }
        if let Some(last) = self.last_guess_at {
            let elapsed = (now - last).to_std().unwrap_or(Duration::ZERO);
            if elapsed < config.min_attempt_interval {
                return Err(SessionError::RateLimited {
                    retry_after: config.min_attempt_interval - elapsed,
                });
            }
        }
        if self.attempts_on_current.contains(&symbol) {
            return Err(SessionError::RepeatGuess(symbol));
        }
        let seq = self.next_seq;
        Ok(self.apply_guess(symbol, now, seq))
    }

    /// Re-applies a logged guess. Rate limiting is not re-checked; the log
    /// only holds guesses that were accepted.
    pub fn replay_event(
        &mut self,
        config: &SessionConfig,
        event: &GuessEvent,
    ) -> Result<Option<Observation>, SessionError> {
        let corrupt = |msg: String| SessionError::CorruptLog(format!("session {}: {msg}", self.id));
        if event.session_id != self.id {
            return Err(corrupt(format!("event for {}", event.session_id)));
        }
        if self.status != SessionStatus::Active {
            return Err(corrupt(format!("guess seq {} after session ended", event.seq)));
        }
        if event.seq < self.next_seq {
            return Err(corrupt(format!("seq {} is not increasing", event.seq)));
        }
        if event.position != self.cursor {
            return Err(corrupt(format!(
                "guess at position {} while cursor is {}",
                event.position, self.cursor
            )));
        }
        if !config.alphabet.contains(event.guessed_symbol) {
            return Err(corrupt(format!("symbol {:?} not in alphabet", event.guessed_symbol)));
        }
        if self.attempts_on_current.contains(&event.guessed_symbol) {
            return Err(corrupt(format!("repeated symbol {:?}", event.guessed_symbol)));
        }
        if (self.target[self.cursor] == event.guessed_symbol) != event.correct {
            return Err(corrupt(format!("seq {} correctness disagrees with sentence", event.seq)));
        }
        Ok(self.apply_guess(event.guessed_symbol, event.timestamp, event.seq).observation)
    }

    fn apply_guess(&mut self, symbol: char, now: DateTime<Utc>, seq: u64) -> GuessStep {
        let position = self.cursor;
        let correct = self.target[position] == symbol;
        let attempts_so_far = self.attempts_on_current.len() as u32 + 1;
        self.next_seq = seq + 1;
        self.budget_remaining -= 1;
        self.last_event_at = now;
        self.last_guess_at = Some(now);

        let observation = if correct {
            self.cursor += 1;
            self.attempts_on_current.clear();
            self.observations += 1;
            Some(Observation {
                session_id: self.id.clone(),
                participant_id: self.participant_id.clone(),
                sentence_id: self.sentence_id.clone(),
                position,
                attempts: attempts_so_far,
                timestamp: now,
            })
        } else {
            self.attempts_on_current.push(symbol);
            self.wrong_guesses += 1;
            None
        };
        if self.budget_remaining == 0 || self.cursor == self.target.len() {
            self.status = SessionStatus::Completed;
        }
        GuessStep {
            outcome: GuessOutcome {
                correct,
                revealed_symbol: correct.then_some(symbol),
                budget_remaining: self.budget_remaining,
                session_status: self.status,
                position,
                attempts_so_far,
            },
            event: GuessEvent {
                session_id: self.id.clone(),
                position,
                guessed_symbol: symbol,
                correct,
                timestamp: now,
                seq,
            },
            observation,
        }
    }

    pub fn abandon(&mut self, now: DateTime<Utc>) -> Result<(), SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive(self.status));
        }
        self.status = SessionStatus::Abandoned;
        self.last_event_at = now;
        Ok(())
    }

    /// True when the session is active and has been idle longer than `ttl`.
    pub fn is_stale(&self, now: DateTime<Utc>, ttl: Duration) -> bool {
        self.status == SessionStatus::Active
            && TimeDelta::from_std(ttl).is_ok_and(|ttl| now - self.last_event_at > ttl)
    }
}

/// What a log replay needs to know about a session without its sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub participant_id: String,
    pub sentence_id: String,
    pub prefix_len: usize,
    pub budget: usize,
}

#[derive(Default)]
struct ReplayCursor {
    position: usize,
    tried: Vec<char>,
    spent: usize,
    last_seq: Option<u64>,
}

/// Rebuilds the observation stream from guess events alone. Events of
/// different sessions may be interleaved; within a session they must be in
/// `seq` order.
pub fn derive_observations(
    events: &[GuessEvent],
    sessions: &HashMap<String, SessionMeta>,
    alphabet: &Alphabet,
) -> Result<Vec<Observation>, SessionError> {
    let mut cursors: HashMap<&str, ReplayCursor> = HashMap::new();
    let mut out = Vec::new();
    for ev in events {
        let corrupt = |msg: String| {
            SessionError::CorruptLog(format!("session {} seq {}: {msg}", ev.session_id, ev.seq))
        };
        let meta = sessions
            .get(&ev.session_id)
            .ok_or_else(|| corrupt("unknown session".into()))?;
        let cur = cursors.entry(ev.session_id.as_str()).or_insert_with(|| ReplayCursor {
            position: meta.prefix_len,
            ..Default::default()
        });
        if cur.last_seq.is_some_and(|last| ev.seq <= last) {
            return Err(corrupt("seq not strictly increasing".into()));
        }
        if cur.spent >= meta.budget {
            return Err(corrupt("guess after budget exhausted".into()));
        }
        if ev.position != cur.position {
            return Err(corrupt(format!("expected position {}, got {}", cur.position, ev.position)));
        }
        if !alphabet.contains(ev.guessed_symbol) {
            return Err(corrupt(format!("symbol {:?} not in alphabet", ev.guessed_symbol)));
        }
        if cur.tried.contains(&ev.guessed_symbol) {
            return Err(corrupt(format!("repeated symbol {:?}", ev.guessed_symbol)));
        }
        cur.last_seq = Some(ev.seq);
        cur.spent += 1;
        if ev.correct {
            out.push(Observation {
                session_id: ev.session_id.clone(),
                participant_id: meta.participant_id.clone(),
                sentence_id: meta.sentence_id.clone(),
                position: ev.position,
                attempts: cur.tried.len() as u32 + 1,
                timestamp: ev.timestamp,
            });
            cur.position += 1;
            cur.tried.clear();
        } else {
            cur.tried.push(ev.guessed_symbol);
        }
    }
    Ok(out)
}

/// Picks a sentence the participant has not seen yet, uniformly at random.
/// Once every eligible sentence has been seen, picks uniformly from all of
/// them. Sentences not longer than the prefix are never eligible.
pub fn assign_sentence<'a, R: Rng + ?Sized>(
    pool: &'a [SentenceRecord],
    seen: &HashSet<String>,
    prefix_len: usize,
    rng: &mut R,
) -> Option<&'a SentenceRecord> {
    let eligible: Vec<&SentenceRecord> = pool.iter().filter(|s| s.length > prefix_len).collect();
    let fresh: Vec<&SentenceRecord> = eligible
        .iter()
        .copied()
        .filter(|s| !seen.contains(&s.id))
        .collect();
    let choices = if fresh.is_empty() { eligible } else { fresh };
    if choices.is_empty() {
        return None;
    }
    Some(choices[rng.random_range(0..choices.len())])
}
