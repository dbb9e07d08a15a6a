//! Anonymized JSON Lines export.
//!
//! Layout: one `header` line, then one `session` line per session ordered
//! by session id, then one `observation` line per observation in log
//! order. Participant ids are replaced by `sha256(salt ‖ 0x00 ‖ id)`.
//! The output depends only on the stored state, so exporting a frozen
//! store twice yields identical bytes.

use chrono::{DateTime, Utc};
use guesslab::session::SessionStatus;
use guesslab::Alphabet;
use serde::Serialize;

use crate::service::{pseudonym, Settings};
use crate::state::ExperimentState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct Header<'a> {
    kind: &'static str,
    format_version: u32,
    alphabet: String,
    prefix_len: usize,
    min_attempt_interval_ms: u64,
    session_ttl_secs: u64,
    participant_ids: &'a str,
    sessions: usize,
    observations: usize,
}

#[derive(Serialize)]
struct SessionLine<'a> {
    kind: &'static str,
    session_id: &'a str,
    participant_id: String,
    sentence_id: &'a str,
    status: SessionStatus,
    prefix_len: usize,
    budget: usize,
    total_guesses: usize,
    correct_guesses: usize,
    started_at: DateTime<Utc>,
    last_event_at: DateTime<Utc>,
}

#[derive(Serialize)]
struct ObservationLine<'a> {
    kind: &'static str,
    session_id: &'a str,
    participant_id: String,
    sentence_id: &'a str,
    position: usize,
    attempts: u32,
    timestamp: DateTime<Utc>,
}

fn push_line<T: Serialize>(out: &mut Vec<u8>, value: &T) {
    serde_json::to_writer(&mut *out, value).expect("export line serializes");
    out.push(b'\n');
}

pub fn export_jsonl(state: &ExperimentState, settings: &Settings, alphabet: &Alphabet) -> Vec<u8> {
    let mut out = Vec::new();
    push_line(
        &mut out,
        &Header {
            kind: "header",
            format_version: FORMAT_VERSION,
            alphabet: alphabet.symbols().iter().collect(),
            prefix_len: settings.prefix_len,
            min_attempt_interval_ms: settings.min_attempt_interval_ms,
            session_ttl_secs: settings.session_ttl_secs,
            participant_ids: "sha256(salt || 0x00 || id)",
            sessions: state.sessions.len(),
            observations: state.observations.len(),
        },
    );
    let salt = settings.export_salt.as_str();
    for s in state.sessions.values() {
        push_line(
            &mut out,
            &SessionLine {
                kind: "session",
                session_id: &s.id,
                participant_id: pseudonym(salt, &s.participant_id),
                sentence_id: &s.sentence_id,
                status: s.status(),
                prefix_len: s.prefix_len(),
                budget: s.initial_budget(),
                total_guesses: s.total_guesses(),
                correct_guesses: s.correct_guesses(),
                started_at: s.started_at(),
                last_event_at: s.last_event_at(),
            },
        );
    }
    for o in &state.observations {
        push_line(
            &mut out,
            &ObservationLine {
                kind: "observation",
                session_id: &o.session_id,
                participant_id: pseudonym(salt, &o.participant_id),
                sentence_id: &o.sentence_id,
                position: o.position,
                attempts: o.attempts,
                timestamp: o.timestamp,
            },
        );
    }
    out
}
