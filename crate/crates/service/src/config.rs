use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use guesslab::session::{DEFAULT_MIN_ATTEMPT_INTERVAL, DEFAULT_PREFIX_LEN};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("environment variable {name}: cannot parse {value:?}")]
    Env { name: String, value: String },
}

/// Service settings. Read from a TOML file, then overridden by `GUESSLAB_*`
/// environment variables (`GUESSLAB_LISTEN`, `GUESSLAB_CORPUS`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Sentence pool, JSON Lines.
    pub corpus: PathBuf,
    /// Append-only event log.
    pub log: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub snapshot_interval_secs: u64,
    /// Alphabet file; the Ukrainian alphabet when absent.
    pub alphabet: Option<PathBuf>,
    pub prefix_len: usize,
    pub min_attempt_interval_ms: u64,
    pub session_ttl_secs: u64,
    pub sweep_interval_secs: u64,
    pub export_salt: String,
    /// Seed for identifiers and sentence assignment; random when absent.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            corpus: PathBuf::from("pool.jsonl"),
            log: PathBuf::from("events.jsonl"),
            snapshot: None,
            snapshot_interval_secs: 300,
            alphabet: None,
            prefix_len: DEFAULT_PREFIX_LEN,
            min_attempt_interval_ms: DEFAULT_MIN_ATTEMPT_INTERVAL.as_millis() as u64,
            session_ttl_secs: 24 * 3600,
            sweep_interval_secs: 60,
            export_salt: String::new(),
            seed: None,
        }
    }
}

fn parse_env<T: std::str::FromStr>(name: &str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env {
        name: name.to_owned(),
        value,
    })
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Applies overrides from `lookup`, normally `std::env::var`.
    pub fn apply_env<F>(&mut self, lookup: F) -> Result<(), ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        macro_rules! over {
            ($name:literal, $field:expr) => {
                if let Some(v) = lookup($name) {
                    $field = parse_env($name, v)?;
                }
            };
            ($name:literal, opt $field:expr) => {
                if let Some(v) = lookup($name) {
                    $field = Some(parse_env($name, v)?);
                }
            };
        }
        over!("GUESSLAB_LISTEN", self.listen);
        over!("GUESSLAB_CORPUS", self.corpus);
        over!("GUESSLAB_LOG", self.log);
        over!("GUESSLAB_SNAPSHOT", opt self.snapshot);
        over!("GUESSLAB_SNAPSHOT_INTERVAL_SECS", self.snapshot_interval_secs);
        over!("GUESSLAB_ALPHABET", opt self.alphabet);
        over!("GUESSLAB_PREFIX_LEN", self.prefix_len);
        over!("GUESSLAB_MIN_ATTEMPT_INTERVAL_MS", self.min_attempt_interval_ms);
        over!("GUESSLAB_SESSION_TTL_SECS", self.session_ttl_secs);
        over!("GUESSLAB_SWEEP_INTERVAL_SECS", self.sweep_interval_secs);
        over!("GUESSLAB_EXPORT_SALT", self.export_salt);
        over!("GUESSLAB_SEED", opt self.seed);
        Ok(())
    }

    pub fn min_attempt_interval(&self) -> Duration {
        Duration::from_millis(self.min_attempt_interval_ms)
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
