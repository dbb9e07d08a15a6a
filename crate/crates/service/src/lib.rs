//! HTTP service for the guessing experiment.
//!
//! Every state change is first appended to a JSON Lines event log and only
//! then applied in memory, so replaying the log reproduces the state
//! exactly. See [`store::LogRecord`] for the log format and [`export`] for
//! the anonymized data export.

pub mod api;
pub mod clock;
pub mod config;
pub mod export;
pub mod service;
pub mod state;
pub mod store;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use guesslab::corpus::read_pool;
use guesslab::Alphabet;

pub use api::router;
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use service::{Service, ServiceError, ServiceParts, Settings};
pub use state::{ExperimentState, SentencePool, Stats};
pub use store::{FileLogStore, LogRecord, LogStore, MemoryLogStore};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("corpus: {0}")]
    Corpus(#[from] guesslab::corpus::CorpusError),
    #[error("alphabet: {0}")]
    Alphabet(#[from] guesslab::alphabet::AlphabetError),
    #[error(transparent)]
    Storage(#[from] store::StorageError),
    #[error(transparent)]
    Recovery(#[from] service::RecoveryError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Builds a service from its configuration, recovering any existing log.
/// Returns the seed in use alongside, drawn at random when not configured.
pub fn build(cfg: &ServiceConfig) -> Result<(Service, u64), StartupError> {
    let alphabet = match &cfg.alphabet {
        Some(p) => Alphabet::from_file(p)?,
        None => Alphabet::ukrainian(),
    };
    let pool = SentencePool::new(read_pool(&cfg.corpus)?);
    let seed = cfg.seed.unwrap_or_else(rand::random);
    let service = Service::open(ServiceParts {
        store: Arc::new(FileLogStore::open(&cfg.log)?),
        clock: Arc::new(SystemClock),
        pool,
        alphabet,
        settings: Settings {
            prefix_len: cfg.prefix_len,
            min_attempt_interval_ms: cfg.min_attempt_interval_ms,
            session_ttl_secs: cfg.session_ttl_secs,
            export_salt: cfg.export_salt.clone(),
        },
        snapshot: cfg.snapshot.clone(),
        seed,
    })?;
    Ok((service, seed))
}

/// Serves until `shutdown` resolves, with the abandonment sweep and the
/// snapshot writer running in the background.
pub async fn serve(
    service: Arc<Service>,
    listener: tokio::net::TcpListener,
    sweep_every: Duration,
    snapshot_every: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let svc = service.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(sweep_every);
            loop {
                tick.tick().await;
                let svc = svc.clone();
                match tokio::task::spawn_blocking(move || svc.sweep()).await {
                    Ok(Ok(0)) => {}
                    Ok(Ok(n)) => tracing::info!(sessions = n, "abandoned idle sessions"),
                    Ok(Err(e)) => tracing::warn!(error = %e, "sweep failed"),
                    Err(e) => tracing::warn!(error = %e, "sweep task failed"),
                }
            }
        })
    };
    let snapshotter = {
        let svc = service.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(snapshot_every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let svc = svc.clone();
                if let Ok(Err(e)) = tokio::task::spawn_blocking(move || svc.snapshot()).await {
                    tracing::warn!(error = %e, "snapshot failed");
                }
            }
        })
    };
    let result = axum::serve(listener, router(service.clone()))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    snapshotter.abort();
    let svc = service.clone();
    if let Ok(Err(e)) = tokio::task::spawn_blocking(move || svc.snapshot()).await {
        tracing::warn!(error = %e, "final snapshot failed");
    }
    result
}
