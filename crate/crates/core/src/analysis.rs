//! End-to-end analysis: score sessions, drop binomial outliers, trim the
//! bottom of the pool, pool the window, bootstrap the upper bound.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::SessionData;
use crate::estimator::{
    session_score, EstimatorError, PooledEstimate, PositionWindow, SessionStatistic,
};
use crate::robustness::{
    binomial_outlier_filter, bootstrap_upper, bootstrap_upper_retrim, pooled_over_sessions,
    rank_order, trim_bottom, trim_table, BootstrapMode, BootstrapResult, RobustnessError,
    ScoredSession, SessionSummary, TrimRow, TrimTableConfig, DEFAULT_ALPHA, DEFAULT_REPLICATES,
    DEFAULT_TRIM,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub window: PositionWindow,
    pub k: usize,
    pub alpha: f64,
    pub trim: f64,
    pub replicates: usize,
    pub seed: u64,
    pub statistic: SessionStatistic,
    pub mode: BootstrapMode,
}

impl AnalysisConfig {
    pub fn new(k: usize) -> Self {
        AnalysisConfig {
            window: PositionWindow::default(),
            k,
            alpha: DEFAULT_ALPHA,
            trim: DEFAULT_TRIM,
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            statistic: SessionStatistic::default(),
            mode: BootstrapMode::default(),
        }
    }

    pub fn table_config(&self) -> TrimTableConfig {
        TrimTableConfig {
            window: self.window,
            k: self.k,
            replicates: self.replicates,
            seed: self.seed,
            mode: self.mode,
        }
    }
}

/// Summary and score for every session, in input order.
pub fn score_sessions(
    data: Vec<SessionData>,
    k: usize,
    statistic: SessionStatistic,
) -> Result<Vec<ScoredSession>, EstimatorError> {
    data.into_iter()
        .map(|d| {
            let score = session_score(&d.observations, k, statistic)?;
            Ok(ScoredSession {
                summary: SessionSummary {
                    session_id: d.session_id,
                    total_guesses: d.total_guesses,
                    correct_guesses: d.correct_guesses,
                    score,
                    suspicious: false,
                },
                observations: d.observations,
            })
        })
        .collect()
}

/// Sessions surviving the outlier filter, plus the filter's bookkeeping.
pub struct FilteredPool {
    pub kept: Vec<ScoredSession>,
    pub discarded: Vec<SessionSummary>,
    pub mean_accuracy: f64,
}

pub fn filter_pool(
    sessions: Vec<ScoredSession>,
    alpha: f64,
) -> Result<FilteredPool, RobustnessError> {
    let outcome = binomial_outlier_filter(sessions, alpha)?;
    Ok(FilteredPool {
        kept: outcome.kept,
        discarded: outcome.discarded.into_iter().map(|s| s.summary).collect(),
        mean_accuracy: outcome.mean_accuracy,
    })
}

/// Bootstrap of the pooled upper bound at `trim`, in the configured mode.
pub fn bootstrap(
    filtered: &[ScoredSession],
    cfg: &AnalysisConfig,
) -> Result<BootstrapResult, RobustnessError> {
    match cfg.mode {
        BootstrapMode::ResampleTrimmed => {
            let retained = trim_bottom(filtered, cfg.trim)?;
            bootstrap_upper(&retained, cfg.window, cfg.k, cfg.replicates, cfg.seed)
        }
        BootstrapMode::RetrimEachReplicate => bootstrap_upper_retrim(
            filtered,
            cfg.trim,
            cfg.window,
            cfg.k,
            cfg.replicates,
            cfg.seed,
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
    pub median: f64,
    pub ci95: (f64, f64),
    pub ci_width: f64,
}

impl BootstrapSummary {
    pub fn new(result: &BootstrapResult, mode: BootstrapMode) -> Self {
        BootstrapSummary {
            replicates: result.replicates,
            seed: result.seed,
            mode,
            median: result.median,
            ci95: result.ci95,
            ci_width: result.ci_width(),
        }
    }
}

/// Scores of every analysed session with their fate in the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionScoreRow {
    pub rank: usize,
    pub session_id: String,
    pub score: f64,
    pub total_guesses: u64,
    pub correct_guesses: u64,
    pub n_observations: usize,
    pub suspicious: bool,
    pub retained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub sessions_analysed: usize,
    pub mean_accuracy: f64,
    pub discarded: Vec<String>,
    pub after_filter: usize,
    pub retained: usize,
    pub estimate: PooledEstimate,
    pub bootstrap: Option<BootstrapSummary>,
    pub trim_table: Option<Vec<TrimRow>>,
    pub sessions: Vec<SessionScoreRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
}

/// What [`run_analysis`] computes beyond the point estimate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalysisOptions {
    pub bootstrap: bool,
    /// Trim fractions of the sensitivity table, empty for none.
    pub table_trims: Vec<f64>,
}

pub fn run_analysis(
    data: Vec<SessionData>,
    cfg: &AnalysisConfig,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport, AnalysisError> {
    let scored = score_sessions(data, cfg.k, cfg.statistic)?;
    let sessions_analysed = scored.len();
    let filtered = filter_pool(scored, cfg.alpha)?;
    let retained = trim_bottom(&filtered.kept, cfg.trim)?;
    let estimate = pooled_over_sessions(&retained, cfg.window, cfg.k)?;

    let bootstrap = if opts.bootstrap {
        Some(BootstrapSummary::new(&bootstrap(&filtered.kept, cfg)?, cfg.mode))
    } else {
        None
    };
    let trim_table = if opts.table_trims.is_empty() {
        None
    } else {
        Some(trim_table(&filtered.kept, &opts.table_trims, &cfg.table_config())?)
    };

    let retained_ids: HashSet<&str> = retained
        .iter()
        .map(|s| s.summary.session_id.as_str())
        .collect();
    let mut rows: Vec<(&SessionSummary, usize)> = filtered
        .kept
        .iter()
        .map(|s| (&s.summary, s.observations.len()))
        .collect();
    rows.sort_by(|a, b| rank_order(a.0, b.0));
    let mut sessions: Vec<SessionScoreRow> = rows
        .into_iter()
        .enumerate()
        .map(|(i, (s, n))| SessionScoreRow {
            rank: i + 1,
            session_id: s.session_id.clone(),
            score: s.score,
            total_guesses: s.total_guesses,
            correct_guesses: s.correct_guesses,
            n_observations: n,
            suspicious: false,
            retained: retained_ids.contains(s.session_id.as_str()),
        })
        .collect();
    sessions.extend(filtered.discarded.iter().map(|s| SessionScoreRow {
        rank: 0,
        session_id: s.session_id.clone(),
        score: s.score,
        total_guesses: s.total_guesses,
        correct_guesses: s.correct_guesses,
        n_observations: 0,
        suspicious: true,
        retained: false,
    }));

    Ok(AnalysisReport {
        config: cfg.clone(),
        sessions_analysed,
        mean_accuracy: filtered.mean_accuracy,
        discarded: filtered.discarded.iter().map(|s| s.session_id.clone()).collect(),
        after_filter: filtered.kept.len(),
        retained: retained.len(),
        estimate,
        bootstrap,
        trim_table,
        sessions,
    })
}

/// Per-position row of the bounds figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionBoundsRow {
    pub position: usize,
    pub n_obs: u64,
    pub h_lower: f64,
    pub h_upper: f64,
    pub weight: f64,
}

pub fn position_rows(estimate: &PooledEstimate) -> Vec<PositionBoundsRow> {
    estimate
        .per_position
        .iter()
        .map(|(&position, b)| PositionBoundsRow {
            position,
            n_obs: b.n_obs,
            h_lower: b.h_lower,
            h_upper: b.h_upper,
            weight: estimate.weights.get(&position).copied().unwrap_or(0.0),
        })
        .collect()
}

/// Number of observations at every position, over all positions.
pub fn observation_counts<'a, I>(observations: I) -> BTreeMap<usize, u64>
where
    I: IntoIterator<Item = &'a crate::session::Observation>,
{
    let mut counts = BTreeMap::new();
    for o in observations {
        *counts.entry(o.position).or_insert(0) += 1;
    }
    counts
}
