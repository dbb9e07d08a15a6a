//! Outlier rejection, bottom trimming and session-level bootstrap.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{EstimatorError, PooledEstimate, PositionWindow, WindowCounts};
use crate::session::Observation;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_REPLICATES: usize = 2000;
pub const DEFAULT_TRIM: f64 = 0.65;
pub const TABLE_TRIMS: [f64; 12] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.55, 0.6, 0.65, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobustnessError {
    #[error("mean accuracy {0} leaves the binomial tail test undefined")]
    DegenerateAccuracy(f64),
    #[error("no sessions retained")]
    EmptyPool,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("trim fraction {0} outside [0, 1)")]
    InvalidFraction(f64),
    #[error("session {0} has no guesses or more correct than total guesses")]
    InvalidSession(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub total_guesses: u64,
    pub correct_guesses: u64,
    /// Bits per character, lower is better.
    pub score: f64,
    pub suspicious: bool,
}

/// Anything that carries a [`SessionSummary`].
pub trait HasSummary {
    fn summary(&self) -> &SessionSummary;
    fn summary_mut(&mut self) -> &mut SessionSummary;
}

impl HasSummary for SessionSummary {
    fn summary(&self) -> &SessionSummary {
        self
    }
    fn summary_mut(&mut self) -> &mut SessionSummary {
        self
    }
}

/// A session's summary with the observations it contributed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSession {
    pub summary: SessionSummary,
    pub observations: Vec<Observation>,
}

impl HasSummary for ScoredSession {
    fn summary(&self) -> &SessionSummary {
        &self.summary
    }
    fn summary_mut(&mut self) -> &mut SessionSummary {
        &mut self.summary
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// `P[X ≥ k]` for `X ~ Binomial(n, p)`, summed term by term in log space.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_ratio = ln_p - ln_q;
    let mut ln_term = ln_choose(n, k) + k as f64 * ln_p + (n - k) as f64 * ln_q;
    let mut terms = Vec::with_capacity((n - k + 1) as usize);
    for j in k..=n {
        terms.push(ln_term);
        if j < n {
            ln_term += ((n - j) as f64).ln() - ((j + 1) as f64).ln() + ln_ratio;
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome<T> {
    pub kept: Vec<T>,
    pub discarded: Vec<T>,
    pub mean_accuracy: f64,
}

/// Discards sessions whose accuracy is improbably high: the upper tail
/// `P[X ≥ correct]` under `Binomial(total, p̄)` is below `alpha`, with `p̄`
/// the pooled accuracy of every input session. Poor sessions are never
/// discarded here.
pub fn binomial_outlier_filter<T: HasSummary>(
    sessions: Vec<T>,
    alpha: f64,
) -> Result<FilterOutcome<T>, RobustnessError> {
    if sessions.is_empty() {
        return Err(RobustnessError::EmptyPool);
    }
    let mut correct = 0u64;
    let mut total = 0u64;
    for s in &sessions {
        let sum = s.summary();
        if sum.total_guesses == 0 || sum.correct_guesses > sum.total_guesses {
            return Err(RobustnessError::InvalidSession(sum.session_id.clone()));
        }
        correct += sum.correct_guesses;
        total += sum.total_guesses;
    }
    let mean_accuracy = correct as f64 / total as f64;
    if correct == 0 || correct == total {
        return Err(RobustnessError::DegenerateAccuracy(mean_accuracy));
    }
    let (mut kept, mut discarded) = (Vec::new(), Vec::new());
    for mut s in sessions {
        let sum = s.summary();
        let tail = binomial_upper_tail(sum.total_guesses, sum.correct_guesses, mean_accuracy);
        if tail < alpha {
            s.summary_mut().suspicious = true;
            discarded.push(s);
        } else {
            kept.push(s);
        }
    }
    Ok(FilterOutcome {
        kept,
        discarded,
        mean_accuracy,
    })
}

/// `ceil((1 − fraction) · n)`, tolerant of representation error in the
/// fraction (0.8 · 5 must give 4, not 5).
pub fn retained_count(n: usize, fraction: f64) -> usize {
    let exact = (1.0 - fraction) * n as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Best-first ordering: score ascending, then more guesses first, then id.
pub fn rank_order(a: &SessionSummary, b: &SessionSummary) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(b.total_guesses.cmp(&a.total_guesses))
        .then_with(|| a.session_id.cmp(&b.session_id))
}

/// Keeps the best `ceil((1 − fraction) · N)` sessions.
pub fn trim_bottom<T: HasSummary + Clone>(
    sessions: &[T],
    fraction: f64,
) -> Result<Vec<T>, RobustnessError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(RobustnessError::InvalidFraction(fraction));
    }
    let mut sorted = sessions.to_vec();
    sorted.sort_by(|a, b| rank_order(a.summary(), b.summary()));
    sorted.truncate(retained_count(sessions.len(), fraction));
    if sorted.is_empty() {
        return Err(RobustnessError::EmptyPool);
    }
    Ok(sorted)
}

/// Type-7 (linear interpolation) percentile of sorted data, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// What each bootstrap replicate resamples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BootstrapMode {
    /// Resample the already trimmed pool.
    #[default]
    ResampleTrimmed,
    /// Resample the untrimmed pool and trim inside every replicate.
    RetrimEachReplicate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub seed: u64,
    pub estimates: Vec<f64>,
    pub median: f64,
    pub ci95: (f64, f64),
}

impl BootstrapResult {
    fn from_estimates(estimates: Vec<f64>, seed: u64) -> Self {
        let mut sorted = estimates.clone();
        sorted.sort_by(f64::total_cmp);
        BootstrapResult {
            replicates: estimates.len(),
            seed,
            median: percentile(&sorted, 0.5),
            ci95: (percentile(&sorted, 0.025), percentile(&sorted, 0.975)),
            estimates,
        }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci95.1 - self.ci95.0
    }
}

/// Independent stream for one replicate; serial and parallel runs agree.
fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

struct Prepared {
    cells: Vec<Vec<(usize, u64)>>,
    window: PositionWindow,
    k: usize,
}

fn prepare<T: HasSummary + AsObservations>(
    sessions: &[T],
    window: PositionWindow,
    k: usize,
) -> Result<Prepared, RobustnessError> {
    let cells = sessions
        .iter()
        .map(|s| Ok(WindowCounts::from_observations(s.observations(), window, k)?.sparse()))
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    Ok(Prepared { cells, window, k })
}

pub trait AsObservations {
    fn observations(&self) -> &[Observation];
}

impl AsObservations for ScoredSession {
    fn observations(&self) -> &[Observation] {
        &self.observations
    }
}

/// Pooled estimate over the in-window observations of `sessions`.
pub fn pooled_over_sessions<T: AsObservations>(
    sessions: &[T],
    window: PositionWindow,
    k: usize,
) -> Result<PooledEstimate, EstimatorError> {
    WindowCounts::from_observations(sessions.iter().flat_map(|s| s.observations()), window, k)?
        .pooled()
}

/// Session-level percentile bootstrap of the pooled upper bound.
pub fn bootstrap_upper<T: HasSummary + AsObservations + Sync>(
    sessions: &[T],
    window: PositionWindow,
    k: usize,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult, RobustnessError> {
    if sessions.len() < 2 {
        return Err(RobustnessError::InsufficientData(format!(
            "bootstrap needs at least 2 sessions, got {}",
            sessions.len()
        )));
    }
    if replicates == 0 {
        return Err(RobustnessError::InsufficientData("zero replicates".into()));
    }
    let prep = prepare(sessions, window, k)?;
    let n = sessions.len();
    let estimates = (0..replicates)
        .into_par_iter()
        .map_init(
            || WindowCounts::new(prep.window, prep.k),
            |counts, r| {
                counts.clear();
                let mut rng = replicate_rng(seed, r);
                for _ in 0..n {
                    for &(cell, c) in &prep.cells[rng.random_range(0..n)] {
                        counts.add_cell(cell, c);
                    }
                }
                counts.pooled_upper().ok_or_else(|| {
                    RobustnessError::InsufficientData(format!(
                        "replicate {r} drew no in-window observations"
                    ))
                })
            },
        )
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(BootstrapResult::from_estimates(estimates, seed))
}

/// Bootstrap that resamples the untrimmed pool and applies the bottom trim
/// inside each replicate.
pub fn bootstrap_upper_retrim<T: HasSummary + AsObservations + Sync>(
    pool: &[T],
    fraction: f64,
    window: PositionWindow,
    k: usize,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult, RobustnessError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(RobustnessError::InvalidFraction(fraction));
    }
    if pool.len() < 2 {
        return Err(RobustnessError::InsufficientData(format!(
            "bootstrap needs at least 2 sessions, got {}",
            pool.len()
        )));
    }
    let prep = prepare(pool, window, k)?;
    let n = pool.len();
    let keep = retained_count(n, fraction);
    let estimates = (0..replicates)
        .into_par_iter()
        .map_init(
            || (WindowCounts::new(prep.window, prep.k), Vec::with_capacity(n)),
            |(counts, draw), r| {
                counts.clear();
                draw.clear();
                let mut rng = replicate_rng(seed, r);
                draw.extend((0..n).map(|_| rng.random_range(0..n)));
                draw.sort_by(|&a, &b| rank_order(pool[a].summary(), pool[b].summary()));
                for &idx in draw.iter().take(keep) {
                    for &(cell, c) in &prep.cells[idx] {
                        counts.add_cell(cell, c);
                    }
                }
                counts.pooled_upper().ok_or_else(|| {
                    RobustnessError::InsufficientData(format!(
                        "replicate {r} drew no in-window observations"
                    ))
                })
            },
        )
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(BootstrapResult::from_estimates(estimates, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimRow {
    pub trim_fraction: f64,
    pub pool_size: usize,
    pub point_estimate: f64,
    pub point_lower: f64,
    pub n_obs: u64,
    pub bootstrap_median: f64,
    pub ci95: (f64, f64),
    pub ci_width: f64,
}

pub struct TrimTableConfig {
    pub window: PositionWindow,
    pub k: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
}

/// One row per trim fraction, ascending. `sessions` is the pool after the
/// outlier filter.
pub fn trim_table<T>(
    sessions: &[T],
    fractions: &[f64],
    cfg: &TrimTableConfig,
) -> Result<Vec<TrimRow>, RobustnessError>
where
    T: HasSummary + AsObservations + Clone + Sync,
{
    let mut fractions = fractions.to_vec();
    if let Some(&bad) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(RobustnessError::InvalidFraction(bad));
    }
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    fractions
        .into_iter()
        .map(|f| {
            let retained = trim_bottom(sessions, f)?;
            let point = pooled_over_sessions(&retained, cfg.window, cfg.k)?;
            let boot = match cfg.mode {
                BootstrapMode::ResampleTrimmed => {
                    bootstrap_upper(&retained, cfg.window, cfg.k, cfg.replicates, cfg.seed)?
                }
                BootstrapMode::RetrimEachReplicate => bootstrap_upper_retrim(
                    sessions,
                    f,
                    cfg.window,
                    cfg.k,
                    cfg.replicates,
                    cfg.seed,
                )?,
            };
            Ok(TrimRow {
                trim_fraction: f,
                pool_size: retained.len(),
                point_estimate: point.h_upper,
                point_lower: point.h_lower,
                n_obs: point.n_obs,
                bootstrap_median: boot.median,
                ci95: boot.ci95,
                ci_width: boot.ci_width(),
            })
        })
        .collect()
}
