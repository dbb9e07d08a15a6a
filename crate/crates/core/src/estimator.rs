//! Entropy bounds from guess-count distributions.
//!
//! For a distribution `q` over guess ranks `1..=K` the upper bound is the
//! Shannon entropy of `q` and the lower bound is `Σ q_i log2 i`. Per-position
//! bounds inside a context window are pooled by a mean weighted with the
//! number of observations at each position.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::session::Observation;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("no observations")]
    NoData,
    #[error("attempt count {attempts} outside 1..={k}")]
    AttemptsOutOfRange { attempts: u32, k: usize },
    #[error("invalid position window {0}")]
    InvalidWindow(String),
    #[error("alphabet size must be at least 1")]
    EmptyAlphabet,
}

/// `-Σ q_i log2 q_i`, with `0 log 0 = 0`.
pub fn upper_bound(q: &[f64]) -> f64 {
    let h: f64 = q
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    // avoid reporting -0.0 for a point mass
    h.max(0.0)
}

/// `Σ q_i log2 i` over 1-based ranks.
pub fn lower_bound(q: &[f64]) -> f64 {
    q.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &p)| p > 0.0)
        .map(|(idx, &p)| p * ((idx + 1) as f64).log2())
        .sum()
}

/// Fractions of characters guessed on the i-th try, kept as exact counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QDistribution {
    counts: Vec<u64>,
    n_obs: u64,
}

impl QDistribution {
    /// `counts[i]` is the number of characters guessed on try `i + 1`.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n_obs = counts.iter().sum();
        QDistribution { counts, n_obs }
    }

    pub fn from_attempts<I>(attempts: I, k: usize) -> Result<Self, EstimatorError>
    where
        I: IntoIterator<Item = u32>,
    {
        if k == 0 {
            return Err(EstimatorError::EmptyAlphabet);
        }
        let mut counts = vec![0u64; k];
        for a in attempts {
            if a == 0 || a as usize > k {
                return Err(EstimatorError::AttemptsOutOfRange { attempts: a, k });
            }
            counts[a as usize - 1] += 1;
        }
        let q = QDistribution::from_counts(counts);
        if q.n_obs == 0 {
            return Err(EstimatorError::NoData);
        }
        Ok(q)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n_obs(&self) -> u64 {
        self.n_obs
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn q(&self) -> Vec<f64> {
        if self.n_obs == 0 {
            return vec![0.0; self.counts.len()];
        }
        let n = self.n_obs as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Non-increasing in rank, as an ideal guesser would produce.
    pub fn is_rank_monotone(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn upper_bound(&self) -> f64 {
        upper_bound(&self.q())
    }

    pub fn lower_bound(&self) -> f64 {
        lower_bound(&self.q())
    }

    pub fn bounds(&self) -> EntropyBounds {
        EntropyBounds {
            h_lower: self.lower_bound(),
            h_upper: self.upper_bound(),
            n_obs: self.n_obs,
        }
    }
}

/// q-distribution of the observations at a single position.
pub fn q_distribution(
    observations: &[Observation],
    position: usize,
    k: usize,
) -> Result<QDistribution, EstimatorError> {
    QDistribution::from_attempts(
        observations
            .iter()
            .filter(|o| o.position == position)
            .map(|o| o.attempts),
        k,
    )
}

/// Bounds in bits per character.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBounds {
    pub h_lower: f64,
    pub h_upper: f64,
    pub n_obs: u64,
}

/// Inclusive range of context positions used for pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionWindow {
    pub start: usize,
    pub end: usize,
}

impl PositionWindow {
    pub fn new(start: usize, end: usize) -> Result<Self, EstimatorError> {
        if start > end {
            return Err(EstimatorError::InvalidWindow(format!("{start}:{end}")));
        }
        Ok(PositionWindow { start, end })
    }

    pub fn contains(&self, position: usize) -> bool {
        (self.start..=self.end).contains(&position)
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

impl Default for PositionWindow {
    fn default() -> Self {
        PositionWindow { start: 70, end: 110 }
    }
}

impl fmt::Display for PositionWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for PositionWindow {
    type Err = EstimatorError;

    /// Parses `START:END`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EstimatorError::InvalidWindow(s.to_owned());
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        PositionWindow::new(start, end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub h_upper: f64,
    pub h_lower: f64,
    pub n_obs: u64,
    pub per_position: BTreeMap<usize, EntropyBounds>,
    pub weights: BTreeMap<usize, f64>,
    pub redundancy: f64,
    pub max_entropy: f64,
    /// Positions whose empirical q is not non-increasing in rank. The bounds
    /// are computed as-is for them; this is a diagnostic only.
    pub non_monotone_positions: Vec<usize>,
}

/// Dense rank counts for every position of a window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowCounts {
    window: PositionWindow,
    k: usize,
    cells: Vec<u64>,
}

impl WindowCounts {
    pub fn new(window: PositionWindow, k: usize) -> Self {
        WindowCounts {
            window,
            k,
            cells: vec![0; window.width() * k],
        }
    }

    pub fn from_observations<'a, I>(
        observations: I,
        window: PositionWindow,
        k: usize,
    ) -> Result<Self, EstimatorError>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        if k == 0 {
            return Err(EstimatorError::EmptyAlphabet);
        }
        let mut wc = WindowCounts::new(window, k);
        for o in observations {
            wc.add(o.position, o.attempts)?;
        }
        Ok(wc)
    }

    pub fn window(&self) -> PositionWindow {
        self.window
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Index of the `(position, attempts)` cell, or `None` when the position
    /// lies outside the window.
    pub fn cell(&self, position: usize, attempts: u32) -> Result<Option<usize>, EstimatorError> {
        if attempts == 0 || attempts as usize > self.k {
            return Err(EstimatorError::AttemptsOutOfRange { attempts, k: self.k });
        }
        if !self.window.contains(position) {
            return Ok(None);
        }
        Ok(Some((position - self.window.start) * self.k + attempts as usize - 1))
    }

    /// Counts one observation; positions outside the window are ignored.
    pub fn add(&mut self, position: usize, attempts: u32) -> Result<(), EstimatorError> {
        if let Some(idx) = self.cell(position, attempts)? {
            self.cells[idx] += 1;
        }
        Ok(())
    }

    pub fn add_cell(&mut self, idx: usize, count: u64) {
        self.cells[idx] += count;
    }

    /// Non-zero cells as `(index, count)`, for cheap repeated accumulation.
    pub fn sparse(&self) -> Vec<(usize, u64)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect()
    }

    pub fn clear(&mut self) {
        self.cells.fill(0);
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    fn row(&self, offset: usize) -> &[u64] {
        &self.cells[offset * self.k..(offset + 1) * self.k]
    }

    pub fn q_at(&self, position: usize) -> Option<QDistribution> {
        if !self.window.contains(position) {
            return None;
        }
        let q = QDistribution::from_counts(self.row(position - self.window.start).to_vec());
        (q.n_obs() > 0).then_some(q)
    }

    /// Bounds for every non-empty position.
    pub fn per_position(&self) -> Result<BTreeMap<usize, EntropyBounds>, EstimatorError> {
        let map: BTreeMap<_, _> = (self.window.start..=self.window.end)
            .filter_map(|pos| self.q_at(pos).map(|q| (pos, q.bounds())))
            .collect();
        if map.is_empty() {
            return Err(EstimatorError::NoData);
        }
        Ok(map)
    }

    pub fn pooled(&self) -> Result<PooledEstimate, EstimatorError> {
        let per_position = self.per_position()?;
        let pooled = pool_bounds(&per_position)?;
        let non_monotone_positions = per_position
            .keys()
            .copied()
            .filter(|&pos| !self.q_at(pos).is_some_and(|q| q.is_rank_monotone()))
            .collect();
        Ok(PooledEstimate {
            h_upper: pooled.h_upper,
            h_lower: pooled.h_lower,
            n_obs: pooled.n_obs,
            weights: pooled.weights,
            per_position,
            redundancy: redundancy(pooled.h_upper, self.k),
            max_entropy: (self.k as f64).log2(),
            non_monotone_positions,
        })
    }

    /// Weighted upper bound only, without building the report maps.
    pub fn pooled_upper(&self) -> Option<f64> {
        let mut weighted = 0.0;
        let mut total = 0u64;
        for offset in 0..self.window.width() {
            let row = self.row(offset);
            let n: u64 = row.iter().sum();
            if n == 0 {
                continue;
            }
            let nf = n as f64;
            let h: f64 = row
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / nf;
                    -p * p.log2()
                })
                .sum();
            weighted += nf * h;
            total += n;
        }
        (total > 0).then(|| (weighted / total as f64).max(0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledBounds {
    pub h_upper: f64,
    pub h_lower: f64,
    pub n_obs: u64,
    pub weights: BTreeMap<usize, f64>,
}

/// Weighted mean of per-position bounds with `w_n = N_n / Σ_k N_k`.
pub fn pool_bounds(
    per_position: &BTreeMap<usize, EntropyBounds>,
) -> Result<PooledBounds, EstimatorError> {
    let total: u64 = per_position.values().map(|b| b.n_obs).sum();
    if total == 0 {
        return Err(EstimatorError::NoData);
    }
    let weights: BTreeMap<usize, f64> = per_position
        .iter()
        .map(|(&pos, b)| (pos, b.n_obs as f64 / total as f64))
        .collect();
    let h_upper = per_position.iter().map(|(pos, b)| weights[pos] * b.h_upper).sum();
    let h_lower = per_position.iter().map(|(pos, b)| weights[pos] * b.h_lower).sum();
    Ok(PooledBounds { h_upper, h_lower, n_obs: total, weights })
}

/// `1 − h / log2(K)`.
pub fn redundancy(h: f64, k: usize) -> f64 {
    1.0 - h / (k as f64).log2()
}

pub fn per_position_bounds(
    observations: &[Observation],
    window: PositionWindow,
    k: usize,
) -> Result<BTreeMap<usize, EntropyBounds>, EstimatorError> {
    WindowCounts::from_observations(observations, window, k)?.per_position()
}

pub fn pooled_estimate(
    observations: &[Observation],
    window: PositionWindow,
    k: usize,
) -> Result<PooledEstimate, EstimatorError> {
    WindowCounts::from_observations(observations, window, k)?.pooled()
}

/// Statistic used to rank sessions from best to worst.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatistic {
    /// Upper bound of the q-distribution of all the session's observations,
    /// every position merged.
    #[default]
    UpperBound,
    /// Mean number of attempts per observed character.
    MeanAttempts,
}

impl FromStr for SessionStatistic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upper-bound" | "upper_bound" => Ok(SessionStatistic::UpperBound),
            "mean-attempts" | "mean_attempts" => Ok(SessionStatistic::MeanAttempts),
            other => Err(format!("unknown session statistic {other:?}")),
        }
    }
}

/// Score of a single session; lower is better.
pub fn session_score<'a, I>(
    observations: I,
    k: usize,
    statistic: SessionStatistic,
) -> Result<f64, EstimatorError>
where
    I: IntoIterator<Item = &'a Observation>,
{
    let q = QDistribution::from_attempts(observations.into_iter().map(|o| o.attempts), k)?;
    Ok(match statistic {
        SessionStatistic::UpperBound => q.upper_bound(),
        SessionStatistic::MeanAttempts => {
            let total: u64 = q
                .counts()
                .iter()
                .enumerate()
                .map(|(i, &c)| (i as u64 + 1) * c)
                .sum();
            total as f64 / q.n_obs() as f64
        }
    })
}
