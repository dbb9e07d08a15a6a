//! `analyze` and `export-figures`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use guesslab::analysis::{
    bootstrap, filter_pool, observation_counts, position_rows, run_analysis, score_sessions,
    AnalysisConfig, AnalysisOptions, AnalysisReport,
};
use guesslab::dataset::{group_sessions, read_observations, read_session_totals, SessionData};
use guesslab::estimator::{PositionWindow, SessionStatistic, WindowCounts};
use guesslab::robustness::{BootstrapMode, DEFAULT_ALPHA, DEFAULT_REPLICATES, DEFAULT_TRIM, TABLE_TRIMS};
use guesslab::Alphabet;
use serde::Serialize;

use crate::bundle::{hash_input, write_output, InputFile, ReportBundle};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    /// Resample the trimmed pool.
    Resample,
    /// Resample the filtered pool and trim every replicate.
    Retrim,
}

impl From<ModeArg> for BootstrapMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Resample => BootstrapMode::ResampleTrimmed,
            ModeArg::Retrim => BootstrapMode::RetrimEachReplicate,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct DataArgs {
    /// Observations, plain JSON Lines or a service export.
    #[arg(long)]
    pub observations: PathBuf,
    /// Per-session guess totals. Defaults to the session lines of the
    /// observations file when it is a service export.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// Alphabet file; sets K.
    #[arg(long, conflicts_with = "k")]
    pub alphabet: Option<PathBuf>,
    /// Alphabet size, when no alphabet file is given.
    #[arg(long, default_value_t = 34)]
    pub k: usize,
    /// Inclusive position window, START:END.
    #[arg(long, default_value = "70:110")]
    pub window: PositionWindow,
    /// Significance level of the outlier filter.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Per-session score used for ranking: upper-bound or mean-attempts.
    #[arg(long, default_value = "upper-bound")]
    pub statistic: SessionStatistic,
    /// Fraction of worst-scoring sessions removed.
    #[arg(long, default_value_t = DEFAULT_TRIM)]
    pub trim: f64,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, value_enum, default_value = "resample")]
    pub mode: ModeArg,
}

pub struct Loaded {
    pub sessions: Vec<SessionData>,
    pub inputs: Vec<InputFile>,
    pub cfg: AnalysisConfig,
}

pub fn load(args: &DataArgs, seed: u64) -> anyhow::Result<Loaded> {
    let mut inputs = vec![hash_input("observations", &args.observations)?];
    let k = match &args.alphabet {
        Some(p) => {
            inputs.push(hash_input("alphabet", p)?);
            Alphabet::from_file(p)?.len()
        }
        None => args.k,
    };
    let observations = read_observations(&args.observations)?;
    let totals = match &args.sessions {
        Some(p) => {
            inputs.push(hash_input("sessions", p)?);
            Some(read_session_totals(p)?)
        }
        None => {
            let embedded = read_session_totals_if_tagged(&args.observations)?;
            if embedded.is_none() {
                tracing::warn!("no session totals; guess counts are reconstructed from attempts");
            }
            embedded
        }
    };
    let sessions = group_sessions(observations, totals.as_deref())?;
    if sessions.is_empty() {
        bail!("{}: no observations", args.observations.display());
    }
    if !(0.0..1.0).contains(&args.trim) {
        bail!("--trim must lie in [0, 1)");
    }
    let cfg = AnalysisConfig {
        window: args.window,
        k,
        alpha: args.alpha,
        trim: args.trim,
        replicates: args.replicates,
        seed,
        statistic: args.statistic,
        mode: args.mode.into(),
    };
    Ok(Loaded { sessions, inputs, cfg })
}

/// Session lines of a service export; `None` for plain observation files.
fn read_session_totals_if_tagged(path: &Path) -> anyhow::Result<Option<Vec<guesslab::dataset::SessionTotals>>> {
    let text = fs::read_to_string(path)?;
    let tagged = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("kind").is_some());
    Ok(if tagged { Some(read_session_totals(path)?) } else { None })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CountRow {
    position: usize,
    all: u64,
    after_filter: u64,
    retained: u64,
}

#[derive(Serialize)]
struct ScoreCsvRow<'a> {
    rank: usize,
    session_id: &'a str,
    score: f64,
    total_guesses: u64,
    correct_guesses: u64,
    n_observations: usize,
    suspicious: bool,
    retained: bool,
}

#[derive(Serialize)]
struct TrimCsvRow {
    trim_fraction: f64,
    pool_size: usize,
    point_estimate: f64,
    point_lower: f64,
    n_obs: u64,
    bootstrap_median: f64,
    ci_low: f64,
    ci_high: f64,
    ci_width: f64,
}

#[derive(Serialize)]
struct AllSessionsRow {
    position: usize,
    n_obs: u64,
    h_lower: f64,
    h_upper: f64,
}

/// Writes the figure tables next to the bundle and returns their names.
fn write_figures(
    dir: &Path,
    data: &[SessionData],
    report: &AnalysisReport,
) -> anyhow::Result<Vec<String>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut names = Vec::new();

    write_csv(&dir.join("entropy_by_position.csv"), position_rows(&report.estimate))?;
    names.push("entropy_by_position.csv".to_owned());

    // bounds over every session, before filtering and trimming
    let all_obs = data.iter().flat_map(|s| &s.observations);
    let counts = WindowCounts::from_observations(all_obs, report.config.window, report.config.k)?;
    let rows = counts.per_position()?.into_iter().map(|(position, b)| AllSessionsRow {
        position,
        n_obs: b.n_obs,
        h_lower: b.h_lower,
        h_upper: b.h_upper,
    });
    write_csv(&dir.join("entropy_by_position_all.csv"), rows)?;
    names.push("entropy_by_position_all.csv".to_owned());

    let fate: HashMap<&str, (bool, bool)> = report
        .sessions
        .iter()
        .map(|r| (r.session_id.as_str(), (!r.suspicious, r.retained)))
        .collect();
    let count = |pick: fn((bool, bool)) -> bool| -> BTreeMap<usize, u64> {
        observation_counts(
            data.iter()
                .filter(|s| fate.get(s.session_id.as_str()).copied().is_some_and(pick))
                .flat_map(|s| &s.observations),
        )
    };
    let all = observation_counts(data.iter().flat_map(|s| &s.observations));
    let kept = count(|f| f.0);
    let retained = count(|f| f.1);
    write_csv(
        &dir.join("observations_by_position.csv"),
        all.iter().map(|(&position, &n)| CountRow {
            position,
            all: n,
            after_filter: kept.get(&position).copied().unwrap_or(0),
            retained: retained.get(&position).copied().unwrap_or(0),
        }),
    )?;
    names.push("observations_by_position.csv".to_owned());

    write_csv(
        &dir.join("session_scores.csv"),
        report.sessions.iter().map(|r| ScoreCsvRow {
            rank: r.rank,
            session_id: &r.session_id,
            score: r.score,
            total_guesses: r.total_guesses,
            correct_guesses: r.correct_guesses,
            n_observations: r.n_observations,
            suspicious: r.suspicious,
            retained: r.retained,
        }),
    )?;
    names.push("session_scores.csv".to_owned());

    if let Some(table) = &report.trim_table {
        write_trim_csv(&dir.join("trim_table.csv"), table)?;
        names.push("trim_table.csv".to_owned());
    }
    Ok(names)
}

fn write_trim_csv(path: &Path, table: &[guesslab::robustness::TrimRow]) -> anyhow::Result<()> {
    write_csv(
        path,
        table.iter().map(|r| TrimCsvRow {
            trim_fraction: r.trim_fraction,
            pool_size: r.pool_size,
            point_estimate: r.point_estimate,
            point_lower: r.point_lower,
            n_obs: r.n_obs,
            bootstrap_median: r.bootstrap_median,
            ci_low: r.ci95.0,
            ci_high: r.ci95.1,
            ci_width: r.ci_width,
        }),
    )
}

fn print_summary(report: &AnalysisReport) {
    let e = &report.estimate;
    println!(
        "sessions {} -> {} after filter ({} discarded) -> {} retained at trim {}",
        report.sessions_analysed,
        report.after_filter,
        report.discarded.len(),
        report.retained,
        report.config.trim
    );
    println!(
        "H_upper {:.4} bpc, H_lower {:.4} bpc, redundancy {:.1}%, {} observations",
        e.h_upper,
        e.h_lower,
        100.0 * e.redundancy,
        e.n_obs
    );
    if let Some(b) = &report.bootstrap {
        println!(
            "bootstrap median {:.4}, 95% CI [{:.4}, {:.4}], width {:.4} ({} replicates, seed {})",
            b.median, b.ci95.0, b.ci95.1, b.ci_width, b.replicates, b.seed
        );
    }
    if !e.non_monotone_positions.is_empty() {
        println!("non-monotone q at positions {:?}", e.non_monotone_positions);
    }
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Skip the bootstrap.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Directory for report.json and the CSV tables. Without it the
    /// bundle is printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn bounds(args: &BoundsArgs, seed: u64) -> anyhow::Result<()> {
    let loaded = load(&args.data, seed)?;
    let opts = AnalysisOptions {
        bootstrap: !args.no_bootstrap,
        table_trims: Vec::new(),
    };
    let report = run_analysis(loaded.sessions.clone(), &loaded.cfg, &opts)?;
    emit("analyze bounds", seed, &loaded, &report, args.out.as_deref())
}

fn emit(
    command: &str,
    seed: u64,
    loaded: &Loaded,
    report: &AnalysisReport,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut bundle = ReportBundle::new(command, seed, &loaded.inputs, report);
    match out {
        Some(dir) => {
            bundle.artifacts = write_figures(dir, &loaded.sessions, report)?;
            write_output(&dir.join("report.json"), &bundle.to_json()?)?;
            print_summary(report);
            println!("wrote {}", dir.join("report.json").display());
        }
        None => write_output(Path::new("-"), &bundle.to_json()?)?,
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrimTableArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated trim fractions.
    #[arg(long, value_delimiter = ',')]
    pub trims: Option<Vec<f64>>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Bundle destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

pub fn trim_table(args: &TrimTableArgs, seed: u64) -> anyhow::Result<()> {
    let loaded = load(&args.data, seed)?;
    let opts = AnalysisOptions {
        bootstrap: false,
        table_trims: args.trims.clone().unwrap_or_else(|| TABLE_TRIMS.to_vec()),
    };
    let report = run_analysis(loaded.sessions.clone(), &loaded.cfg, &opts)?;
    let mut bundle = ReportBundle::new("analyze trim-table", seed, &loaded.inputs, &report);
    if let Some(p) = &args.csv {
        write_trim_csv(p, report.trim_table.as_deref().unwrap_or_default())?;
        bundle.artifacts.push(p.display().to_string());
    }
    write_output(&args.out, &bundle.to_json()?)
}

#[derive(Args, Debug)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Write every replicate estimate as CSV (replicate,h_upper).
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Bundle destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

pub fn bootstrap_cmd(args: &BootstrapArgs, seed: u64) -> anyhow::Result<()> {
    let loaded = load(&args.data, seed)?;
    let opts = AnalysisOptions {
        bootstrap: true,
        table_trims: Vec::new(),
    };
    let report = run_analysis(loaded.sessions.clone(), &loaded.cfg, &opts)?;
    let mut bundle = ReportBundle::new("analyze bootstrap", seed, &loaded.inputs, &report);
    if let Some(p) = &args.estimates {
        let scored = score_sessions(loaded.sessions.clone(), loaded.cfg.k, loaded.cfg.statistic)?;
        let filtered = filter_pool(scored, loaded.cfg.alpha)?;
        let result = bootstrap(&filtered.kept, &loaded.cfg)?;
        let mut text = String::from("replicate,h_upper\n");
        for (i, e) in result.estimates.iter().enumerate() {
            text.push_str(&format!("{i},{e}\n"));
        }
        write_output(p, text.as_bytes())?;
        bundle.artifacts.push(p.display().to_string());
    }
    write_output(&args.out, &bundle.to_json()?)
}

#[derive(Args, Debug)]
pub struct FiguresArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the sensitivity table and its bootstraps.
    #[arg(long)]
    pub no_trim_table: bool,
}

pub fn figures(args: &FiguresArgs, seed: u64) -> anyhow::Result<()> {
    let loaded = load(&args.data, seed)?;
    let opts = AnalysisOptions {
        bootstrap: true,
        table_trims: if args.no_trim_table { Vec::new() } else { TABLE_TRIMS.to_vec() },
    };
    let report = run_analysis(loaded.sessions.clone(), &loaded.cfg, &opts)?;
    emit("export-figures", seed, &loaded, &report, Some(&args.out))
}
