//! Acceptance suite. Prints one PASS, FAIL or SKIP line per criterion and
//! fails if any criterion fails. Run with
//! `cargo test -p apptool --test acceptance -- --nocapture`.
//!
//! The published raw-data export and source articles are not available
//! here, so the fixture checks run on a synthetic surrogate under
//! `tests/fixtures/surrogate`, with expected values from the independent
//! Python reference in `tools/surrogate`. Checks against published numbers
//! are reported as SKIP.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeDelta, TimeZone, Utc};
use guesslab::analysis::{run_analysis, AnalysisConfig, AnalysisOptions, AnalysisReport};
use guesslab::corpus::{
    build_pool, load_articles, normalize, read_manifest, read_pool, LengthRange, SentenceRecord,
};
use guesslab::dataset::{group_sessions, read_observations, read_session_totals};
use guesslab::estimator::{lower_bound, upper_bound, PositionWindow, QDistribution};
use guesslab::llm_eval::{evaluate_corpus, LogBase, MockProvider, TokenLogprob};
use guesslab::robustness::{bootstrap_upper, ScoredSession, SessionSummary, TABLE_TRIMS};
use guesslab::session::{
    derive_observations, start_session, GuessEvent, Observation, SessionConfig, SessionError,
    SessionStatus,
};
use guesslab::Alphabet;
use guesslab_service::{FileLogStore, ManualClock, SentencePool, Service, ServiceParts, Settings, Stats};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const K: usize = 34;
const FORMULA_TOL: f64 = 1e-12;
const GUESSER_TOL: f64 = 0.02;
const UNIFORM_TOL: f64 = 0.05;
const REFERENCE_TOL: f64 = 1e-9;
const CI_TOL: f64 = 0.02;
const COVERAGE_MIN: f64 = 0.90;
const LLM_TOL: f64 = 1e-9;
const SEED: u64 = 20260124;

const TABLE1_POOL_SIZES: [usize; 12] = [663, 597, 531, 465, 398, 332, 299, 266, 233, 199, 133, 67];

#[derive(Default)]
struct Outcome {
    checks: Vec<(bool, String)>,
    notes: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((ok, what.into()));
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, format!("{what}: {got:.6} vs {want:.6} (tol {tol})"));
    }
}

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn run(&mut self, name: &str, limit: Duration, f: impl FnOnce(&mut Outcome)) {
        let start = Instant::now();
        let mut out = Outcome::default();
        f(&mut out);
        let took = start.elapsed();
        out.check(took < limit, format!("runtime {took:.2?} < {limit:?}"));
        let failures: Vec<&str> = out.checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
        let line = if failures.is_empty() {
            let notes = if out.notes.is_empty() { String::new() } else { format!("; {}", out.notes.join("; ")) };
            format!("PASS  {name}  ({} checks, {took:.2?}{notes})", out.checks.len())
        } else {
            self.failed += 1;
            format!("FAIL  {name}  {}", failures.join("; "))
        };
        println!("{line}");
        self.lines.push(line);
    }

    fn skip(&mut self, name: &str, why: &str) {
        let line = format!("SKIP  {name}  {why}");
        println!("{line}");
        self.lines.push(line);
    }
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/surrogate")
}

fn expected() -> Value {
    let text = std::fs::read_to_string(fixture_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

// estimator formulas

fn log2_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum::<f64>() / std::f64::consts::LN_2
}

/// Distributions with bounds worked out by hand or in closed form.
fn oracle_distributions() -> Vec<(String, Vec<f64>, f64, f64)> {
    let ln2 = std::f64::consts::LN_2;
    let mut v: Vec<(String, Vec<f64>, f64, f64)> = vec![
        ("point mass at rank 1".into(), vec![1.0, 0.0, 0.0], 0.0, 0.0),
        ("halves".into(), vec![0.5, 0.5], 1.0, 0.5),
        ("[.5 .25 .25]".into(), vec![0.5, 0.25, 0.25], 1.5, 0.25 + 0.25 * 3f64.ln() / ln2),
        ("dyadic 1/2 1/4 1/8 1/8".into(), vec![0.5, 0.25, 0.125, 0.125], 1.75, 0.25 + 0.125 * 3f64.ln() / ln2 + 0.25),
        ("[.25 .75] reversed".into(), vec![0.25, 0.75], 2.0 - 0.75 * 3f64.ln() / ln2, 0.75),
    ];
    for n in [2usize, 3, 4, 5, 8, 16, 33, 34] {
        let mut q = vec![0.0; K];
        q[..n].iter_mut().for_each(|x| *x = 1.0 / n as f64);
        v.push((format!("uniform over {n}"), q, (n as f64).ln() / ln2, log2_factorial(n) / n as f64));
    }
    for j in [2usize, 7, 34] {
        let mut q = vec![0.0; K];
        q[j - 1] = 1.0;
        v.push((format!("point mass at rank {j}"), q, 0.0, (j as f64).ln() / ln2));
    }
    for p in [0.1f64, 0.3, 0.9, 0.999] {
        let h = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / ln2;
        v.push((format!("two-point p={p}"), vec![p, 1.0 - p], h, 1.0 - p));
    }
    // geometric with ratio 1/2 truncated to 4 symbols, by hand in bits
    let g = [8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0];
    let h = (8.0 * (15f64 / 8.0).ln() + 4.0 * (15f64 / 4.0).ln() + 2.0 * (15f64 / 2.0).ln() + 15f64.ln()) / 15.0 / ln2;
    let lo = (4.0 + 2.0 * 3f64.ln() / ln2 + 2.0) / 15.0;
    v.push(("geometric 8:4:2:1".into(), g.to_vec(), h, lo));
    v
}

fn estimator_formulas(out: &mut Outcome) {
    let dists = oracle_distributions();
    out.check(dists.len() >= 20, format!("{} oracle distributions", dists.len()));
    for (name, q, hu, hl) in &dists {
        let (gu, gl) = (upper_bound(q), lower_bound(q));
        out.check((gu - hu).abs() <= FORMULA_TOL, format!("{name}: upper {gu} vs {hu}"));
        out.check((gl - hl).abs() <= FORMULA_TOL, format!("{name}: lower {gl} vs {hl}"));
    }
    let counts = QDistribution::from_counts(vec![2, 1, 1]);
    out.close(counts.upper_bound(), 1.5, FORMULA_TOL, "counts [2,1,1] upper");
    out.close(counts.lower_bound(), 0.646240625180289, 1e-12, "counts [2,1,1] lower");

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut bad = 0;
    for _ in 0..1000 {
        let support = rng.random_range(1..=K);
        let mut q: Vec<f64> = (0..K)
            .map(|i| if i < support { -(1.0 - rng.random::<f64>()).ln() } else { 0.0 })
            .collect();
        q.shuffle(&mut rng);
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        let h = upper_bound(&q);
        if !(0.0..=(K as f64).log2() + FORMULA_TOL).contains(&h) {
            bad += 1;
        }
        q.sort_by(|a, b| b.total_cmp(a));
        if lower_bound(&q) > upper_bound(&q) + FORMULA_TOL {
            bad += 1;
        }
    }
    out.check(bad == 0, format!("{bad} of 1000 simplex points violate 0 <= H_upper <= log2 K"));
}

// synthetic guesser

fn sample_ranks(q: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let cdf: Vec<f64> = q
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
            cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u32 + 1
        })
        .collect()
}

fn synthetic_guesser(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let ln2 = std::f64::consts::LN_2;
    let stars: Vec<Vec<f64>> = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.55, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02, 0.01],
        (1..=K).map(|i| 0.5f64.powi(i as i32)).collect(),
    ];
    for q in &stars {
        let s: f64 = q.iter().sum();
        let truth = -q.iter().map(|p| p / s * (p / s).ln()).sum::<f64>() / ln2;
        let ranks = sample_ranks(q, 50_000, &mut rng);
        let est = QDistribution::from_attempts(ranks, K).unwrap().upper_bound();
        out.close(est, truth, GUESSER_TOL, &format!("{} ranks, H(q*)", q.len()));
    }
    let uniform = vec![1.0; K];
    let ranks = sample_ranks(&uniform, 50_000, &mut rng);
    let q = QDistribution::from_attempts(ranks, K).unwrap();
    out.close(q.upper_bound(), (K as f64).ln() / ln2, UNIFORM_TOL, "uniform H_upper vs log2 34");
    out.close(q.lower_bound(), log2_factorial(K) / K as f64, UNIFORM_TOL, "uniform H_lower vs log2(34!)/34");
}

// surrogate fixture

struct Fixture {
    stats: Stats,
    report: AnalysisReport,
}

fn load_fixture(dir: &Path) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("events.jsonl");
    std::fs::copy(dir.join("events.jsonl"), &log).unwrap();
    let pool = read_pool(&dir.join("pool.jsonl")).unwrap();
    let clock = ManualClock::new(Utc.with_ymd_and_hms(2026, 2, 15, 0, 0, 0).unwrap());
    let svc = Service::open(ServiceParts {
        store: Arc::new(FileLogStore::open(&log).unwrap()),
        clock: Arc::new(clock),
        pool: SentencePool::new(pool),
        alphabet: Alphabet::ukrainian(),
        settings: Settings {
            prefix_len: 70,
            min_attempt_interval_ms: 300,
            session_ttl_secs: 86_400,
            export_salt: "acceptance".into(),
        },
        snapshot: None,
        seed: SEED,
    })
    .unwrap();
    let export = tmp.path().join("export.jsonl");
    std::fs::write(&export, svc.export_jsonl()).unwrap();
    let obs = read_observations(&export).unwrap();
    let totals = read_session_totals(&export).unwrap();
    let data = group_sessions(obs, Some(&totals)).unwrap();
    let mut cfg = AnalysisConfig::new(K);
    cfg.seed = SEED;
    let opts = AnalysisOptions {
        bootstrap: true,
        table_trims: TABLE_TRIMS.to_vec(),
    };
    Fixture {
        stats: svc.stats(),
        report: run_analysis(data, &cfg, &opts).unwrap(),
    }
}

fn fixture_reproduction(out: &mut Outcome, fx: &Fixture, exp: &Value) {
    let a = &exp["analysis"];
    let r = &fx.report;
    out.check(
        r.sessions_analysed as u64 == a["sessions_analysed"].as_u64().unwrap(),
        format!("sessions analysed {}", r.sessions_analysed),
    );
    out.close(r.mean_accuracy, f(&a["mean_accuracy"]), REFERENCE_TOL, "mean accuracy");
    let want: BTreeSet<&str> = a["discarded"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let got: BTreeSet<&str> = r.discarded.iter().map(String::as_str).collect();
    out.check(got == want, format!("discarded {} sessions, reference {}", got.len(), want.len()));

    let table = r.trim_table.as_ref().unwrap();
    let rows = a["trim_table"].as_array().unwrap();
    let sizes: Vec<usize> = table.iter().map(|t| t.pool_size).collect();
    let ref_sizes: Vec<usize> = rows.iter().map(|t| t["pool_size"].as_u64().unwrap() as usize).collect();
    out.check(sizes == ref_sizes, format!("pool sizes {sizes:?} vs reference {ref_sizes:?}"));
    out.check(
        sizes == TABLE1_POOL_SIZES,
        format!("pool sizes from 663 sessions follow the published trim table: {sizes:?}"),
    );
    for (t, e) in table.iter().zip(rows) {
        let pct = (t.trim_fraction * 100.0).round();
        out.close(t.point_estimate, f(&e["point_estimate"]), REFERENCE_TOL, &format!("H_upper at {pct}%"));
        out.close(t.point_lower, f(&e["point_lower"]), REFERENCE_TOL, &format!("H_lower at {pct}%"));
        out.check(t.n_obs == e["n_obs"].as_u64().unwrap(), format!("n_obs at {pct}%: {}", t.n_obs));
    }
    out.close(r.estimate.h_upper, f(&a["h_upper"]), REFERENCE_TOL, "pooled H_upper at 65%");
    out.close(r.estimate.h_lower, f(&a["h_lower"]), REFERENCE_TOL, "pooled H_lower at 65%");
    out.close(r.estimate.redundancy, f(&a["redundancy"]), REFERENCE_TOL, "redundancy");
    let retained: BTreeSet<&str> = r.sessions.iter().filter(|s| s.retained).map(|s| s.session_id.as_str()).collect();
    let ref_retained: BTreeSet<&str> =
        exp["retained_65"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    out.check(retained == ref_retained, "retained sessions at 65% equal the reference set");
    out.note(format!(
        "{} discarded, H_upper {:.4} / H_lower {:.4} at 65%, redundancy {:.1}%",
        r.discarded.len(),
        r.estimate.h_upper,
        r.estimate.h_lower,
        100.0 * r.estimate.redundancy
    ));
}

// bootstrap

fn coverage_trial(trial: u64) -> bool {
    let q = [0.7, 0.2, 0.1];
    let truth = -q.iter().map(|p: &f64| p * p.log2()).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (trial << 20));
    let t0 = Utc.with_ymd_and_hms(2026, 1, 24, 0, 0, 0).unwrap();
    let sessions: Vec<ScoredSession> = (0..400)
        .map(|i| {
            let id = format!("s{i:03}");
            let ranks = sample_ranks(&q, 3, &mut rng);
            let observations: Vec<Observation> = ranks
                .iter()
                .enumerate()
                .map(|(j, &a)| Observation {
                    session_id: id.clone(),
                    participant_id: "p".into(),
                    sentence_id: "x".into(),
                    position: 70 + j,
                    attempts: a,
                    timestamp: t0,
                })
                .collect();
            ScoredSession {
                summary: SessionSummary {
                    session_id: id,
                    total_guesses: ranks.iter().map(|&a| a as u64).sum(),
                    correct_guesses: 3,
                    score: 0.0,
                    suspicious: false,
                },
                observations,
            }
        })
        .collect();
    let window = PositionWindow::new(70, 72).unwrap();
    let b = bootstrap_upper(&sessions, window, K, 1000, trial).unwrap();
    b.ci95.0 <= truth && truth <= b.ci95.1
}

fn bootstrap_criterion(out: &mut Outcome, fx: &Fixture, exp: &Value) {
    let a = &exp["analysis"];
    let b = fx.report.bootstrap.as_ref().unwrap();
    out.check(b.replicates == 2000, format!("{} replicates", b.replicates));
    out.close(b.ci95.0, f(&a["ci95"][0]), CI_TOL, "CI low vs reference");
    out.close(b.ci95.1, f(&a["ci95"][1]), CI_TOL, "CI high vs reference");
    out.close(b.ci_width, f(&a["ci_width"]), CI_TOL, "CI width vs reference");

    // determinism, on the fixture's retained pool
    let dir = fixture_dir();
    let again = load_fixture(&dir);
    out.check(again.report == fx.report, "identical seed gives an identical report");
    let retained: Vec<&str> = fx.report.sessions.iter().filter(|s| s.retained).map(|s| s.session_id.as_str()).collect();
    out.check(!retained.is_empty(), "retained pool is non-empty");

    let hits = (0..200).filter(|&t| coverage_trial(t)).count();
    let coverage = hits as f64 / 200.0;
    out.check(coverage >= COVERAGE_MIN, format!("coverage {coverage:.3} over 200 trials"));
    out.note(format!(
        "CI [{:.4}, {:.4}] vs reference [{:.4}, {:.4}], coverage {coverage:.3}",
        b.ci95.0,
        b.ci95.1,
        f(&a["ci95"][0]),
        f(&a["ci95"][1])
    ));
}

// corpus

fn random_unicode(rng: &mut ChaCha8Rng) -> String {
    const POOLS: [&str; 8] = [
        "АБВГҐДЕЄЖЗИІЇЙКЛМНОПРСТУФХЦЧШЩЬЮЯабвгґдеєжзиіїйклмнопрстуфхцчшщьюя",
        "ЫЭЪЁыэъё",
        "abcXYZ0123456789",
        ".,;:!?«»\"'’ʼ-–()[]…",
        " \t\n\r\u{a0}\u{2003}\u{3000}\u{ad}\u{200b}",
        "\u{306}\u{308}\u{301}\u{300}",
        "😀🇺🇦ß\u{130}ﬁΣσς",
        "ǅǈİ\u{1e9e}",
    ];
    let len = rng.random_range(0..80);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.1) {
                loop {
                    if let Some(c) = char::from_u32(rng.random_range(0..0x11_0000)) {
                        return c;
                    }
                }
            }
            let pool: Vec<char> = POOLS[rng.random_range(0..POOLS.len())].chars().collect();
            pool[rng.random_range(0..pool.len())]
        })
        .collect()
}

fn corpus_criterion(out: &mut Outcome, exp: &Value) {
    let dir = fixture_dir();
    let manifest = read_manifest(&dir.join("articles/manifest.json")).unwrap();
    let articles = load_articles(&dir.join("articles"), &manifest).unwrap();
    let alphabet = Alphabet::ukrainian();
    let pool = build_pool(&articles, &alphabet, LengthRange::default()).unwrap();
    let want = exp["corpus"]["sentences"].as_u64().unwrap() as usize;
    out.check(pool.len() == want, format!("surrogate articles give {} sentences, reference {want}", pool.len()));
    let reference: Vec<SentenceRecord> = read_pool(&dir.join("pool.jsonl")).unwrap();
    out.check(pool == reference, "pool records equal the reference pool");

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut idem, mut closure) = (0, 0);
    for _ in 0..10_000 {
        let s = random_unicode(&mut rng);
        let n = normalize(&s, &alphabet);
        if normalize(&n, &alphabet) != n {
            idem += 1;
        }
        let clean = n.chars().all(|c| alphabet.contains(c))
            && !n.starts_with(' ')
            && !n.ends_with(' ')
            && !n.contains("  ");
        if !clean {
            closure += 1;
        }
    }
    out.check(idem == 0, format!("{idem} of 10000 strings not idempotent"));
    out.check(closure == 0, format!("{closure} of 10000 strings leave the alphabet"));
}

// session engine

fn session_property(out: &mut Outcome) {
    let cfg = SessionConfig::default();
    let symbols = cfg.alphabet.symbols().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let t0 = Utc.with_ymd_and_hms(2026, 1, 24, 12, 0, 0).unwrap();
    let (mut conservation, mut replay, mut rejects, mut completed) = (0, 0, 0, 0);
    for n in 0..1000 {
        let len = rng.random_range(71..=200);
        let text: String = (0..len).map(|_| symbols[rng.random_range(0..symbols.len())]).collect();
        let sentence = SentenceRecord {
            id: format!("x-{n:03}"),
            normalized_text: text.clone(),
            raw_text: text.clone(),
            length: len,
            source_article: "x".into(),
        };
        let target: Vec<char> = text.chars().collect();
        let (mut s, _) = start_session(format!("s{n}"), "p", &sentence, &cfg, t0).unwrap();
        let start = s.clone();
        let mut now = t0;
        let mut events: Vec<GuessEvent> = Vec::new();
        let mut observations = Vec::new();
        let mut abandoned_at = None;
        let p_correct = rng.random_range(0.2..0.9);
        for _ in 0..600 {
            if s.status() != SessionStatus::Active {
                break;
            }
            let before = s.clone();
            let op = rng.random_range(0..100);
            let result = if op < 5 {
                // too soon after the previous guess
                let Some(last) = events.last() else { continue };
                let r = s.submit_guess(&cfg, target[s.cursor()], last.timestamp + TimeDelta::milliseconds(100));
                (!matches!(r, Err(SessionError::RateLimited { .. }))).then(|| rejects += 1);
                None
            } else if op < 8 {
                now += TimeDelta::milliseconds(400);
                if let Some(&c) = s.attempts_on_current().first() {
                    let r = s.submit_guess(&cfg, c, now);
                    (r != Err(SessionError::RepeatGuess(c))).then(|| rejects += 1);
                }
                None
            } else if op < 10 {
                now += TimeDelta::milliseconds(400);
                let r = s.submit_guess(&cfg, 'Q', now);
                (r != Err(SessionError::InvalidSymbol('Q'))).then(|| rejects += 1);
                None
            } else if op < 11 {
                now += TimeDelta::seconds(5);
                s.abandon(now).unwrap();
                abandoned_at = Some(now);
                None
            } else {
                now += TimeDelta::milliseconds(rng.random_range(300..3000));
                let truth = target[s.cursor()];
                let sym = if rng.random_bool(p_correct) {
                    truth
                } else {
                    let tried = s.attempts_on_current();
                    let options: Vec<char> =
                        symbols.iter().copied().filter(|&c| c != truth && !tried.contains(&c)).collect();
                    if options.is_empty() { truth } else { options[rng.random_range(0..options.len())] }
                };
                Some(s.submit_guess(&cfg, sym, now).unwrap())
            };
            match result {
                Some(step) => {
                    events.push(step.event);
                    observations.extend(step.observation);
                }
                None if abandoned_at.is_none() && s != before => rejects += 1,
                None => {}
            }
            let ok = s.initial_budget() == s.budget_remaining() + s.total_guesses()
                && s.total_guesses() == s.correct_guesses() + s.wrong_guesses()
                && s.cursor() == s.prefix_len() + s.correct_guesses()
                && (s.budget_remaining() > 0 || s.status() == SessionStatus::Completed);
            if !ok {
                conservation += 1;
            }
        }
        if s.status() == SessionStatus::Completed {
            completed += 1;
            let attempts: usize = observations.iter().map(|o: &Observation| o.attempts as usize).sum();
            if attempts > s.initial_budget() || s.total_guesses() != s.initial_budget() {
                conservation += 1;
            }
        }
        let mut again = start.clone();
        let mut replayed = Vec::new();
        for e in &events {
            replayed.extend(again.replay_event(&cfg, e).unwrap());
        }
        if let Some(at) = abandoned_at {
            again.abandon(at).unwrap();
        }
        let metas = HashMap::from([(s.id.clone(), s.meta())]);
        let derived = derive_observations(&events, &metas, &cfg.alphabet).unwrap();
        if again != s || replayed != observations || derived != observations {
            replay += 1;
        }
    }
    out.check(conservation == 0, format!("{conservation} budget-conservation violations"));
    out.check(replay == 0, format!("{replay} of 1000 sessions differ after replay"));
    out.check(rejects == 0, format!("{rejects} invalid requests not rejected cleanly"));
    out.check(completed > 100, format!("{completed} sessions ran out of budget"));
}

fn stats_replay(out: &mut Outcome, fx: &Fixture, exp: &Value) {
    let e = &exp["stats"];
    let s = &fx.stats;
    let pairs = [
        ("participants", s.participants),
        ("sessions_started", s.sessions_started),
        ("sessions_completed", s.sessions_completed),
        ("sessions_abandoned", s.sessions_abandoned),
        ("total_guesses", s.total_guesses),
        ("correct_guesses", s.correct_guesses),
        ("observations", s.observations),
    ];
    for (k, v) in pairs {
        out.check(e[k].as_u64() == Some(v as u64), format!("{k} {v} vs reference {}", e[k]));
    }
    out.check(
        (s.sessions_started, s.sessions_completed, s.total_guesses, s.correct_guesses) == (853, 501, 44_765, 17_023),
        "surrogate log replays to 853 / 501 / 44,765 / 17,023",
    );
}

// language models

fn tok(text: &str, start: usize, logprob: f64, base: LogBase) -> TokenLogprob {
    TokenLogprob {
        token_text: text.into(),
        start_char: start,
        logprob,
        base,
    }
}

fn record(id: &str, text: &str) -> SentenceRecord {
    SentenceRecord {
        id: id.into(),
        normalized_text: text.into(),
        raw_text: text.into(),
        length: text.chars().count(),
        source_article: "a".into(),
    }
}

/// Tokens covering `text` with the given cut points.
fn tokens_at(text: &str, cuts: &[usize], char_lp: &[f64]) -> Vec<TokenLogprob> {
    let chars: Vec<char> = text.chars().collect();
    let mut bounds = vec![0];
    bounds.extend(cuts.iter().copied().filter(|&c| c > 0 && c < chars.len()));
    bounds.push(chars.len());
    bounds.dedup();
    bounds
        .windows(2)
        .map(|w| {
            let lp = char_lp[w[0]..w[1]].iter().sum();
            tok(&chars[w[0]..w[1]].iter().collect::<String>(), w[0], lp, LogBase::Natural)
        })
        .collect()
}

fn bpc_of(sentences: &[(SentenceRecord, Vec<TokenLogprob>)]) -> (f64, usize) {
    let mut mock = MockProvider::new("m");
    for (s, t) in sentences {
        mock = mock.with_response(&s.raw_text, t.clone());
    }
    let recs: Vec<SentenceRecord> = sentences.iter().map(|(s, _)| s.clone()).collect();
    let r = evaluate_corpus(&recs, &mock, 70, 2).unwrap().result;
    (r.bpc, r.counted_tokens)
}

fn llm_criterion(out: &mut Outcome) {
    let ln = |x: f64| x.ln();
    // one: 80 single-character tokens at 1 bit each; 71..=79 counted
    let s1 = "А".repeat(80);
    let t1: Vec<_> = (0..80).map(|i| tok("А", i, ln(0.5), LogBase::Natural)).collect();
    let (bpc, n) = bpc_of(&[(record("f1", &s1), t1)]);
    out.close(bpc, 9.0 / 9.0, LLM_TOL, "fixture 1 bpc");
    out.check(n == 9, format!("fixture 1 counts {n} tokens"));

    // two: base-2 tokens of mixed length; the token starting at 68 is masked
    let s2 = "Б".repeat(100);
    let t2 = vec![
        tok(&"Б".repeat(68), 0, -5.0, LogBase::Two),
        tok(&"Б".repeat(4), 68, -1.0, LogBase::Two),
        tok(&"Б".repeat(8), 72, -3.0, LogBase::Two),
        tok(&"Б".repeat(20), 80, -7.0, LogBase::Two),
    ];
    let (bpc, _) = bpc_of(&[(record("f2", &s2), t2)]);
    out.close(bpc, 10.0 / 28.0, LLM_TOL, "fixture 2 bpc");

    // three: two sentences pooled; 6 tokens of 2 bits over 18 chars, plus
    // one token of 3 bits over 4 chars
    let s3a = "В".repeat(90);
    let t3a: Vec<_> = (0..30).map(|i| tok("ВВВ", 3 * i, ln(0.25), LogBase::Natural)).collect();
    let s3b = "Г".repeat(75);
    let t3b = vec![
        tok(&"Г".repeat(71), 0, ln(0.5), LogBase::Natural),
        tok("ГГГГ", 71, ln(0.125), LogBase::Natural),
    ];
    let (bpc, _) = bpc_of(&[(record("f3a", &s3a), t3a), (record("f3b", &s3b), t3b)]);
    out.close(bpc, 15.0 / 22.0, LLM_TOL, "fixture 3 bpc");

    // mask boundary: a token at 70 is excluded, one at 71 included
    let s4 = "Д".repeat(80);
    let t4 = vec![
        tok(&"Д".repeat(70), 0, -1.0, LogBase::Two),
        tok("Д", 70, -5.0, LogBase::Two),
        tok(&"Д".repeat(9), 71, -2.0, LogBase::Two),
    ];
    let (bpc, n) = bpc_of(&[(record("f4", &s4), t4)]);
    out.check(n == 1 && (bpc - 2.0 / 9.0).abs() <= LLM_TOL, format!("mask boundary: {n} tokens, bpc {bpc}"));

    // tokenizer independence: one chain-rule-consistent model, many
    // segmentations with a cut at 71
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let alphabet = Alphabet::ukrainian();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let len = rng.random_range(100..=200);
        let text: String = (0..len).map(|_| alphabet.symbols()[rng.random_range(0..K)]).collect();
        let lp: Vec<f64> = (0..len).map(|_| ln(rng.random_range(0.01..1.0))).collect();
        let per_char: Vec<usize> = (1..len).collect();
        let (a, _) = bpc_of(&[(record("t", &text), tokens_at(&text, &per_char, &lp))]);
        let mut cuts = vec![71];
        let mut c = 0;
        while c < len {
            c += rng.random_range(1..=7);
            cuts.push(c);
        }
        cuts.sort();
        let (b, _) = bpc_of(&[(record("t", &text), tokens_at(&text, &cuts, &lp))]);
        worst = worst.max((a - b).abs());
    }
    out.check(worst <= LLM_TOL, format!("tokenizer independence, max difference {worst:e}"));
}

#[test]
fn acceptance() {
    let mut report = Report {
        lines: Vec::new(),
        failed: 0,
    };
    let exp = expected();
    report.run("estimator formula suite", Duration::from_secs(1), estimator_formulas);
    report.run("synthetic-guesser consistency", Duration::from_secs(10), synthetic_guesser);

    let mut loaded = None;
    report.run("fixture reproduction (surrogate vs reference)", Duration::from_secs(120), |o| {
        let fx = loaded.insert(load_fixture(&fixture_dir()));
        fixture_reproduction(o, fx, &exp)
    });
    let fx = loaded.expect("fixture loaded");
    report.skip(
        "fixture reproduction (published numbers: 30 discarded, 1.830/1.201/0.327, H_lower 0.5987, 76.4%)",
        "published raw-data export unavailable; surrogate checked against the reference instead",
    );
    report.run("bootstrap (surrogate CI, determinism, coverage)", Duration::from_secs(300), |o| {
        bootstrap_criterion(o, &fx, &exp)
    });
    report.skip(
        "bootstrap (published CI [1.102, 1.192], width 0.090)",
        "published raw-data export unavailable",
    );
    report.run("corpus pipeline (surrogate articles, 10k-string properties)", Duration::from_secs(10), |o| {
        corpus_criterion(o, &exp)
    });
    report.skip("corpus pipeline (136 sentences from the published articles)", "source articles unavailable");
    report.run("session engine (1000 randomized sessions, surrogate stats replay)", Duration::from_secs(60), |o| {
        session_property(o);
        stats_replay(o, &fx, &exp);
    });
    report.skip(
        "session engine (published event log: 853 / 501 / 44,765 / 17,023)",
        "published event log unavailable; surrogate built to those counts is replayed above",
    );
    report.run("LLM evaluation with mock provider", Duration::from_secs(10), llm_criterion);
    report.skip("LLM evaluation (published live-model bpc)", "requires model access; not gated");

    println!(
        "{} criteria, {} failed",
        report.lines.iter().filter(|l| !l.starts_with("SKIP")).count(),
        report.failed
    );
    assert_eq!(report.failed, 0, "acceptance failures:\n{}", report.lines.join("\n"));
}
