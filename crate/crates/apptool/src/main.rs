mod analyze;
mod bundle;
mod llm;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use guesslab::corpus::{build_pool, load_articles, read_manifest, write_pool, LengthRange};
use guesslab::Alphabet;
use guesslab_service::ServiceConfig;
use sha2::{Digest, Sha256};
use tracing::Level;

#[derive(Parser, Debug)]
#[command(name = "apptool", version, about = "Guessing-game entropy toolkit")]
struct Cli {
    /// Seed for every random choice; drawn at random and reported when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "info")]
    log_level: Level,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sentence pool preparation.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run the experiment server.
    Serve(ServeArgs),
    /// Entropy estimates from collected observations.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Bits per character of language models on the pool.
    LlmEval(llm::LlmEvalArgs),
    /// Report bundle plus every figure table in one directory.
    ExportFigures(analyze::FiguresArgs),
}

#[derive(Subcommand, Debug)]
enum CorpusCommand {
    /// Split, filter and normalize articles into a sentence pool.
    Prepare(PrepareArgs),
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Pooled bounds after filtering and trimming, with bootstrap CI.
    Bounds(analyze::BoundsArgs),
    /// Sensitivity of the estimate to the trim fraction.
    TrimTable(analyze::TrimTableArgs),
    /// Bootstrap of the pooled upper bound.
    Bootstrap(analyze::BootstrapArgs),
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Directory of `.txt` articles.
    #[arg(long)]
    articles: PathBuf,
    /// Article manifest; defaults to `manifest.json` in the articles directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    alphabet: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    min_len: usize,
    #[arg(long, default_value_t = 200)]
    max_len: usize,
    /// Pool destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// TOML configuration; `GUESSLAB_*` variables and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

fn prepare(args: &PrepareArgs) -> anyhow::Result<()> {
    let manifest_path = args.manifest.clone().unwrap_or_else(|| args.articles.join("manifest.json"));
    let manifest = read_manifest(&manifest_path)?;
    let alphabet = match &args.alphabet {
        Some(p) => Alphabet::from_file(p)?,
        None => Alphabet::ukrainian(),
    };
    let articles = load_articles(&args.articles, &manifest)?;
    let pool = build_pool(&articles, &alphabet, LengthRange::new(args.min_len, args.max_len)?)?;
    let mut bytes = Vec::new();
    write_pool(&mut bytes, &pool)?;
    bundle::write_output(&args.out, &bytes)?;
    println!(
        "{} sentences from {} articles, sha256 {}",
        pool.len(),
        articles.len(),
        hex::encode(Sha256::digest(&bytes))
    );
    Ok(())
}

fn serve(args: &ServeArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ServiceConfig::from_file(p)?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(v) = args.listen {
        cfg.listen = v;
    }
    if let Some(v) = &args.corpus {
        cfg.corpus = v.clone();
    }
    if let Some(v) = &args.log {
        cfg.log = v.clone();
    }
    if let Some(v) = &args.snapshot {
        cfg.snapshot = Some(v.clone());
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    let (service, seed) = guesslab_service::build(&cfg)?;
    let stats = service.stats();
    tracing::info!(seed, sessions = stats.sessions_started, participants = stats.participants, "state recovered");

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        guesslab_service::serve(
            Arc::new(service),
            listener,
            Duration::from_secs(cfg.sweep_interval_secs.max(1)),
            Duration::from_secs(cfg.snapshot_interval_secs.max(1)),
            shutdown,
        )
        .await?;
        Ok(())
    })
}

fn main() {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_max_level(cli.log_level)
        .with_writer(std::io::stderr)
        .init();
    let seed = cli.seed.unwrap_or_else(rand::random);
    let result = match &cli.command {
        Command::Corpus(CorpusCommand::Prepare(a)) => prepare(a),
        Command::Serve(a) => serve(a, cli.seed),
        Command::Analyze(AnalyzeCommand::Bounds(a)) => analyze::bounds(a, seed),
        Command::Analyze(AnalyzeCommand::TrimTable(a)) => analyze::trim_table(a, seed),
        Command::Analyze(AnalyzeCommand::Bootstrap(a)) => analyze::bootstrap_cmd(a, seed),
        Command::LlmEval(a) => llm::run(a),
        Command::ExportFigures(a) => analyze::figures(a, seed),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
