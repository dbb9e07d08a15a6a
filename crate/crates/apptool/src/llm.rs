//! `llm-eval`: bits per character of language models on the sentence pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::Args;
use guesslab::corpus::{article_dates, read_manifest, read_pool, SentenceRecord};
use guesslab::llm_eval::{
    contamination_check, evaluate_corpus, HttpProvider, LlmEvalResult, LogprobProvider,
    MockProvider, ProviderConfig, SentenceScore, DEFAULT_MASK_FROM,
};
use serde::Serialize;
use url::Url;

use crate::bundle::{hash_input, write_output, InputFile};

fn parse_param(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.to_owned(), b.to_owned()))
        .ok_or_else(|| format!("expected MODEL=LABEL, got {s:?}"))
}

#[derive(Args, Debug)]
pub struct LlmEvalArgs {
    /// Sentence pool (JSON Lines).
    #[arg(long)]
    pub pool: PathBuf,
    /// Model id; repeat for several models.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    /// Log-probability endpoint.
    #[arg(long, required_unless_present = "mock", conflicts_with = "mock")]
    pub endpoint: Option<Url>,
    /// Answer from a mock file instead of a provider.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Parameter-count label for a model, MODEL=LABEL.
    #[arg(long = "params", value_parser = parse_param)]
    pub params: Vec<(String, String)>,
    /// Only score sentences from articles published after this date.
    #[arg(long, requires = "manifest")]
    pub cutoff: Option<NaiveDate>,
    /// Article manifest with publication dates.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Tokens starting at or before this 0-based offset are not counted.
    #[arg(long, default_value_t = DEFAULT_MASK_FROM)]
    pub mask_from: usize,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Environment variable holding a bearer token for the endpoint.
    #[arg(long)]
    pub auth_token_env: Option<String>,
    /// Include per-sentence tallies in the output.
    #[arg(long)]
    pub per_sentence: bool,
    /// Output destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ModelOutput {
    #[serde(flatten)]
    result: LlmEvalResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sentence: Option<BTreeMap<String, SentenceScore>>,
}

#[derive(Serialize)]
struct Output<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: &'a [InputFile],
    mask_from: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff: Option<NaiveDate>,
    sentences: usize,
    /// Ascending bits per character.
    results: Vec<ModelOutput>,
}

fn select(
    pool: Vec<SentenceRecord>,
    cutoff: Option<NaiveDate>,
    manifest: Option<&Path>,
) -> anyhow::Result<Vec<SentenceRecord>> {
    let (Some(cutoff), Some(manifest)) = (cutoff, manifest) else {
        return Ok(pool);
    };
    let dates = article_dates(&read_manifest(manifest)?);
    let mut kept = Vec::new();
    for s in pool {
        if contamination_check(&s, &dates, cutoff)? {
            kept.push(s);
        }
    }
    Ok(kept)
}

fn provider(args: &LlmEvalArgs, model: &str) -> anyhow::Result<Box<dyn LogprobProvider>> {
    if let Some(mock) = &args.mock {
        return Ok(Box::new(MockProvider::load(mock, model)?));
    }
    let endpoint = args.endpoint.clone().expect("clap requires endpoint or mock");
    let mut cfg = ProviderConfig::new(endpoint, model);
    cfg.timeout = Duration::from_secs(args.timeout_secs);
    cfg.max_retries = args.retries;
    cfg.max_in_flight = args.max_in_flight;
    if let Some(var) = &args.auth_token_env {
        cfg.auth_token = Some(std::env::var(var).with_context(|| format!("reading ${var}"))?);
    }
    Ok(Box::new(HttpProvider::new(cfg)?))
}

pub fn run(args: &LlmEvalArgs) -> anyhow::Result<()> {
    let mut inputs = vec![hash_input("pool", &args.pool)?];
    if let Some(m) = &args.manifest {
        inputs.push(hash_input("manifest", m)?);
    }
    if let Some(m) = &args.mock {
        inputs.push(hash_input("mock", m)?);
    }
    let sentences = select(read_pool(&args.pool)?, args.cutoff, args.manifest.as_deref())?;
    if sentences.is_empty() {
        bail!("no sentences left to score");
    }
    let labels: BTreeMap<&str, &str> = args.params.iter().map(|(m, l)| (m.as_str(), l.as_str())).collect();

    let mut results = Vec::new();
    for model in &args.models {
        let p = provider(args, model)?;
        let eval = evaluate_corpus(&sentences, p.as_ref(), args.mask_from, args.max_in_flight)
            .with_context(|| format!("model {model}"))?;
        let mut result = eval.result;
        result.params_label = labels.get(model.as_str()).map(|l| l.to_string());
        tracing::info!(model = %model, bpc = result.bpc, "scored");
        results.push(ModelOutput {
            result,
            per_sentence: args.per_sentence.then(|| eval.per_sentence.into_iter().collect()),
        });
    }
    results.sort_by(|a, b| a.result.bpc.total_cmp(&b.result.bpc).then(a.result.model_id.cmp(&b.result.model_id)));

    let out = Output {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "llm-eval",
        inputs: &inputs,
        mask_from: args.mask_from,
        cutoff: args.cutoff,
        sentences: sentences.len(),
        results,
    };
    let mut bytes = serde_json::to_vec_pretty(&out)?;
    bytes.push(b'\n');
    write_output(&args.out, &bytes)?;
    if args.out != Path::new("-") {
        for r in &out.results {
            println!(
                "{:<32} {:>8} {:.4} bpc  fertility {:.3}",
                r.result.model_id,
                r.result.params_label.as_deref().unwrap_or("-"),
                r.result.bpc,
                r.result.fertility
            );
        }
    }
    Ok(())
}
