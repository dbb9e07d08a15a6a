//! Log-probability providers.
//!
//! Wire format: `POST endpoint` with `{"model": ID, "text": SENTENCE}`,
//! answered by `{"tokens": [{"text", "start", "logprob", "base"}]}`.
//! Status 413 means the sentence does not fit the model context.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use url::Url;

use super::{
    corpus_bpc, score_sentence, validate_tokens, LlmEvalError, LlmEvalResult, SentenceScore,
    TokenLogprob,
};
use crate::corpus::SentenceRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub tokens: Vec<TokenLogprob>,
}

#[derive(Clone, Debug)]
pub struct ProviderConfig {
    pub endpoint: Url,
    pub model_id: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub auth_token: Option<String>,
    pub max_in_flight: usize,
}

impl ProviderConfig {
    pub fn new(endpoint: Url, model_id: impl Into<String>) -> Self {
        ProviderConfig {
            endpoint,
            model_id: model_id.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            auth_token: None,
            max_in_flight: 4,
        }
    }
}

pub trait LogprobProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Raw provider answer for one sentence, conditioned on nothing but the
    /// sentence's own preceding tokens.
    fn request(&self, text: &str) -> Result<Vec<TokenLogprob>, LlmEvalError>;
}

/// Fetches and validates per-token log-probabilities. A response whose
/// offsets do not tile the sentence is reported as malformed.
pub fn fetch_logprobs(
    provider: &dyn LogprobProvider,
    text: &str,
) -> Result<Vec<TokenLogprob>, LlmEvalError> {
    let tokens = provider.request(text)?;
    validate_tokens(text, &tokens).map_err(|e| LlmEvalError::MalformedResponse(e.to_string()))?;
    Ok(tokens)
}

pub struct HttpProvider {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(cfg: ProviderConfig) -> Result<Self, LlmEvalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| LlmEvalError::ProviderUnavailable {
                attempts: 0,
                reason: e.to_string(),
            })?;
        Ok(HttpProvider { cfg, client })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    fn backoff(attempt: u32) -> Duration {
        Duration::from_millis(50u64 << attempt.min(6))
    }
}

enum Attempt {
    Done(Result<Vec<TokenLogprob>, LlmEvalError>),
    Retry(String),
}

impl LogprobProvider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn request(&self, text: &str) -> Result<Vec<TokenLogprob>, LlmEvalError> {
        let body = ProviderRequest {
            model: self.cfg.model_id.clone(),
            text: text.to_owned(),
        };
        let attempts = self.cfg.max_retries + 1;
        let mut last_reason = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Self::backoff(attempt - 1));
            }
            let mut req = self.client.post(self.cfg.endpoint.clone()).json(&body);
            if let Some(token) = &self.cfg.auth_token {
                req = req.bearer_auth(token);
            }
            let outcome = match req.send() {
                Err(e) => Attempt::Retry(e.to_string()),
                Ok(resp) => match resp.status() {
                    StatusCode::OK => Attempt::Done(
                        resp.json::<ProviderResponse>()
                            .map(|r| r.tokens)
                            .map_err(|e| LlmEvalError::MalformedResponse(e.to_string())),
                    ),
                    StatusCode::PAYLOAD_TOO_LARGE => Attempt::Done(Err(LlmEvalError::ContextTooLong)),
                    s if s == StatusCode::TOO_MANY_REQUESTS || s.is_server_error() => {
                        Attempt::Retry(format!("status {s}"))
                    }
                    s => Attempt::Done(Err(LlmEvalError::ProviderRejected {
                        status: s.as_u16(),
                        body: resp.text().unwrap_or_default(),
                    })),
                },
            };
            match outcome {
                Attempt::Done(r) => return r,
                Attempt::Retry(reason) => {
                    tracing::debug!(attempt, %reason, "provider request failed");
                    last_reason = reason;
                }
            }
        }
        Err(LlmEvalError::ProviderUnavailable {
            attempts,
            reason: last_reason,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MockEntry {
    text: String,
    tokens: Vec<TokenLogprob>,
}

/// `{"models": {"model-id": [{"text": ..., "tokens": [...]}, ...]}}`
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MockFile {
    models: BTreeMap<String, Vec<MockEntry>>,
}

impl MockFile {
    pub fn insert(&mut self, model: &str, text: &str, tokens: Vec<TokenLogprob>) {
        self.models.entry(model.to_owned()).or_default().push(MockEntry {
            text: text.to_owned(),
            tokens,
        });
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}

/// Answers from a fixed table; used for offline tests and dry runs.
#[derive(Clone, Debug)]
pub struct MockProvider {
    model_id: String,
    responses: HashMap<String, Vec<TokenLogprob>>,
}

impl MockProvider {
    pub fn new(model_id: impl Into<String>) -> Self {
        MockProvider {
            model_id: model_id.into(),
            responses: HashMap::new(),
        }
    }

    pub fn with_response(mut self, text: &str, tokens: Vec<TokenLogprob>) -> Self {
        self.responses.insert(text.to_owned(), tokens);
        self
    }

    pub fn from_mock_file(file: &MockFile, model_id: &str) -> Result<Self, LlmEvalError> {
        let entries = file.models.get(model_id).ok_or_else(|| {
            LlmEvalError::ProviderUnavailable {
                attempts: 0,
                reason: format!("mock file has no model {model_id:?}"),
            }
        })?;
        Ok(MockProvider {
            model_id: model_id.to_owned(),
            responses: entries
                .iter()
                .map(|e| (e.text.clone(), e.tokens.clone()))
                .collect(),
        })
    }

    pub fn load(path: &Path, model_id: &str) -> Result<Self, LlmEvalError> {
        let unavailable = |reason: String| LlmEvalError::ProviderUnavailable { attempts: 0, reason };
        let bytes = std::fs::read(path).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
        let file: MockFile = serde_json::from_slice(&bytes)
            .map_err(|e| LlmEvalError::MalformedResponse(format!("{}: {e}", path.display())))?;
        MockProvider::from_mock_file(&file, model_id)
    }
}

impl LogprobProvider for MockProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn request(&self, text: &str) -> Result<Vec<TokenLogprob>, LlmEvalError> {
        self.responses
            .get(text)
            .cloned()
            .ok_or_else(|| LlmEvalError::MalformedResponse(format!("no mock response for {text:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub result: LlmEvalResult,
    pub per_sentence: Vec<(String, SentenceScore)>,
}

/// Scores every sentence's raw text independently, with at most
/// `max_in_flight` provider requests at a time.
pub fn evaluate_corpus(
    sentences: &[SentenceRecord],
    provider: &dyn LogprobProvider,
    mask_from: usize,
    max_in_flight: usize,
) -> Result<CorpusEvaluation, LlmEvalError> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    let per_sentence = pool.install(|| {
        sentences
            .par_iter()
            .map(|s| {
                let tokens = fetch_logprobs(provider, &s.raw_text)?;
                Ok((s.id.clone(), score_sentence(&s.raw_text, &tokens, mask_from)?))
            })
            .collect::<Result<Vec<_>, LlmEvalError>>()
    })?;
    let scores: Vec<SentenceScore> = per_sentence.iter().map(|(_, s)| *s).collect();
    let result = corpus_bpc(provider.model_id(), &scores)?;
    Ok(CorpusEvaluation {
        result,
        per_sentence,
    })
}
