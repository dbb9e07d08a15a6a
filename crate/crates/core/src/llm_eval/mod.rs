//! Bits per character for token-level language models.
//!
//! Per-token log-probabilities come from an external provider. Loss is
//! counted only on tokens that start after the revealed-prefix boundary, and
//! the total is divided by the number of characters those tokens cover so
//! models with different tokenizers are comparable.

mod provider;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use provider::{
    evaluate_corpus, fetch_logprobs, CorpusEvaluation, HttpProvider, LogprobProvider,
    MockFile, MockProvider, ProviderConfig, ProviderRequest, ProviderResponse,
};

use crate::corpus::SentenceRecord;

pub const DEFAULT_MASK_FROM: usize = 70;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmEvalError {
    #[error("token offsets do not tile the sentence: {0}")]
    TokenizationGap(String),
    #[error("invalid log-probability {0}")]
    InvalidLogprob(f64),
    #[error("no counted tokens in any sentence")]
    NoCountedTokens,
    #[error("provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("sentence exceeds the provider context window")]
    ContextTooLong,
    #[error("provider rejected the request with status {status}: {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("no publication date for article {0}")]
    MissingDate(String),
}

/// Base of a log-probability value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    #[serde(rename = "e")]
    Natural,
    #[serde(rename = "2")]
    Two,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    #[serde(rename = "text")]
    pub token_text: String,
    /// 0-based character offset of the token's first character.
    #[serde(rename = "start")]
    pub start_char: usize,
    pub logprob: f64,
    pub base: LogBase,
}

impl TokenLogprob {
    /// `-log2 P` of this token.
    pub fn bits(&self) -> f64 {
        match self.base {
            LogBase::Natural => -self.logprob / std::f64::consts::LN_2,
            LogBase::Two => -self.logprob,
        }
    }

    pub fn char_len(&self) -> usize {
        self.token_text.chars().count()
    }
}

/// Checks that tokens are contiguous, start at 0, end at the sentence end,
/// concatenate to the sentence, and carry valid log-probabilities.
pub fn validate_tokens(sentence: &str, tokens: &[TokenLogprob]) -> Result<(), LlmEvalError> {
    let mut expected = 0usize;
    let mut rebuilt = String::with_capacity(sentence.len());
    for (i, t) in tokens.iter().enumerate() {
        if t.token_text.is_empty() {
            return Err(LlmEvalError::TokenizationGap(format!("token {i} is empty")));
        }
        if t.start_char != expected {
            return Err(LlmEvalError::TokenizationGap(format!(
                "token {i} starts at {} but previous token ends at {expected}",
                t.start_char
            )));
        }
        if !t.logprob.is_finite() || t.logprob > 0.0 {
            return Err(LlmEvalError::InvalidLogprob(t.logprob));
        }
        expected += t.char_len();
        rebuilt.push_str(&t.token_text);
    }
    let len = sentence.chars().count();
    if expected != len {
        return Err(LlmEvalError::TokenizationGap(format!(
            "tokens cover {expected} of {len} characters"
        )));
    }
    if rebuilt != sentence {
        return Err(LlmEvalError::TokenizationGap(
            "token text does not reproduce the sentence".into(),
        ));
    }
    Ok(())
}

/// Loss tally for one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub bits: f64,
    pub counted_chars: usize,
    pub counted_tokens: usize,
    pub sentence_chars: usize,
    pub total_tokens: usize,
}

/// Sums `-log2 P` over tokens whose first character lies strictly after
/// position `mask_from` (0-based), so with the default of 70 a token
/// starting at offset 70 is masked and one starting at 71 is counted.
pub fn score_sentence(
    sentence: &str,
    tokens: &[TokenLogprob],
    mask_from: usize,
) -> Result<SentenceScore, LlmEvalError> {
    validate_tokens(sentence, tokens)?;
    let mut score = SentenceScore {
        sentence_chars: sentence.chars().count(),
        total_tokens: tokens.len(),
        ..Default::default()
    };
    for t in tokens.iter().filter(|t| t.start_char > mask_from) {
        score.bits += t.bits();
        score.counted_chars += t.char_len();
        score.counted_tokens += 1;
    }
    Ok(score)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmEvalResult {
    pub model_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub params_label: Option<String>,
    pub bpc: f64,
    /// Characters per token over whole sentences, masked tokens included.
    pub fertility: f64,
    pub counted_chars: usize,
    pub counted_tokens: usize,
    pub sentences: usize,
    pub total_chars: usize,
    pub total_tokens: usize,
}

/// `bpc = Σ bits / Σ counted_chars`, `fertility = Σ chars / Σ tokens`.
pub fn corpus_bpc(
    model_id: &str,
    scores: &[SentenceScore],
) -> Result<LlmEvalResult, LlmEvalError> {
    let bits: f64 = scores.iter().map(|s| s.bits).sum();
    let counted_chars: usize = scores.iter().map(|s| s.counted_chars).sum();
    if counted_chars == 0 {
        return Err(LlmEvalError::NoCountedTokens);
    }
    let total_chars: usize = scores.iter().map(|s| s.sentence_chars).sum();
    let total_tokens: usize = scores.iter().map(|s| s.total_tokens).sum();
    Ok(LlmEvalResult {
        model_id: model_id.to_owned(),
        params_label: None,
        bpc: (bits / counted_chars as f64).max(0.0),
        fertility: total_chars as f64 / total_tokens as f64,
        counted_chars,
        counted_tokens: scores.iter().map(|s| s.counted_tokens).sum(),
        sentences: scores.len(),
        total_chars,
        total_tokens,
    })
}

/// True when the sentence's article was published after `cutoff`.
pub fn contamination_check(
    sentence: &SentenceRecord,
    published: &BTreeMap<String, NaiveDate>,
    cutoff: NaiveDate,
) -> Result<bool, LlmEvalError> {
    published
        .get(&sentence.source_article)
        .map(|&date| date > cutoff)
        .ok_or_else(|| LlmEvalError::MissingDate(sentence.source_article.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(text: &str, start: usize, logprob: f64, base: LogBase) -> TokenLogprob {
        TokenLogprob {
            token_text: text.into(),
            start_char: start,
            logprob,
            base,
        }
    }

    /// Splits `sentence` at the given char offsets, all with probability `p`.
    fn tokens_at(sentence: &str, cuts: &[usize], p: f64) -> Vec<TokenLogprob> {
        let chars: Vec<char> = sentence.chars().collect();
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(chars.len());
        bounds
            .windows(2)
            .map(|w| tok(&chars[w[0]..w[1]].iter().collect::<String>(), w[0], p.log2(), LogBase::Two))
            .collect()
    }

    fn sentence(len: usize) -> String {
        "абвгд".chars().cycle().take(len).collect()
    }

    #[test]
    fn two_half_probability_tokens() {
        let s = sentence(75);
        let toks = tokens_at(&s, &[71, 73], 0.5);
        let score = score_sentence(&s, &toks, 70).unwrap();
        assert_eq!(score.bits, 2.0);
        assert_eq!(score.counted_chars, 4);
        assert_eq!(score.counted_tokens, 2);
        assert_eq!(score.total_tokens, 3);
        assert_eq!(score.bits / score.counted_chars as f64, 0.5);
    }

    #[test]
    fn fully_masked_sentence() {
        let s = sentence(70);
        let toks = tokens_at(&s, &[10, 40], 0.5);
        let score = score_sentence(&s, &toks, 70).unwrap();
        assert_eq!((score.bits, score.counted_chars, score.counted_tokens), (0.0, 0, 0));
    }

    #[test]
    fn certain_token_costs_nothing() {
        let s = sentence(80);
        let toks = tokens_at(&s, &[75], 1.0);
        let score = score_sentence(&s, &toks, 70).unwrap();
        assert_eq!(score.bits, 0.0);
        assert_eq!(score.counted_chars, 5);
    }

    #[test]
    fn mask_boundary_is_strict() {
        let s = sentence(80);
        let at70 = tokens_at(&s, &[70], 0.5);
        let score = score_sentence(&s, &at70, 70).unwrap();
        assert_eq!(score.counted_tokens, 0);
        let at71 = tokens_at(&s, &[71], 0.5);
        let score = score_sentence(&s, &at71, 70).unwrap();
        assert_eq!(score.counted_tokens, 1);
        assert_eq!(score.counted_chars, 9);
    }

    #[test]
    fn natural_log_is_converted() {
        let t = tok("аб", 0, (0.25f64).ln(), LogBase::Natural);
        assert!((t.bits() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tiling_errors() {
        let s = "абвг";
        let gap = vec![tok("аб", 0, -1.0, LogBase::Two), tok("г", 3, -1.0, LogBase::Two)];
        assert!(matches!(score_sentence(s, &gap, 0), Err(LlmEvalError::TokenizationGap(_))));
        let short = vec![tok("абв", 0, -1.0, LogBase::Two)];
        assert!(matches!(score_sentence(s, &short, 0), Err(LlmEvalError::TokenizationGap(_))));
        let wrong_text = vec![tok("абвд", 0, -1.0, LogBase::Two)];
        assert!(matches!(score_sentence(s, &wrong_text, 0), Err(LlmEvalError::TokenizationGap(_))));
        let positive = vec![tok("абвг", 0, 0.5, LogBase::Two)];
        assert!(matches!(score_sentence(s, &positive, 0), Err(LlmEvalError::InvalidLogprob(_))));
    }

    #[test]
    fn corpus_ratio_and_fertility() {
        let scores = [
            SentenceScore { bits: 3.0, counted_chars: 10, counted_tokens: 3, sentence_chars: 80, total_tokens: 20 },
            SentenceScore { bits: 0.0, counted_chars: 0, counted_tokens: 0, sentence_chars: 60, total_tokens: 15 },
            SentenceScore { bits: 5.0, counted_chars: 30, counted_tokens: 9, sentence_chars: 100, total_tokens: 25 },
        ];
        let r = corpus_bpc("m", &scores).unwrap();
        assert_eq!(r.bpc, 8.0 / 40.0);
        assert_eq!(r.fertility, 240.0 / 60.0);
        assert_eq!(r.sentences, 3);
        let masked = [SentenceScore { sentence_chars: 50, total_tokens: 10, ..Default::default() }];
        assert_eq!(corpus_bpc("m", &masked).unwrap_err(), LlmEvalError::NoCountedTokens);
    }

    #[test]
    fn contamination_by_date() {
        let rec = SentenceRecord {
            id: "a-000".into(),
            normalized_text: String::new(),
            raw_text: String::new(),
            length: 0,
            source_article: "a".into(),
        };
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        let cutoff = d(2025, 6, 1);
        let mut dates = BTreeMap::from([("a".to_string(), d(2025, 9, 1))]);
        assert!(contamination_check(&rec, &dates, cutoff).unwrap());
        dates.insert("a".into(), d(2025, 5, 1));
        assert!(!contamination_check(&rec, &dates, cutoff).unwrap());
        dates.clear();
        assert_eq!(
            contamination_check(&rec, &dates, cutoff).unwrap_err(),
            LlmEvalError::MissingDate("a".into())
        );
    }

    #[test]
    fn wire_format() {
        let t = tok("аб", 3, -0.5, LogBase::Natural);
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"text":"аб","start":3,"logprob":-0.5,"base":"e"}"#
        );
        let back: TokenLogprob =
            serde_json::from_str(r#"{"text":"в","start":0,"logprob":-1.0,"base":"2"}"#).unwrap();
        assert_eq!(back.base, LogBase::Two);
    }
}
