//! Article ingestion and sentence-pool construction.
//!
//! The pipeline is split → script filter → normalize → length filter. The
//! normalized text is what participants guess; the raw sentence is kept so
//! language-model scoring can run on the unmodified text.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::alphabet::Alphabet;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("empty pool: no sentences survived filtering")]
    EmptyPool,
    #[error("invalid length range {min}..={max}")]
    InvalidRange { min: usize, max: usize },
    #[error("article {0} is empty")]
    EmptyArticle(String),
    #[error("{0} is not listed in the manifest")]
    UnlistedFile(PathBuf),
    #[error("manifest lists {0} but the file does not exist")]
    MissingFile(PathBuf),
    #[error("duplicate article id {0}")]
    DuplicateArticle(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: String,
    pub text: String,
    pub published_date: NaiveDate,
}

/// One pool sentence. Field order here is the JSON Lines schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub normalized_text: String,
    pub raw_text: String,
    pub length: usize,
    pub source_article: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

impl LengthRange {
    pub fn new(min: usize, max: usize) -> Result<Self, CorpusError> {
        if min > max {
            return Err(CorpusError::InvalidRange { min, max });
        }
        Ok(LengthRange { min, max })
    }

    pub fn contains(&self, len: usize) -> bool {
        (self.min..=self.max).contains(&len)
    }
}

impl Default for LengthRange {
    fn default() -> Self {
        LengthRange { min: 120, max: 200 }
    }
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];

/// Splits on `.`, `!` and `?`. Terminators are dropped, pieces are trimmed
/// and empty pieces discarded. Trailing text without a terminator is kept.
pub fn split_sentences(text: &str) -> Vec<String> {
    text.split(TERMINATORS)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// False if the sentence has any ASCII Latin letter or ASCII digit.
pub fn passes_script_filter(sentence: &str) -> bool {
    !sentence.chars().any(|c| c.is_ascii_alphanumeric())
}

/// Case-folds, masks every non-alphabet character to whitespace, collapses
/// whitespace runs and strips the ends.
///
/// Input is NFC-composed first so decomposed letters such as `И` + U+0306
/// survive as `Й` rather than being split by the mask.
pub fn normalize(sentence: &str, alphabet: &Alphabet) -> String {
    let ws = alphabet.whitespace();
    let mut folded = String::with_capacity(sentence.len());
    for c in sentence.nfc() {
        alphabet.case().apply(c, &mut folded);
    }
    let mut out = String::with_capacity(folded.len());
    let mut pending_space = false;
    for c in folded.chars() {
        if c != ws && alphabet.contains(c) {
            if pending_space && !out.is_empty() {
                out.push(ws);
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Builds the sentence pool. Output order follows article order, then
/// sentence order within each article.
pub fn build_pool(
    articles: &[RawArticle],
    alphabet: &Alphabet,
    range: LengthRange,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    let mut pool = Vec::new();
    for article in articles {
        for (idx, raw) in split_sentences(&article.text).into_iter().enumerate() {
            if !passes_script_filter(&raw) {
                continue;
            }
            let normalized = normalize(&raw, alphabet);
            let length = normalized.chars().count();
            if !range.contains(length) {
                continue;
            }
            pool.push(SentenceRecord {
                id: format!("{}-{:03}", article.id, idx),
                normalized_text: normalized,
                raw_text: raw,
                length,
                source_article: article.id.clone(),
            });
        }
    }
    if pool.is_empty() {
        return Err(CorpusError::EmptyPool);
    }
    Ok(pool)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub published_date: NaiveDate,
}

/// `filename → {id, published_date}`; iteration is in filename order.
pub type Manifest = BTreeMap<String, ManifestEntry>;

pub fn read_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| CorpusError::Json {
        path: path.to_owned(),
        line: 0,
        source,
    })
}

/// Publication dates keyed by article id.
pub fn article_dates(manifest: &Manifest) -> BTreeMap<String, NaiveDate> {
    manifest
        .values()
        .map(|e| (e.id.clone(), e.published_date))
        .collect()
}

/// Loads every `*.txt` file in `dir`. Each must have a manifest entry and
/// every manifest entry must exist on disk.
pub fn load_articles(dir: &Path, manifest: &Manifest) -> Result<Vec<RawArticle>, CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| CorpusError::Io { path, source }
    };
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if !manifest.contains_key(name) {
                return Err(CorpusError::UnlistedFile(path));
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut articles = Vec::with_capacity(manifest.len());
    for (name, meta) in manifest {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CorpusError::MissingFile(path));
        }
        if !seen.insert(meta.id.clone()) {
            return Err(CorpusError::DuplicateArticle(meta.id.clone()));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyArticle(meta.id.clone()));
        }
        articles.push(RawArticle {
            id: meta.id.clone(),
            text,
            published_date: meta.published_date,
        });
    }
    Ok(articles)
}

pub fn write_pool<W: Write>(mut w: W, pool: &[SentenceRecord]) -> std::io::Result<()> {
    for rec in pool {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_pool(path: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut pool = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?;
        pool.push(rec);
    }
    Ok(pool)
}
