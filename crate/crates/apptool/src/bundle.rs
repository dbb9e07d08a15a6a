//! Report bundle written by the analysis commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use guesslab::analysis::AnalysisReport;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn hash_input(role: &str, path: &Path) -> anyhow::Result<InputFile> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputFile {
        role: role.to_owned(),
        path: path.to_owned(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

#[derive(Debug, Serialize)]
pub struct Headline {
    pub sessions_analysed: usize,
    pub discarded: usize,
    pub after_filter: usize,
    pub retained: usize,
    pub n_obs: u64,
    pub h_upper: f64,
    pub h_lower: f64,
    pub redundancy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci95: Option<(f64, f64)>,
}

impl Headline {
    pub fn new(r: &AnalysisReport) -> Self {
        Headline {
            sessions_analysed: r.sessions_analysed,
            discarded: r.discarded.len(),
            after_filter: r.after_filter,
            retained: r.retained,
            n_obs: r.estimate.n_obs,
            h_upper: r.estimate.h_upper,
            h_lower: r.estimate.h_lower,
            redundancy: r.estimate.redundancy,
            bootstrap_median: r.bootstrap.as_ref().map(|b| b.median),
            ci95: r.bootstrap.as_ref().map(|b| b.ci95),
        }
    }
}

/// Everything needed to reproduce a run. Contains no timestamps, so the
/// same inputs and seed give identical bytes.
#[derive(Debug, Serialize)]
pub struct ReportBundle<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub inputs: &'a [InputFile],
    pub headline: Headline,
    pub report: &'a AnalysisReport,
    pub artifacts: Vec<String>,
}

impl<'a> ReportBundle<'a> {
    pub fn new(command: &'a str, seed: u64, inputs: &'a [InputFile], report: &'a AnalysisReport) -> Self {
        ReportBundle {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            inputs,
            headline: Headline::new(report),
            report,
            artifacts: Vec::new(),
        }
    }

    pub fn to_json(&self) -> anyhow::Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

/// Writes to `path`, or to stdout when `path` is `-`.
pub fn write_output(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        out.flush()?;
        return Ok(());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
