//! Output directory layout and shared command plumbing.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use protex_core::corpus::{Attachment, Corpus};
use protex_core::gateway::{Clock, Gateway, ReplayBackend, RunLog};
use protex_core::pipeline::Approach;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{Backend, RunConfig};

/// Failure with a dedicated process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub const EMPTY_CORPUS: u8 = 3;
    pub const SOURCE_FAILURES: u8 = 4;
    pub const MISSING_ADJUDICATION: u8 = 5;

    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Exit { code, message: message.into() }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

/// Paths of every artifact under the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }

    fn approach(a: Approach) -> &'static str {
        match a {
            Approach::Protocol => "protocol",
            Approach::Extended => "extended",
        }
    }

    pub fn records(&self, a: Approach) -> PathBuf {
        self.root.join("extraction").join(format!("{}.csv", Self::approach(a)))
    }

    pub fn outcomes(&self, a: Approach) -> PathBuf {
        self.root.join("extraction").join(format!("{}.outcomes.json", Self::approach(a)))
    }

    pub fn extract_log(&self, a: Approach) -> PathBuf {
        self.root.join("logs").join(format!("extract-{}.jsonl", Self::approach(a)))
    }

    pub fn evaluation(&self, a: Approach) -> PathBuf {
        self.root.join("evaluation").join(format!("{}.json", Self::approach(a)))
    }

    pub fn pending_adjudications(&self, a: Approach) -> PathBuf {
        self.root.join("evaluation").join(format!("{}.pending.csv", Self::approach(a)))
    }

    pub fn injected(&self) -> PathBuf {
        self.root.join("review").join("injected.csv")
    }

    pub fn injection_log(&self) -> PathBuf {
        self.root.join("review").join("injection.jsonl")
    }

    /// Review outcome of one batch; `phase` is "clean" or "injected".
    pub fn review_batch(&self, phase: &str, k: usize) -> PathBuf {
        self.root.join("review").join(format!("{phase}-batch{k}.json"))
    }

    pub fn review_log(&self) -> PathBuf {
        self.root.join("logs").join("review.jsonl")
    }

    pub fn value_add(&self) -> PathBuf {
        self.root.join("review").join("value_add.json")
    }

    pub fn pending_verdicts(&self) -> PathBuf {
        self.root.join("review").join("value_verdicts.pending.csv")
    }

    pub fn detection(&self) -> PathBuf {
        self.root.join("review").join("detection.json")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn remove_if_exists(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
            Err(e).with_context(|| format!("removing {}", path.display()))
        }
        _ => Ok(()),
    }
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    Corpus::load_manifest(&cfg.corpus).with_context(|| format!("loading corpus {}", cfg.corpus.display()))
}

/// A project document, or a short placeholder when none is configured.
pub fn document(path: Option<&Path>, name: &str) -> Result<Attachment> {
    match path {
        Some(p) => Attachment::from_path(name, p).with_context(|| format!("reading {}", p.display())),
        None => {
            tracing::warn!("no {name} configured; uploading a placeholder");
            Ok(Attachment::text(name, name))
        }
    }
}

/// Text of a document for foreign-content checks, when it is UTF-8.
pub fn document_text(path: Option<&Path>) -> Option<String> {
    path.and_then(|p| std::fs::read(p).ok()).and_then(|b| String::from_utf8(b).ok())
}

/// Gateway over the configured backend, logging to `log_path`. Replay runs
/// use a logical clock so transcripts are byte-stable.
pub fn open_gateway(cfg: &RunConfig, log_path: &Path) -> Result<Gateway> {
    cfg.validate_gateway()?;
    let g = &cfg.gateway;
    let (backend, clock): (Box<dyn protex_core::gateway::ChatBackend>, Clock) = match g.backend {
        Backend::Replay => {
            let fixture = g.fixture.as_deref().expect("validated");
            (Box::new(ReplayBackend::from_file(fixture)?), Clock::logical())
        }
        Backend::Live => (live_backend(cfg)?, Clock::System),
    };
    let log = RunLog::open(log_path, clock).with_context(|| format!("opening run log {}", log_path.display()))?;
    Ok(Gateway::new(backend, log).with_budget(g.budget).with_params(g.decoding.clone()))
}

#[cfg(feature = "live")]
fn live_backend(cfg: &RunConfig) -> Result<Box<dyn protex_core::gateway::ChatBackend>> {
    use protex_core::gateway::{HttpBackend, HttpConfig};
    let g = &cfg.gateway;
    let http = HttpConfig { endpoint: g.endpoint.clone(), api_key_env: g.api_key_env.clone(), timeout_secs: g.timeout_secs };
    Ok(Box::new(HttpBackend::new(&http)?))
}

#[cfg(not(feature = "live"))]
fn live_backend(_: &RunConfig) -> Result<Box<dyn protex_core::gateway::ChatBackend>> {
    anyhow::bail!("this build has no live backend; rebuild with the `live` feature")
}

/// "1st", "2nd", "3rd", "4th", ...
pub fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordinals() {
        let got: Vec<String> = [1, 2, 3, 4, 11, 12, 13, 21, 22, 101].into_iter().map(ordinal).collect();
        assert_eq!(got, ["1st", "2nd", "3rd", "4th", "11th", "12th", "13th", "21st", "22nd", "101st"]);
    }
}
