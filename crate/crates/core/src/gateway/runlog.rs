//! Append-only JSON-lines transcript of every conversation turn.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{DecodingParams, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub timestamp: String,
    pub conversation_id: String,
    pub role: Role,
    pub text: String,
    pub attachment_names: Vec<String>,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<DecodingParams>,
}

/// Source of timestamps. `Logical` ticks one second per entry from a fixed
/// origin, which keeps transcripts byte-stable across runs.
#[derive(Debug, Clone)]
pub enum Clock {
    System,
    Logical(DateTime<Utc>),
}

impl Clock {
    pub fn logical() -> Self {
        Clock::Logical(DateTime::<Utc>::UNIX_EPOCH)
    }
}

enum Sink {
    File { file: File, path: PathBuf },
    Memory(Vec<u8>),
    Discard,
}

struct Inner {
    sink: Sink,
    clock: Clock,
    lines: u64,
}

/// Single-writer transcript. Each entry is written and flushed before the
/// call that produced it returns.
pub struct RunLog {
    inner: Mutex<Inner>,
}

impl RunLog {
    pub fn open(path: &Path, clock: Clock) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let lines = match File::open(path) {
            Ok(f) => BufReader::new(f).lines().count() as u64,
            Err(_) => 0,
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::with_sink(Sink::File { file, path: path.to_path_buf() }, clock, lines))
    }

    pub fn memory(clock: Clock) -> Self {
        Self::with_sink(Sink::Memory(Vec::new()), clock, 0)
    }

    pub fn discard() -> Self {
        Self::with_sink(Sink::Discard, Clock::logical(), 0)
    }

    fn with_sink(sink: Sink, clock: Clock, lines: u64) -> Self {
        RunLog { inner: Mutex::new(Inner { sink, clock, lines }) }
    }

    /// Appends one entry, stamping it with the clock. Returns the 0-based
    /// line number of the entry.
    pub fn append(
        &self,
        conversation_id: &str,
        role: Role,
        text: &str,
        attachment_names: &[String],
        digest: &str,
        params: Option<&DecodingParams>,
    ) -> io::Result<u64> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let timestamp = match &mut inner.clock {
            Clock::System => Utc::now(),
            Clock::Logical(t) => {
                let now = *t;
                *t = now + Duration::seconds(1);
                now
            }
        };
        let entry = LogEntry {
            timestamp: timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
            conversation_id: conversation_id.to_string(),
            role,
            text: text.to_string(),
            attachment_names: attachment_names.to_vec(),
            digest: digest.to_string(),
            params: params.cloned(),
        };
        let mut line = serde_json::to_vec(&entry).map_err(io::Error::other)?;
        line.push(b'\n');
        match &mut inner.sink {
            Sink::File { file, .. } => {
                file.write_all(&line)?;
                file.flush()?;
            }
            Sink::Memory(buf) => buf.extend_from_slice(&line),
            Sink::Discard => {}
        }
        let n = inner.lines;
        inner.lines += 1;
        Ok(n)
    }

    pub fn path(&self) -> Option<PathBuf> {
        match &self.inner.lock().unwrap_or_else(|p| p.into_inner()).sink {
            Sink::File { path, .. } => Some(path.clone()),
            _ => None,
        }
    }

    /// Contents of an in-memory log; empty for other sinks.
    pub fn contents(&self) -> Vec<u8> {
        match &self.inner.lock().unwrap_or_else(|p| p.into_inner()).sink {
            Sink::Memory(buf) => buf.clone(),
            _ => Vec::new(),
        }
    }
}

/// Parses a JSON-lines transcript.
pub fn read_log(text: &str) -> Result<Vec<LogEntry>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
