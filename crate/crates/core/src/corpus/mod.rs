//! Domain types for evidence sources, instruments and extraction records,
//! their CSV persistence, and corpus sampling.

mod csv_io;
mod item;
mod record;
mod sample;
mod source;

use std::io;
use std::path::Path;

pub use csv_io::{
    load_baseline_csv, load_records_csv, read_records, records_to_csv_bytes, write_baseline_csv, write_records,
    SOURCE_FILENAME_COLUMN,
};
pub use item::{DataItem, Instrument, ItemClass, UnknownItem};
pub use record::{
    excerpts, has_bullet, strip_bullet, Excerpt, ExtractionRecord, ItemValue, Provenance, Sentinel, AGGREGATED,
    UNSTATED,
};
pub use sample::{sample_corpus, sample_size};
pub use source::{sort_by_author, Attachment, Corpus, EvidenceSource, SourceId};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("source filename {0:?} is not in the corpus")]
    UnknownSourceFilename(String),
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("sampling fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("duplicate source id {0}")]
    DuplicateSource(SourceId),
    #[error("invalid source {filename}: {reason}")]
    InvalidSource { filename: String, reason: String },
    #[error("invalid record for {source_id}: {reason}")]
    InvalidRecord { source_id: SourceId, reason: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    IoFailure(#[from] io::Error),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io { path: path.display().to_string(), source }
    }
}
