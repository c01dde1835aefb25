//! The LLM second-reviewer workflow: batched review conversations, feedback
//! parsing, deliberate error injection and the scoring of what the reviewer
//! caught or added.

mod detect;
mod feedback;
mod inject;
mod value_add;

use serde::{Deserialize, Serialize};

use crate::corpus::{records_to_csv_bytes, Attachment, CorpusError, EvidenceSource, ExtractionRecord, Instrument};
use crate::gateway::{Gateway, GatewayError};
use crate::parser::{DocumentIndex, ForeignContentConfig, FormatViolation};
use crate::prompts::{build_review_prompt, DocumentPackage, PromptError};

pub use detect::{
    score_detection, DetectionGrid, DetectionOutcome, DetectionOverride, DetectionOverrides, DetectionReport, GridCell,
    GridRow, Tally,
};
pub use feedback::{flag_ineligible_feedback, parse_feedback, FeedbackKind, ReviewFeedback};
pub use inject::{
    random_sentence_pool, read_injection_log, revert_errors, write_injection_log, CellChange, ErrorKind, ErrorKindTag,
    InjectedError, InjectionPlan, PlanEntry, DEFAULT_OBJECTIVE_TYPE,
};
pub use value_add::{
    tabulate_value_add, ValueAddCounts, ValueAddRow, ValueAddTable, ValueVerdict, ValueVerdicts,
};
pub use inject::inject_errors;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("source {0:?} has no row in the extraction CSV")]
    MissingRow(String),
    #[error("injection plan cannot be satisfied: {0}")]
    UnsatisfiablePlan(String),
    #[error("{} proposal(s) have no value-add verdict: {}", .0.len(), .0.join(", "))]
    MissingAdjudication(Vec<String>),
    #[error("verdict file: {0}")]
    Verdicts(String),
    #[error("injection log: {0}")]
    Log(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Order-preserving batches; the last may be short.
pub fn batch_sources(sources: &[EvidenceSource], batch_size: usize) -> Result<Vec<Vec<EvidenceSource>>, ReviewError> {
    if batch_size == 0 {
        return Err(ReviewError::InvalidBatchSize);
    }
    Ok(sources.chunks(batch_size).map(<[EvidenceSource]>::to_vec).collect())
}

/// Documents shared by every review batch.
#[derive(Debug, Clone)]
pub struct ReviewDocuments {
    pub protocol: Attachment,
    pub review_instrument: Attachment,
    /// Logical name of the uploaded extraction CSV, quoted in the prompt.
    pub spreadsheet_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub conversation_id: String,
    pub batch_no: u8,
    pub response: String,
    pub feedback: Vec<ReviewFeedback>,
    pub violations: Vec<FormatViolation>,
}

/// Runs one batch in a fresh conversation: uploads the protocol, the review
/// instrument, the batch's rows as CSV and the batch's sources, then parses
/// the reply into per-source feedback.
#[allow(clippy::too_many_arguments)]
pub fn run_review(
    gateway: &Gateway,
    batch: &[EvidenceSource],
    records: &[ExtractionRecord],
    instrument: &Instrument,
    documents: &ReviewDocuments,
    batch_no: u8,
    index: &mut DocumentIndex,
    foreign: &ForeignContentConfig,
) -> Result<ReviewOutcome, ReviewError> {
    let rows: Vec<ExtractionRecord> = batch
        .iter()
        .map(|s| {
            records
                .iter()
                .find(|r| r.source_id == s.source_id)
                .cloned()
                .ok_or_else(|| ReviewError::MissingRow(s.filename.clone()))
        })
        .collect::<Result<_, _>>()?;
    let csv = records_to_csv_bytes(&rows, instrument, None)?;
    let sheet = Attachment::new(documents.spreadsheet_name.clone(), "text/csv", csv);
    let package = DocumentPackage::review_batch(
        documents.protocol.clone(),
        documents.review_instrument.clone(),
        sheet,
        batch.iter().map(EvidenceSource::upload).collect(),
    )?;
    let prompt = build_review_prompt(batch_no, &documents.spreadsheet_name)?;

    let mut conv = gateway.conversation_with_package(package);
    let response = gateway.send(&mut conv, &prompt.text, Vec::new())?;
    let (mut feedback, violations) = parse_feedback(&response.text, batch, instrument, &conv.id);
    for f in feedback.iter_mut() {
        f.batch_no = Some(batch_no);
    }
    flag_ineligible_feedback(&mut feedback, index, foreign);
    Ok(ReviewOutcome { conversation_id: conv.id, batch_no, response: response.text, feedback, violations })
}
