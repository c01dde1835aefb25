//! Whether review feedback caught each injected error, and the resulting
//! per-source grid.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::feedback::{mentions, FeedbackKind, ReviewFeedback};
use super::inject::{ErrorKind, ErrorKindTag, InjectedError};
use super::ReviewError;
use crate::corpus::{DataItem, SourceId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub error_id: String,
    pub detected: bool,
    /// Feedback item that caught the error.
    pub feedback_ref: Option<String>,
    /// Feedback that spoke about the affected cell without flagging it.
    pub verbatim_note: Option<String>,
}

/// A human call on one error, read from a CSV in the adjudication layout:
/// `excerpt_index` holds the numeric part of the error id and
/// `override_label` is `detected` or `undetected`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionOverride {
    pub error_id: String,
    pub detected: bool,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DetectionOverrides {
    rows: BTreeMap<String, DetectionOverride>,
}

#[derive(Deserialize)]
struct RawOverride {
    #[allow(dead_code)]
    source_id: String,
    excerpt_index: String,
    override_label: String,
    #[serde(default)]
    note: String,
}

impl DetectionOverrides {
    pub fn new(rows: impl IntoIterator<Item = DetectionOverride>) -> Self {
        DetectionOverrides { rows: rows.into_iter().map(|r| (r.error_id.clone(), r)).collect() }
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, ReviewError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for raw in rdr.deserialize::<RawOverride>() {
            let raw = raw.map_err(|e| ReviewError::Verdicts(e.to_string()))?;
            let n: usize = raw.excerpt_index.parse().map_err(|e| ReviewError::Verdicts(format!("excerpt_index: {e}")))?;
            let detected = match raw.override_label.to_ascii_lowercase().as_str() {
                "detected" => true,
                "undetected" => false,
                other => return Err(ReviewError::Verdicts(format!("unknown detection label {other:?}"))),
            };
            rows.push(DetectionOverride { error_id: format!("E{n:03}"), detected, note: raw.note });
        }
        Ok(Self::new(rows))
    }
}

/// Items an error touched.
fn affected_items(e: &InjectedError) -> Vec<DataItem> {
    match &e.kind {
        ErrorKind::PublicationYear => vec![DataItem::PublicationYear],
        ErrorKind::ObjectiveType => vec![DataItem::ObjectiveType],
        ErrorKind::DataItemSwap { item_a, item_b } => vec![*item_a, *item_b],
        ErrorKind::SourceRowSwap { .. } => DataItem::KEY_FINDINGS.to_vec(),
        ErrorKind::RandomTextInsertion { item } => vec![*item],
    }
}

/// The injected text a reviewer could quote back.
fn injected_text(e: &InjectedError) -> Option<String> {
    match &e.kind {
        ErrorKind::PublicationYear | ErrorKind::ObjectiveType => Some(e.injected_value.clone()),
        ErrorKind::RandomTextInsertion { .. } => {
            e.changes.first().and_then(|c| c.injected.excerpts().last()).map(|x| x.text.clone())
        }
        _ => None,
    }
}

fn about(f: &ReviewFeedback, e: &InjectedError) -> bool {
    let source_ok = f.source_id.as_ref() == Some(&e.source_id)
        || matches!(&e.kind, ErrorKind::SourceRowSwap { other_source_id } if f.source_id.as_ref() == Some(other_source_id));
    if !source_ok {
        return false;
    }
    let item_ok = f.item.is_some_and(|i| affected_items(e).contains(&i));
    let value_ok = injected_text(e).is_some_and(|v| mentions(f, &v));
    item_ok || value_ok
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub detected: usize,
    pub total: usize,
}

impl Tally {
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.detected as f64 / self.total as f64)
    }
}

impl std::fmt::Display for Tally {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {}", self.detected, self.total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "snake_case")]
pub enum GridCell {
    NotApplicable,
    Detected,
    Undetected,
    Tally(Tally),
}

impl std::fmt::Display for GridCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridCell::NotApplicable => f.write_str("N/A"),
            GridCell::Detected => f.write_str("Detected"),
            GridCell::Undetected => f.write_str("Undetected"),
            GridCell::Tally(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub label: String,
    pub cells: Vec<GridCell>,
}

/// Rows are sources, then one row per batch, then "All".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionGrid {
    pub columns: Vec<ErrorKindTag>,
    pub source_rows: Vec<GridRow>,
    pub batch_rows: Vec<GridRow>,
    pub all: GridRow,
    pub overall: Tally,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub outcomes: Vec<DetectionOutcome>,
    pub grid: DetectionGrid,
}

/// Scores every applicable error. An error counts as detected when a
/// correction for its source (or its swap partner) names an affected item
/// or quotes the injected value. Overrides replace the automatic call.
pub fn score_detection(
    feedback: &[ReviewFeedback],
    log: &[InjectedError],
    overrides: &DetectionOverrides,
    batches: &[(String, Vec<SourceId>)],
) -> DetectionReport {
    let mut outcomes = Vec::new();
    let mut detected_by_id: BTreeMap<&str, bool> = BTreeMap::new();
    for e in log.iter().filter(|e| e.applicable) {
        let related: Vec<&ReviewFeedback> = feedback.iter().filter(|f| about(f, e)).collect();
        let hit = related.iter().find(|f| f.kind == FeedbackKind::Correction);
        let mut outcome = DetectionOutcome {
            error_id: e.error_id.clone(),
            detected: hit.is_some(),
            feedback_ref: hit.map(|f| f.id.clone()),
            verbatim_note: related
                .iter()
                .find(|f| f.kind == FeedbackKind::ConfirmsCorrect)
                .or(hit)
                .map(|f| f.text.clone()),
        };
        if let Some(o) = overrides.rows.get(&e.error_id) {
            outcome.detected = o.detected;
            if !o.note.is_empty() {
                outcome.verbatim_note = Some(o.note.clone());
            }
            if o.detected && outcome.feedback_ref.is_none() {
                outcome.feedback_ref = Some(format!("override:{}", e.error_id));
            }
        }
        detected_by_id.insert(&e.error_id, outcome.detected);
        outcomes.push(outcome);
    }

    let columns = ErrorKindTag::ALL.to_vec();
    let tally_for = |source: &SourceId, tag: ErrorKindTag| -> Option<Tally> {
        let errs: Vec<&InjectedError> =
            log.iter().filter(|e| &e.source_id == source && e.kind.tag() == tag && e.applicable).collect();
        (!errs.is_empty()).then(|| Tally {
            detected: errs.iter().filter(|e| detected_by_id[e.error_id.as_str()]).count(),
            total: errs.len(),
        })
    };

    let mut source_rows = Vec::new();
    let mut batch_rows = Vec::new();
    let mut all = vec![Tally::default(); columns.len()];
    for (label, sources) in batches {
        let mut batch = vec![Tally::default(); columns.len()];
        for s in sources {
            let cells = columns
                .iter()
                .enumerate()
                .map(|(k, tag)| match tally_for(s, *tag) {
                    None => GridCell::NotApplicable,
                    Some(t) => {
                        batch[k].detected += t.detected;
                        batch[k].total += t.total;
                        match (t.total, t.detected) {
                            (1, 1) => GridCell::Detected,
                            (1, _) => GridCell::Undetected,
                            _ => GridCell::Tally(t),
                        }
                    }
                })
                .collect();
            source_rows.push(GridRow { label: s.to_string(), cells });
        }
        for (k, t) in batch.iter().enumerate() {
            all[k].detected += t.detected;
            all[k].total += t.total;
        }
        batch_rows.push(GridRow { label: label.clone(), cells: batch.into_iter().map(GridCell::Tally).collect() });
    }
    let overall = Tally { detected: all.iter().map(|t| t.detected).sum(), total: all.iter().map(|t| t.total).sum() };
    let grid = DetectionGrid {
        columns,
        source_rows,
        batch_rows,
        all: GridRow { label: "All".into(), cells: all.into_iter().map(GridCell::Tally).collect() },
        overall,
    };
    DetectionReport { outcomes, grid }
}
