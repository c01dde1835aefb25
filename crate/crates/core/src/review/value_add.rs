//! Counts of reviewer proposals and how many a human judged worth keeping.

use std::collections::BTreeMap;
use std::io::Read;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::feedback::{FeedbackKind, ReviewFeedback};
use super::ReviewError;
use crate::corpus::SourceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueVerdict {
    AddsValue,
    NoValue,
    /// Drawn from a document other than the source under review.
    Ineligible,
}

/// Verdicts keyed by feedback id, read from a CSV with columns
/// `feedback_id, verdict, note`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueVerdicts {
    rows: BTreeMap<String, ValueVerdict>,
}

#[derive(Deserialize)]
struct RawVerdict {
    feedback_id: String,
    verdict: String,
}

impl ValueVerdicts {
    pub fn new(rows: impl IntoIterator<Item = (String, ValueVerdict)>) -> Self {
        ValueVerdicts { rows: rows.into_iter().collect() }
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, ReviewError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
        let mut rows = BTreeMap::new();
        for raw in rdr.deserialize::<RawVerdict>() {
            let raw = raw.map_err(|e| ReviewError::Verdicts(e.to_string()))?;
            let v = match raw.verdict.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
                "adds-value" | "yes" | "value" => ValueVerdict::AddsValue,
                "no-value" | "no" => ValueVerdict::NoValue,
                "ineligible" => ValueVerdict::Ineligible,
                other => return Err(ReviewError::Verdicts(format!("unknown verdict {other:?}"))),
            };
            if rows.insert(raw.feedback_id.clone(), v).is_some() {
                return Err(ReviewError::Verdicts(format!("duplicate verdict for {}", raw.feedback_id)));
            }
        }
        Ok(ValueVerdicts { rows })
    }

    pub fn get(&self, id: &str) -> Option<ValueVerdict> {
        self.rows.get(id).copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueAddCounts {
    pub citation_corrections: u64,
    pub citation_value_add: u64,
    pub additional_excerpts: u64,
    pub excerpt_value_add: u64,
    /// Proposals judged ineligible.
    pub ineligible: u64,
}

impl Add for ValueAddCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ValueAddCounts {
            citation_corrections: self.citation_corrections + o.citation_corrections,
            citation_value_add: self.citation_value_add + o.citation_value_add,
            additional_excerpts: self.additional_excerpts + o.additional_excerpts,
            excerpt_value_add: self.excerpt_value_add + o.excerpt_value_add,
            ineligible: self.ineligible + o.ineligible,
        }
    }
}

impl ValueAddCounts {
    pub fn citation_share(&self) -> Option<f64> {
        (self.citation_corrections > 0).then(|| self.citation_value_add as f64 / self.citation_corrections as f64)
    }

    pub fn excerpt_share(&self) -> Option<f64> {
        (self.additional_excerpts > 0).then(|| self.excerpt_value_add as f64 / self.additional_excerpts as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueAddRow {
    pub label: String,
    pub counts: ValueAddCounts,
    /// Sources covered by the row.
    pub sources: usize,
    /// Sources with at least one ineligible proposal.
    pub ineligible_sources: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueAddTable {
    pub source_rows: Vec<ValueAddRow>,
    pub batch_rows: Vec<ValueAddRow>,
    pub all: ValueAddRow,
}

/// Tallies corrections and additional excerpts per source, per batch and
/// overall. Citation-detail items go to the citation columns; every other
/// proposal counts as an excerpt proposal.
pub fn tabulate_value_add(
    feedback: &[ReviewFeedback],
    verdicts: &ValueVerdicts,
    batches: &[(String, Vec<SourceId>)],
) -> Result<ValueAddTable, ReviewError> {
    let proposals: Vec<&ReviewFeedback> = feedback
        .iter()
        .filter(|f| matches!(f.kind, FeedbackKind::Correction | FeedbackKind::AdditionalExcerpt) && f.source_id.is_some())
        .collect();
    let missing: Vec<String> = proposals.iter().filter(|f| verdicts.get(&f.id).is_none()).map(|f| f.id.clone()).collect();
    if !missing.is_empty() {
        return Err(ReviewError::MissingAdjudication(missing));
    }

    let counts_for = |source: &SourceId| -> ValueAddCounts {
        let mut c = ValueAddCounts::default();
        for f in proposals.iter().filter(|f| f.source_id.as_ref() == Some(source)) {
            let verdict = verdicts.get(&f.id).expect("checked above");
            let ineligible = f.is_ineligible || verdict == ValueVerdict::Ineligible;
            let adds = verdict == ValueVerdict::AddsValue && !ineligible;
            if f.item.is_some_and(|i| i.is_citation_detail()) {
                c.citation_corrections += 1;
                c.citation_value_add += adds as u64;
            } else {
                c.additional_excerpts += 1;
                c.excerpt_value_add += adds as u64;
            }
            c.ineligible += ineligible as u64;
        }
        c
    };

    let mut source_rows = Vec::new();
    let mut batch_rows = Vec::new();
    for (label, sources) in batches {
        let rows: Vec<ValueAddRow> = sources
            .iter()
            .map(|s| {
                let counts = counts_for(s);
                ValueAddRow { label: s.to_string(), counts, sources: 1, ineligible_sources: (counts.ineligible > 0) as usize }
            })
            .collect();
        batch_rows.push(sum_rows(label, &rows));
        source_rows.extend(rows);
    }
    let all = sum_rows("All", &batch_rows);
    Ok(ValueAddTable { source_rows, batch_rows, all })
}

fn sum_rows(label: &str, rows: &[ValueAddRow]) -> ValueAddRow {
    ValueAddRow {
        label: label.to_string(),
        counts: rows.iter().fold(ValueAddCounts::default(), |a, r| a + r.counts),
        sources: rows.iter().map(|r| r.sources).sum(),
        ineligible_sources: rows.iter().map(|r| r.ineligible_sources).sum(),
    }
}
