//! Excerpt classification against the human baseline, confusion-count
//! attribution and performance metrics.

mod adjudication;
mod confusion;
mod matcher;
mod metrics;
mod summary;
pub mod text;

use serde::{Deserialize, Serialize};

use crate::corpus::{DataItem, Provenance, SourceId};

pub use adjudication::{
    apply_adjudications, pending_rows, Adjudication, AdjudicationKey, AdjudicationSet, OverrideLabel, ADJUDICATION_COLUMNS,
};
pub use confusion::{attribute_confusion, citation_equivalent, sum_counts, ConfusionCounts, ItemCounts};
pub use matcher::{flag_ineligible, match_excerpts, MatchConfig};
pub use metrics::{aggregate, format_pct, metrics, round_pct, Aggregate, Averaging, MetricSet, UndefinedCounts};
pub use summary::{classification_summary, ClassificationCounts, ClassificationSummary, Shares, SourceClassification};
pub use text::{containment, normalize, normalize_with, normalized_text, NormalizeOptions};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvaluationError {
    #[error("records belong to different sources ({llm} vs {baseline})")]
    SourceMismatch { llm: SourceId, baseline: SourceId },
    #[error("{} excerpt(s) await adjudication: {}", .0.len(), list_keys(.0))]
    MissingAdjudication(Vec<AdjudicationKey>),
    #[error("metric subset is empty")]
    EmptySubset,
    #[error("adjudication file: {0}")]
    Adjudication(String),
}

fn list_keys(keys: &[AdjudicationKey]) -> String {
    keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Position of an excerpt within a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExcerptRef {
    pub item: DataItem,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum Label {
    Relevant,
    Misclassified { correct_item: DataItem },
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjudicationSource {
    Auto,
    HumanOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcerptJudgment {
    pub source_id: SourceId,
    pub provenance: Provenance,
    pub excerpt_ref: ExcerptRef,
    pub label: Label,
    pub is_new: bool,
    pub is_ineligible: bool,
    /// Baseline excerpts matched, best first. Empty for irrelevant excerpts.
    pub match_refs: Vec<ExcerptRef>,
    /// Containment of the best match; 0 when unmatched.
    pub containment: f64,
    pub adjudication_source: AdjudicationSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ExcerptJudgment {
    pub fn key(&self) -> AdjudicationKey {
        AdjudicationKey {
            source_id: self.source_id.clone(),
            provenance: self.provenance,
            item: self.excerpt_ref.item,
            excerpt_index: self.excerpt_ref.index,
        }
    }

    /// Auto-labelled irrelevant excerpts wait for a human decision.
    pub fn needs_adjudication(&self) -> bool {
        self.adjudication_source == AdjudicationSource::Auto && self.label == Label::Irrelevant
    }
}
