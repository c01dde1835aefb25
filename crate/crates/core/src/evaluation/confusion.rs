use std::collections::{BTreeMap, BTreeSet};
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::adjudication::{apply_adjudications, AdjudicationSet};
use super::matcher::MatchConfig;
use super::text::normalize_with;
use super::{EvaluationError, ExcerptJudgment, Label};
use crate::corpus::{DataItem, ExtractionRecord, ItemClass, ItemValue, Sentinel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, o: Self) -> Self {
        ConfusionCounts { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

pub type ItemCounts = BTreeMap<DataItem, ConfusionCounts>;

/// Element-wise sum of per-source maps.
pub fn sum_counts<'a>(maps: impl IntoIterator<Item = &'a ItemCounts>) -> ItemCounts {
    let mut out = ItemCounts::new();
    for m in maps {
        for (item, c) in m {
            *out.entry(*item).or_default() += *c;
        }
    }
    out
}

/// Citation scalars agree when their normalized tokens are equal, or when
/// the shorter is a leading run covering at least the citation threshold of
/// it (truncation).
pub fn citation_equivalent(llm: &str, baseline: &str, cfg: &MatchConfig) -> bool {
    let a = normalize_with(llm, cfg.normalization);
    let b = normalize_with(baseline, cfg.normalization);
    if a.is_empty() || b.is_empty() {
        return false;
    }
    if a == b {
        return true;
    }
    let shorter = a.len().min(b.len());
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    prefix as f64 / shorter as f64 >= cfg.citation_threshold
}

fn scalar(v: Option<&ItemValue>) -> &str {
    v.and_then(ItemValue::scalar).map(str::trim).unwrap_or("")
}

/// Per-item confusion counts for one source. Adjudications are applied
/// first; every auto-irrelevant excerpt must have been adjudicated.
pub fn attribute_confusion(
    judgments: &[ExcerptJudgment],
    llm: &ExtractionRecord,
    baseline: &ExtractionRecord,
    adjudications: &AdjudicationSet,
    cfg: &MatchConfig,
) -> Result<ItemCounts, EvaluationError> {
    if llm.source_id != baseline.source_id {
        return Err(EvaluationError::SourceMismatch { llm: llm.source_id.clone(), baseline: baseline.source_id.clone() });
    }
    let judgments = apply_adjudications(judgments, adjudications)?;
    let mut out = ItemCounts::new();
    for item in DataItem::CITATION.into_iter().chain(DataItem::KEY_FINDINGS) {
        let Some(base) = baseline.get(item) else { continue };
        let counts = match item.class() {
            ItemClass::Citation => {
                let (b, l) = (scalar(Some(base)), scalar(llm.get(item)));
                match (b.is_empty(), l.is_empty()) {
                    (true, true) => ConfusionCounts::new(0, 1, 0, 0),
                    (true, false) => ConfusionCounts::new(0, 0, 1, 0),
                    (false, _) if citation_equivalent(l, b, cfg) => ConfusionCounts::new(1, 0, 0, 0),
                    (false, _) => ConfusionCounts::new(0, 0, 0, 1),
                }
            }
            _ => key_findings_counts(item, base, llm.get(item), &judgments),
        };
        out.insert(item, counts);
    }
    Ok(out)
}

fn key_findings_counts(
    item: DataItem,
    base: &ItemValue,
    llm: Option<&ItemValue>,
    judgments: &[ExcerptJudgment],
) -> ConfusionCounts {
    // Several LLM excerpts matching one baseline excerpt count once.
    let matched: BTreeSet<usize> = judgments
        .iter()
        .filter(|j| j.label == Label::Relevant)
        .flat_map(|j| j.match_refs.iter())
        .filter(|r| r.item == item)
        .map(|r| r.index)
        .collect();
    let n_base = base.excerpts().len() as u64;
    let tp = matched.len() as u64;
    let fp = judgments.iter().filter(|j| j.excerpt_ref.item == item && j.label == Label::Irrelevant).count() as u64;
    let llm_empty = llm.is_none_or(ItemValue::is_empty);
    let tn = u64::from(base.sentinel() == Some(Sentinel::Unstated) && llm_empty);
    ConfusionCounts { tp, tn, fp, fn_: n_base - tp }
}
