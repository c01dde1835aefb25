use serde::{Deserialize, Serialize};

use super::text::{longest_common_run, normalize_with, NormalizeOptions};
use super::{AdjudicationSource, EvaluationError, ExcerptJudgment, ExcerptRef, Label};
use crate::corpus::{DataItem, ExtractionRecord, SourceId};
use crate::parser::{DocumentIndex, ForeignContentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Minimum containment for two excerpts to overlap.
    pub containment_threshold: f64,
    /// Minimum shared run in tokens, capped at the shorter excerpt's length.
    pub min_token_overlap: usize,
    /// Share of the shorter citation scalar that must agree as a prefix.
    pub citation_threshold: f64,
    pub normalization: NormalizeOptions,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            containment_threshold: 0.6,
            min_token_overlap: 5,
            citation_threshold: 0.8,
            normalization: NormalizeOptions::default(),
        }
    }
}

struct Candidate {
    r: ExcerptRef,
    containment: f64,
}

/// Containment of `a` and `b` when it clears both the ratio and the run
/// length floors.
fn overlap(a: &[String], b: &[String], cfg: &MatchConfig) -> Option<f64> {
    let shorter = a.len().min(b.len());
    if shorter == 0 {
        return None;
    }
    let run = longest_common_run(a, b);
    let c = run as f64 / shorter as f64;
    (c >= cfg.containment_threshold && run >= cfg.min_token_overlap.min(shorter)).then_some(c)
}

/// Labels every key-findings excerpt of `llm` against `baseline`. An
/// overlap within the same item wins; otherwise the best overlap in another
/// item marks the excerpt misclassified. Excerpts with no overlap are
/// auto-labelled irrelevant and queued for adjudication.
pub fn match_excerpts(
    llm: &ExtractionRecord,
    baseline: &ExtractionRecord,
    cfg: &MatchConfig,
) -> Result<Vec<ExcerptJudgment>, EvaluationError> {
    if llm.source_id != baseline.source_id {
        return Err(EvaluationError::SourceMismatch { llm: llm.source_id.clone(), baseline: baseline.source_id.clone() });
    }
    let base: Vec<(DataItem, Vec<Vec<String>>)> = DataItem::KEY_FINDINGS
        .iter()
        .map(|i| (*i, baseline.excerpts(*i).iter().map(|e| normalize_with(&e.text, cfg.normalization)).collect()))
        .collect();

    let mut out = Vec::new();
    for item in DataItem::KEY_FINDINGS {
        for e in llm.excerpts(item) {
            let toks = normalize_with(&e.text, cfg.normalization);
            let candidates = |target: DataItem| -> Vec<Candidate> {
                let (_, list) = base.iter().find(|(i, _)| *i == target).expect("all key-findings items indexed");
                let mut c: Vec<Candidate> = list
                    .iter()
                    .enumerate()
                    .filter_map(|(index, b)| {
                        overlap(&toks, b, cfg).map(|containment| Candidate { r: ExcerptRef { item: target, index }, containment })
                    })
                    .collect();
                // stable: equal containment keeps the earlier excerpt first
                c.sort_by(|x, y| y.containment.total_cmp(&x.containment));
                c
            };

            let same = candidates(item);
            let (label, chosen) = if !same.is_empty() {
                (Label::Relevant, same)
            } else {
                let mut best: Option<Vec<Candidate>> = None;
                for other in DataItem::KEY_FINDINGS.into_iter().filter(|i| *i != item) {
                    let c = candidates(other);
                    let better = match (&best, c.first()) {
                        (_, None) => false,
                        (None, Some(_)) => true,
                        (Some(b), Some(top)) => top.containment > b[0].containment,
                    };
                    if better {
                        best = Some(c);
                    }
                }
                match best {
                    Some(c) => (Label::Misclassified { correct_item: c[0].r.item }, c),
                    None => (Label::Irrelevant, Vec::new()),
                }
            };
            out.push(ExcerptJudgment {
                source_id: llm.source_id.clone(),
                provenance: llm.provenance,
                excerpt_ref: ExcerptRef { item, index: e.order_index },
                label,
                is_new: false,
                is_ineligible: false,
                containment: chosen.first().map_or(0.0, |c| c.containment),
                match_refs: chosen.into_iter().map(|c| c.r).collect(),
                adjudication_source: AdjudicationSource::Auto,
                note: None,
            });
        }
    }
    Ok(out)
}

/// Marks judgments whose excerpt text belongs to a document other than
/// `target` as ineligible.
pub fn flag_ineligible(
    judgments: &mut [ExcerptJudgment],
    llm: &ExtractionRecord,
    index: &mut DocumentIndex,
    target: &SourceId,
    cfg: &ForeignContentConfig,
) {
    for j in judgments {
        let Some(e) = llm.excerpts(j.excerpt_ref.item).get(j.excerpt_ref.index) else { continue };
        if index.foreign_match(&e.text, target, cfg).is_some() {
            j.is_ineligible = true;
        }
    }
}
