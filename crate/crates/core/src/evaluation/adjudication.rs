//! Human decisions on auto-labelled excerpts, as a CSV with columns
//! `source_id, provenance, item, excerpt_index, override_label,
//! correct_item, is_new, note`. An empty `override_label` confirms the auto
//! label.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AdjudicationSource, EvaluationError, ExcerptJudgment, Label};
use crate::corpus::{DataItem, Provenance, SourceId};

pub const ADJUDICATION_COLUMNS: [&str; 8] =
    ["source_id", "provenance", "item", "excerpt_index", "override_label", "correct_item", "is_new", "note"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdjudicationKey {
    pub source_id: SourceId,
    pub provenance: Provenance,
    pub item: DataItem,
    pub excerpt_index: usize,
}

impl fmt::Display for AdjudicationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}#{}", self.source_id, self.provenance, self.item, self.excerpt_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverrideLabel {
    Relevant,
    Misclassified,
    Irrelevant,
    /// Irrelevant and drawn from another document.
    Ineligible,
}

impl FromStr for OverrideLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relevant" => Ok(OverrideLabel::Relevant),
            "misclassified" => Ok(OverrideLabel::Misclassified),
            "irrelevant" => Ok(OverrideLabel::Irrelevant),
            "ineligible" => Ok(OverrideLabel::Ineligible),
            other => Err(format!("unknown override label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub key: AdjudicationKey,
    pub override_label: Option<OverrideLabel>,
    pub correct_item: Option<DataItem>,
    pub is_new: bool,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdjudicationSet {
    rows: BTreeMap<AdjudicationKey, Adjudication>,
}

#[derive(Deserialize)]
struct RawRow {
    source_id: String,
    provenance: String,
    item: String,
    excerpt_index: String,
    #[serde(default)]
    override_label: String,
    #[serde(default)]
    correct_item: String,
    #[serde(default)]
    is_new: String,
    #[serde(default)]
    note: String,
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "false" | "no" | "n" | "0" => Ok(false),
        "true" | "yes" | "y" | "1" => Ok(true),
        other => Err(format!("is_new {other:?} is not a boolean")),
    }
}

impl AdjudicationSet {
    pub fn new(rows: impl IntoIterator<Item = Adjudication>) -> Result<Self, EvaluationError> {
        let mut map = BTreeMap::new();
        for row in rows {
            if row.override_label == Some(OverrideLabel::Misclassified) && row.correct_item.is_none() {
                return Err(EvaluationError::Adjudication(format!("{}: misclassified needs correct_item", row.key)));
            }
            if let Some(prev) = map.insert(row.key.clone(), row) {
                return Err(EvaluationError::Adjudication(format!("duplicate row for {}", prev.key)));
            }
        }
        Ok(AdjudicationSet { rows: map })
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, EvaluationError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (n, raw) in rdr.deserialize::<RawRow>().enumerate() {
            let line = n + 2;
            let err = |m: String| EvaluationError::Adjudication(format!("line {line}: {m}"));
            let raw = raw.map_err(|e| err(e.to_string()))?;
            let item: DataItem = raw.item.parse().map_err(|e: crate::corpus::UnknownItem| err(e.to_string()))?;
            let correct_item = match raw.correct_item.as_str() {
                "" => None,
                s => Some(s.parse().map_err(|e: crate::corpus::UnknownItem| err(e.to_string()))?),
            };
            rows.push(Adjudication {
                key: AdjudicationKey {
                    source_id: SourceId::new(raw.source_id),
                    provenance: raw.provenance.parse().map_err(err)?,
                    item,
                    excerpt_index: raw.excerpt_index.parse().map_err(|e| err(format!("excerpt_index: {e}")))?,
                },
                override_label: match raw.override_label.as_str() {
                    "" => None,
                    s => Some(s.parse().map_err(err)?),
                },
                correct_item,
                is_new: parse_bool(&raw.is_new).map_err(err)?,
                note: raw.note,
            });
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self, EvaluationError> {
        let file = std::fs::File::open(path)
            .map_err(|e| EvaluationError::Adjudication(format!("{}: {e}", path.display())))?;
        Self::read(file)
    }

    pub fn get(&self, key: &AdjudicationKey) -> Option<&Adjudication> {
        self.rows.get(key)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &Adjudication> {
        self.rows.values()
    }

    /// Writes rows in key order.
    pub fn write<W: Write>(rows: &[Adjudication], writer: W) -> Result<(), EvaluationError> {
        let io = |e: csv::Error| EvaluationError::Adjudication(e.to_string());
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(ADJUDICATION_COLUMNS).map_err(io)?;
        let mut sorted: Vec<&Adjudication> = rows.iter().collect();
        sorted.sort_by(|a, b| a.key.cmp(&b.key));
        for r in sorted {
            let label = match r.override_label {
                None => "",
                Some(OverrideLabel::Relevant) => "relevant",
                Some(OverrideLabel::Misclassified) => "misclassified",
                Some(OverrideLabel::Irrelevant) => "irrelevant",
                Some(OverrideLabel::Ineligible) => "ineligible",
            };
            w.write_record([
                r.key.source_id.as_str(),
                r.key.provenance.as_str(),
                r.key.item.column_name(),
                &r.key.excerpt_index.to_string(),
                label,
                r.correct_item.map_or("", DataItem::column_name),
                if r.is_new { "true" } else { "false" },
                &r.note,
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| EvaluationError::Adjudication(e.to_string()))
    }
}

/// Applies overrides and confirms. Fails listing every auto-irrelevant
/// judgment that has no row.
pub fn apply_adjudications(
    judgments: &[ExcerptJudgment],
    set: &AdjudicationSet,
) -> Result<Vec<ExcerptJudgment>, EvaluationError> {
    let missing: Vec<AdjudicationKey> =
        judgments.iter().filter(|j| j.needs_adjudication() && set.get(&j.key()).is_none()).map(|j| j.key()).collect();
    if !missing.is_empty() {
        return Err(EvaluationError::MissingAdjudication(missing));
    }
    let mut out = judgments.to_vec();
    for j in &mut out {
        let Some(row) = set.get(&j.key()) else { continue };
        match row.override_label {
            None => {}
            Some(OverrideLabel::Relevant) => j.label = Label::Relevant,
            Some(OverrideLabel::Misclassified) => {
                j.label = Label::Misclassified { correct_item: row.correct_item.expect("checked on load") };
                j.match_refs.retain(|r| Some(r.item) == row.correct_item);
            }
            Some(OverrideLabel::Irrelevant) | Some(OverrideLabel::Ineligible) => {
                j.label = Label::Irrelevant;
                j.match_refs.clear();
            }
        }
        if row.override_label == Some(OverrideLabel::Ineligible) {
            j.is_ineligible = true;
        }
        j.is_new = row.is_new && j.label != Label::Irrelevant;
        j.adjudication_source = AdjudicationSource::HumanOverride;
        if !row.note.is_empty() {
            j.note = Some(row.note.clone());
        }
    }
    Ok(out)
}

/// Rows to be filled in for every judgment awaiting a decision. The note
/// column carries the excerpt text as a prompt for the adjudicator.
pub fn pending_rows(judgments: &[ExcerptJudgment], excerpt_text: impl Fn(&ExcerptJudgment) -> String) -> Vec<Adjudication> {
    judgments
        .iter()
        .filter(|j| j.needs_adjudication())
        .map(|j| Adjudication { key: j.key(), override_label: None, correct_item: None, is_new: false, note: excerpt_text(j) })
        .collect()
}
