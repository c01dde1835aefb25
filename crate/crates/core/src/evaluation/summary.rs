use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::{ExcerptJudgment, Label};
use crate::corpus::SourceId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationCounts {
    pub relevant: u64,
    pub misclassified: u64,
    pub irrelevant: u64,
    pub new: u64,
    pub ineligible: u64,
}

impl Add for ClassificationCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ClassificationCounts {
            relevant: self.relevant + o.relevant,
            misclassified: self.misclassified + o.misclassified,
            irrelevant: self.irrelevant + o.irrelevant,
            new: self.new + o.new,
            ineligible: self.ineligible + o.ineligible,
        }
    }
}

/// Shares of relevant, misclassified and irrelevant excerpts over their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub relevant: Option<f64>,
    pub misclassified: Option<f64>,
    pub irrelevant: Option<f64>,
}

impl ClassificationCounts {
    pub fn from_judgments(judgments: &[ExcerptJudgment]) -> Self {
        let mut c = ClassificationCounts::default();
        for j in judgments {
            match j.label {
                Label::Relevant => c.relevant += 1,
                Label::Misclassified { .. } => c.misclassified += 1,
                Label::Irrelevant => c.irrelevant += 1,
            }
            c.new += j.is_new as u64;
            c.ineligible += j.is_ineligible as u64;
        }
        c
    }

    pub fn classified(&self) -> u64 {
        self.relevant + self.misclassified + self.irrelevant
    }

    pub fn shares(&self) -> Shares {
        let n = self.classified();
        let share = |k: u64| (n > 0).then(|| k as f64 / n as f64);
        Shares { relevant: share(self.relevant), misclassified: share(self.misclassified), irrelevant: share(self.irrelevant) }
    }

    pub fn has_ineligible(&self) -> bool {
        self.ineligible > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceClassification {
    pub source_id: SourceId,
    pub counts: ClassificationCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub rows: Vec<SourceClassification>,
    pub total: ClassificationCounts,
    /// Sources with at least one ineligible excerpt.
    pub ineligible_sources: usize,
}

/// Per-source and overall label counts, in the order given.
pub fn classification_summary(per_source: &[(SourceId, Vec<ExcerptJudgment>)]) -> ClassificationSummary {
    let rows: Vec<SourceClassification> = per_source
        .iter()
        .map(|(id, j)| SourceClassification { source_id: id.clone(), counts: ClassificationCounts::from_judgments(j) })
        .collect();
    let total = rows.iter().fold(ClassificationCounts::default(), |acc, r| acc + r.counts);
    let ineligible_sources = rows.iter().filter(|r| r.counts.has_ineligible()).count();
    ClassificationSummary { rows, total, ineligible_sources }
}
