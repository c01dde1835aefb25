use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionCounts;
use super::EvaluationError;
use crate::corpus::DataItem;

/// Ratios in [0, 1]; `None` marks an undefined value (zero denominator).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricSet {
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> MetricSet {
    let accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricSet { accuracy, precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Metrics of the pooled counts.
    Micro,
    /// Unweighted mean of per-item metric values.
    Macro,
}

/// Items left out of a macro mean because the metric was undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedCounts {
    pub accuracy: usize,
    pub precision: usize,
    pub recall: usize,
    pub f1: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metrics: MetricSet,
    pub items: usize,
    pub undefined: UndefinedCounts,
}

/// Aggregates the items of `subset` present in `per_item`.
pub fn aggregate(
    per_item: &BTreeMap<DataItem, ConfusionCounts>,
    mode: Averaging,
    subset: &[DataItem],
) -> Result<Aggregate, EvaluationError> {
    let chosen: Vec<&ConfusionCounts> = subset.iter().filter_map(|i| per_item.get(i)).collect();
    if chosen.is_empty() {
        return Err(EvaluationError::EmptySubset);
    }
    let per: Vec<MetricSet> = chosen.iter().map(|c| metrics(c)).collect();
    let mut undefined = UndefinedCounts::default();
    for m in &per {
        undefined.accuracy += m.accuracy.is_none() as usize;
        undefined.precision += m.precision.is_none() as usize;
        undefined.recall += m.recall.is_none() as usize;
        undefined.f1 += m.f1.is_none() as usize;
    }
    let metrics = match mode {
        Averaging::Micro => metrics(&chosen.iter().copied().copied().sum()),
        Averaging::Macro => {
            let mean = |f: fn(&MetricSet) -> Option<f64>| {
                let vals: Vec<f64> = per.iter().filter_map(f).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            MetricSet {
                accuracy: mean(|m| m.accuracy),
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                f1: mean(|m| m.f1),
            }
        }
    };
    Ok(Aggregate { metrics, items: chosen.len(), undefined })
}

/// Percentage at one decimal, rounding halves up. A small epsilon absorbs
/// binary representation error (e.g. 0.0125 * 1000).
pub fn round_pct(ratio: f64) -> f64 {
    ((ratio * 1000.0 + 0.5 + 1e-9).floor()) / 10.0
}

/// One-decimal percentage text, or "—" when undefined.
pub fn format_pct(ratio: Option<f64>) -> String {
    match ratio {
        Some(r) => format!("{:.1}", round_pct(r)),
        None => "—".to_string(),
    }
}
