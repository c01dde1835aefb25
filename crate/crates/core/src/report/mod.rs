//! The four result tables and the run header, validated and rendered as
//! CSV and markdown.

mod render;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DataItem, ExtractionRecord, Provenance};
use crate::evaluation::{ClassificationCounts, ClassificationSummary, ConfusionCounts, MatchConfig};
use crate::gateway::DecodingParams;
use crate::parser::ForeignContentConfig;
use crate::pipeline::{EvaluationRun, SourceOutcome};
use crate::prompts::TemplateId;
use crate::review::{DetectionGrid, GridCell, Tally, ValueAddCounts, ValueAddRow, ValueAddTable};

pub use render::{render, render_markdown, render_table, Format};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("inconsistent totals in {table}: {detail}")]
    InconsistentTotals { table: &'static str, detail: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Configuration echoed at the top of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub backend: String,
    pub match_config: MatchConfig,
    pub foreign_content: ForeignContentConfig,
    pub template_versions: BTreeMap<String, u32>,
    #[serde(default)]
    pub decoding: DecodingParams,
    /// Input artifacts (baseline, adjudication file, ...) by role.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

impl Default for RunHeader {
    fn default() -> Self {
        RunHeader {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            backend: "none".into(),
            match_config: MatchConfig::default(),
            foreign_content: ForeignContentConfig::default(),
            template_versions: crate::prompts::template_versions(),
            decoding: DecodingParams::default(),
            inputs: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Cell {
    /// Position in processing order.
    pub order: String,
    /// Prompt variant shown next to the method, e.g. "V1.1".
    #[serde(default)]
    pub variant: Option<String>,
    pub counts: ClassificationCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Group {
    pub provenance: Provenance,
    /// One cell per source, aligned with [`Table1::sources`].
    pub cells: Vec<Table1Cell>,
    pub total: ClassificationCounts,
    pub ineligible_sources: usize,
}

impl Table1Group {
    pub fn from_summary(provenance: Provenance, summary: &ClassificationSummary, orders: &[String]) -> Self {
        Table1Group {
            provenance,
            cells: summary
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| Table1Cell {
                    order: orders.get(i).cloned().unwrap_or_else(|| (i + 1).to_string()),
                    variant: None,
                    counts: r.counts,
                })
                .collect(),
            total: summary.total,
            ineligible_sources: summary.ineligible_sources,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Source {
    pub label: String,
    pub baseline_excerpts: u64,
}

/// Excerpt classification per source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1 {
    pub sources: Vec<Table1Source>,
    pub groups: Vec<Table1Group>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2Group {
    pub provenance: Provenance,
    /// Per-item counts, summed over sources, in display order.
    pub items: Vec<(DataItem, ConfusionCounts)>,
    /// Counts over all items; must equal the sum of `items`.
    pub total: ConfusionCounts,
}

impl Table2Group {
    pub fn new(provenance: Provenance, counts: &BTreeMap<DataItem, ConfusionCounts>) -> Self {
        let items: Vec<(DataItem, ConfusionCounts)> = DataItem::CITATION
            .into_iter()
            .chain(DataItem::KEY_FINDINGS)
            .filter_map(|i| counts.get(&i).map(|c| (i, *c)))
            .collect();
        let total = items.iter().map(|(_, c)| *c).sum();
        Table2Group { provenance, items, total }
    }

    pub fn counts(&self) -> BTreeMap<DataItem, ConfusionCounts> {
        self.items.iter().copied().collect()
    }
}

/// Performance per data item.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2 {
    pub groups: Vec<Table2Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: RunHeader,
    #[serde(default)]
    pub table1: Table1,
    #[serde(default)]
    pub table2: Table2,
    #[serde(default)]
    pub table3: Option<ValueAddTable>,
    #[serde(default)]
    pub table4: Option<DetectionGrid>,
}

impl RunReport {
    pub fn new(header: RunHeader) -> Self {
        RunReport { header, table1: Table1::default(), table2: Table2::default(), table3: None, table4: None }
    }

    /// Adds one approach's classification (table 1) and confusion counts
    /// (table 2). Processing order and prompt variant come from the
    /// extraction outcomes when available.
    pub fn add_evaluation(&mut self, run: &EvaluationRun, baseline: &[ExtractionRecord], outcomes: &[SourceOutcome]) {
        if self.table1.sources.is_empty() {
            self.table1.sources = baseline
                .iter()
                .map(|b| Table1Source {
                    label: b.source_id.to_string(),
                    baseline_excerpts: DataItem::KEY_FINDINGS.iter().map(|i| b.excerpts(*i).len() as u64).sum(),
                })
                .collect();
        }
        let orders: Vec<String> = run
            .summary
            .rows
            .iter()
            .map(|r| outcomes.iter().find(|o| o.source_id == r.source_id).map(|o| o.order.to_string()).unwrap_or_default())
            .collect();
        let mut group = Table1Group::from_summary(run.provenance, &run.summary, &orders);
        for (cell, row) in group.cells.iter_mut().zip(&run.summary.rows) {
            cell.variant = outcomes.iter().find(|o| o.source_id == row.source_id).and_then(|o| match o.template_id {
                TemplateId::SimpleV1_0 => Some("V1.0".to_string()),
                TemplateId::SimpleV1_1 => Some("V1.1".to_string()),
                _ => None,
            });
        }
        self.table1.groups.push(group);
        self.table2.groups.push(Table2Group::new(run.provenance, &run.totals));
    }

    /// Checks that every total row equals the sum of its body rows.
    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |table: &'static str, detail: String| Err(ReportError::InconsistentTotals { table, detail });

        for g in &self.table1.groups {
            if g.cells.len() != self.table1.sources.len() {
                return bad("table1", format!("{} has {} cells for {} sources", g.provenance, g.cells.len(), self.table1.sources.len()));
            }
            let sum = g.cells.iter().fold(ClassificationCounts::default(), |a, c| a + c.counts);
            if sum != g.total {
                return bad("table1", format!("{} total {:?} != sum {:?}", g.provenance, g.total, sum));
            }
            let n = g.cells.iter().filter(|c| c.counts.has_ineligible()).count();
            if n != g.ineligible_sources {
                return bad("table1", format!("{} ineligible sources {} != {}", g.provenance, g.ineligible_sources, n));
            }
        }

        for g in &self.table2.groups {
            let sum: ConfusionCounts = g.items.iter().map(|(_, c)| *c).sum();
            if sum != g.total {
                return bad("table2", format!("{} total {:?} != sum {:?}", g.provenance, g.total, sum));
            }
        }

        if let Some(t) = &self.table3 {
            let mut rest = t.source_rows.as_slice();
            for b in &t.batch_rows {
                if b.sources > rest.len() {
                    return bad("table3", format!("batch {} covers more sources than listed", b.label));
                }
                let (mine, tail) = rest.split_at(b.sources);
                check_value_rows("table3", b, mine)?;
                rest = tail;
            }
            if !rest.is_empty() {
                return bad("table3", format!("{} source rows belong to no batch", rest.len()));
            }
            check_value_rows("table3", &t.all, &t.batch_rows)?;
        }

        if let Some(g) = &self.table4 {
            let width = g.columns.len();
            let mut all = vec![Tally::default(); width];
            let per_batch = if g.batch_rows.is_empty() { 0 } else { g.source_rows.len().div_ceil(g.batch_rows.len()) };
            for (bi, b) in g.batch_rows.iter().enumerate() {
                let rows = g.source_rows.iter().skip(bi * per_batch).take(per_batch);
                let mut sum = vec![Tally::default(); width];
                for r in rows {
                    for (k, c) in r.cells.iter().enumerate() {
                        let t = cell_tally(c);
                        sum[k].detected += t.detected;
                        sum[k].total += t.total;
                    }
                }
                if b.cells.iter().map(cell_tally).collect::<Vec<_>>() != sum {
                    return bad("table4", format!("batch {} does not equal its sources", b.label));
                }
                for (k, t) in sum.iter().enumerate() {
                    all[k].detected += t.detected;
                    all[k].total += t.total;
                }
            }
            if g.all.cells.iter().map(cell_tally).collect::<Vec<_>>() != all {
                return bad("table4", "All row does not equal the batch rows".into());
            }
            let overall = Tally { detected: all.iter().map(|t| t.detected).sum(), total: all.iter().map(|t| t.total).sum() };
            if overall != g.overall {
                return bad("table4", format!("overall {} != {}", g.overall, overall));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `reports/table1.csv` .. `table4.csv`, `report.md`,
    /// `run_header.json` and `report.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, ReportError> {
        let files = render(self)?;
        let reports = dir.join("reports");
        std::fs::create_dir_all(&reports).map_err(|e| io_err(&reports, e))?;
        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = reports.join(name);
            std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io { path: path.display().to_string(), source }
}

fn cell_tally(c: &GridCell) -> Tally {
    match c {
        GridCell::NotApplicable => Tally::default(),
        GridCell::Detected => Tally { detected: 1, total: 1 },
        GridCell::Undetected => Tally { detected: 0, total: 1 },
        GridCell::Tally(t) => *t,
    }
}

fn check_value_rows(table: &'static str, total: &ValueAddRow, rows: &[ValueAddRow]) -> Result<(), ReportError> {
    let counts = rows.iter().fold(ValueAddCounts::default(), |a, r| a + r.counts);
    let sources: usize = rows.iter().map(|r| r.sources).sum();
    let inel: usize = rows.iter().map(|r| r.ineligible_sources).sum();
    if counts != total.counts || sources != total.sources || inel != total.ineligible_sources {
        return Err(ReportError::InconsistentTotals {
            table,
            detail: format!("row {} does not equal the sum of its rows", total.label),
        });
    }
    Ok(())
}
