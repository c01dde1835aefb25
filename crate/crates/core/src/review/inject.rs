//! Seeded, reversible deliberate errors in a baseline extraction.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ReviewError;
use crate::corpus::{DataItem, Excerpt, ExtractionRecord, ItemValue, SourceId};
use crate::evaluation::text::normalized_text;
use crate::prompts::split_resource;

pub const DEFAULT_OBJECTIVE_TYPE: &str = "Health net gain";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKindTag {
    PublicationYear,
    ObjectiveType,
    DataItemSwap,
    SourceRowSwap,
    RandomTextInsertion,
}

impl ErrorKindTag {
    pub const ALL: [ErrorKindTag; 5] = [
        ErrorKindTag::PublicationYear,
        ErrorKindTag::ObjectiveType,
        ErrorKindTag::DataItemSwap,
        ErrorKindTag::SourceRowSwap,
        ErrorKindTag::RandomTextInsertion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorKindTag::PublicationYear => "Publication year",
            ErrorKindTag::ObjectiveType => "Objective type",
            ErrorKindTag::DataItemSwap => "Data extraction target",
            ErrorKindTag::SourceRowSwap => "Ineligible source",
            ErrorKindTag::RandomTextInsertion => "Random text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ErrorKind {
    PublicationYear,
    ObjectiveType,
    DataItemSwap { item_a: DataItem, item_b: DataItem },
    SourceRowSwap { other_source_id: SourceId },
    RandomTextInsertion { item: DataItem },
}

impl ErrorKind {
    pub fn tag(&self) -> ErrorKindTag {
        match self {
            ErrorKind::PublicationYear => ErrorKindTag::PublicationYear,
            ErrorKind::ObjectiveType => ErrorKindTag::ObjectiveType,
            ErrorKind::DataItemSwap { .. } => ErrorKindTag::DataItemSwap,
            ErrorKind::SourceRowSwap { .. } => ErrorKindTag::SourceRowSwap,
            ErrorKind::RandomTextInsertion { .. } => ErrorKindTag::RandomTextInsertion,
        }
    }
}

/// One cell as it was before and after injection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChange {
    pub item: DataItem,
    pub original: ItemValue,
    pub injected: ItemValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedError {
    pub error_id: String,
    pub source_id: SourceId,
    pub kind: ErrorKind,
    /// Encoded cell text before injection (the first changed cell).
    pub original_value: String,
    pub injected_value: String,
    pub seed_ref: String,
    /// False when the row already held the injected value, so nothing changed.
    pub applicable: bool,
    pub changes: Vec<CellChange>,
}

/// How many rows receive an error of a kind, or exactly which ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanEntry {
    Count(usize),
    Sources(Vec<SourceId>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionPlan {
    pub publication_year: Option<PlanEntry>,
    pub objective_type: Option<PlanEntry>,
    /// The single type written into every targeted row.
    pub objective_value: String,
    pub data_item_swap: Option<PlanEntry>,
    /// Rows, taken pairwise in order; must be even.
    pub source_row_swap: Option<PlanEntry>,
    pub random_text: Option<PlanEntry>,
}

impl Default for InjectionPlan {
    fn default() -> Self {
        InjectionPlan {
            publication_year: None,
            objective_type: None,
            objective_value: DEFAULT_OBJECTIVE_TYPE.to_string(),
            data_item_swap: None,
            source_row_swap: None,
            random_text: None,
        }
    }
}

/// The versioned off-corpus sentence pool.
pub fn random_sentence_pool() -> Vec<String> {
    split_resource(include_str!("../../resources/random_sentences.txt"))
        .1
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

struct Injector<'a> {
    records: &'a mut [ExtractionRecord],
    seed: u64,
    log: Vec<InjectedError>,
}

impl Injector<'_> {
    fn rng(&self, tag: ErrorKindTag) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tag as u64 + 1);
        rng
    }

    fn row(&self, id: &SourceId) -> Result<usize, ReviewError> {
        self.records
            .iter()
            .position(|r| &r.source_id == id)
            .ok_or_else(|| ReviewError::UnsatisfiablePlan(format!("source {id} is not in the baseline")))
    }

    /// Resolves a plan entry to row indices in baseline order.
    fn targets(&self, entry: &PlanEntry, eligible: &[usize], rng: &mut ChaCha8Rng, what: &str) -> Result<Vec<usize>, ReviewError> {
        let mut rows = match entry {
            PlanEntry::Count(n) => {
                if *n > eligible.len() {
                    return Err(ReviewError::UnsatisfiablePlan(format!(
                        "{what}: {n} requested, {} eligible rows",
                        eligible.len()
                    )));
                }
                let mut pool = eligible.to_vec();
                pool.shuffle(rng);
                pool.truncate(*n);
                pool
            }
            PlanEntry::Sources(ids) => {
                let rows = ids.iter().map(|id| self.row(id)).collect::<Result<Vec<_>, _>>()?;
                if let Some(bad) = rows.iter().find(|r| !eligible.contains(r)) {
                    return Err(ReviewError::UnsatisfiablePlan(format!(
                        "{what}: source {} is not eligible",
                        self.records[*bad].source_id
                    )));
                }
                return Ok(rows);
            }
        };
        rows.sort_unstable();
        Ok(rows)
    }

    fn value(&self, row: usize, item: DataItem) -> Result<ItemValue, ReviewError> {
        self.records[row].get(item).cloned().ok_or_else(|| {
            ReviewError::UnsatisfiablePlan(format!("baseline has no {item} column"))
        })
    }

    fn set(&mut self, row: usize, item: DataItem, value: ItemValue) -> Result<(), ReviewError> {
        Ok(self.records[row].set(item, value)?)
    }

    fn record(&mut self, row: usize, kind: ErrorKind, changes: Vec<CellChange>, applicable: bool) {
        let (original_value, injected_value) = changes
            .first()
            .map(|c| (c.original.encode(), c.injected.encode()))
            .unwrap_or_default();
        self.log.push(InjectedError {
            error_id: format!("E{:03}", self.log.len() + 1),
            source_id: self.records[row].source_id.clone(),
            kind,
            original_value,
            injected_value,
            seed_ref: format!("seed={}", self.seed),
            applicable,
            changes,
        });
    }

    fn change(&mut self, row: usize, item: DataItem, injected: ItemValue) -> Result<CellChange, ReviewError> {
        let original = self.value(row, item)?;
        self.set(row, item, injected.clone())?;
        Ok(CellChange { item, original, injected })
    }

    fn all_rows(&self) -> Vec<usize> {
        (0..self.records.len()).collect()
    }

    fn publication_year(&mut self, entry: &PlanEntry) -> Result<(), ReviewError> {
        let mut rng = self.rng(ErrorKindTag::PublicationYear);
        let rows = self.targets(entry, &self.all_rows(), &mut rng, "publication year")?;
        for row in rows {
            let original = self.value(row, DataItem::PublicationYear)?;
            let old: Option<i32> = original.scalar().and_then(|s| s.trim().parse().ok());
            let new = loop {
                let candidate = match old {
                    Some(y) => y + [-3, -2, -1, 1, 2, 3][rng.gen_range(0..6)],
                    None => rng.gen_range(1990..=2024),
                };
                if Some(candidate) != old {
                    break candidate;
                }
            };
            let c = self.change(row, DataItem::PublicationYear, ItemValue::Scalar(new.to_string()))?;
            self.record(row, ErrorKind::PublicationYear, vec![c], true);
        }
        Ok(())
    }

    fn objective_type(&mut self, entry: &PlanEntry, value: &str) -> Result<(), ReviewError> {
        let mut rng = self.rng(ErrorKindTag::ObjectiveType);
        let rows = self.targets(entry, &self.all_rows(), &mut rng, "objective type")?;
        let key = normalized_text(value);
        let mut changed = 0;
        for row in rows {
            let original = self.value(row, DataItem::ObjectiveType)?;
            if normalized_text(&original.encode()) == key {
                let c = CellChange { item: DataItem::ObjectiveType, original: original.clone(), injected: original };
                self.record(row, ErrorKind::ObjectiveType, vec![c], false);
                continue;
            }
            let c = self.change(row, DataItem::ObjectiveType, ItemValue::Scalar(value.to_string()))?;
            self.record(row, ErrorKind::ObjectiveType, vec![c], true);
            changed += 1;
        }
        if changed == 0 {
            return Err(ReviewError::UnsatisfiablePlan(format!("every targeted row already has objective type {value:?}")));
        }
        Ok(())
    }

    fn swappable_pairs(&self, row: usize) -> Vec<(DataItem, DataItem)> {
        let kf = DataItem::KEY_FINDINGS;
        let mut pairs = Vec::new();
        for (i, a) in kf.iter().enumerate() {
            for b in &kf[i + 1..] {
                let (va, vb) = (self.records[row].get(*a), self.records[row].get(*b));
                if va.is_some() && vb.is_some() && va != vb {
                    pairs.push((*a, *b));
                }
            }
        }
        pairs
    }

    fn data_item_swap(&mut self, entry: &PlanEntry) -> Result<(), ReviewError> {
        let mut rng = self.rng(ErrorKindTag::DataItemSwap);
        let eligible: Vec<usize> = self.all_rows().into_iter().filter(|r| !self.swappable_pairs(*r).is_empty()).collect();
        let rows = self.targets(entry, &eligible, &mut rng, "data item swap")?;
        for row in rows {
            let pairs = self.swappable_pairs(row);
            let (a, b) = pairs[rng.gen_range(0..pairs.len())];
            let (va, vb) = (self.value(row, a)?, self.value(row, b)?);
            let ca = self.change(row, a, vb)?;
            let cb = self.change(row, b, va)?;
            self.record(row, ErrorKind::DataItemSwap { item_a: a, item_b: b }, vec![ca, cb], true);
        }
        Ok(())
    }

    fn source_row_swap(&mut self, entry: &PlanEntry) -> Result<(), ReviewError> {
        let mut rng = self.rng(ErrorKindTag::SourceRowSwap);
        let rows = match entry {
            PlanEntry::Count(n) if n % 2 == 1 => {
                return Err(ReviewError::UnsatisfiablePlan(format!("row swaps need an even row count, got {n}")))
            }
            PlanEntry::Sources(ids) if ids.len() % 2 == 1 => {
                return Err(ReviewError::UnsatisfiablePlan("row swaps need an even number of sources".into()))
            }
            _ => {
                let mut rows = self.targets(entry, &self.all_rows(), &mut rng, "source row swap")?;
                if matches!(entry, PlanEntry::Count(_)) {
                    rows.shuffle(&mut rng);
                }
                rows
            }
        };
        for pair in rows.chunks(2) {
            let (x, y) = (pair[0], pair[1]);
            if x == y {
                return Err(ReviewError::UnsatisfiablePlan("a row cannot be swapped with itself".into()));
            }
            let items: Vec<DataItem> =
                DataItem::KEY_FINDINGS.into_iter().filter(|i| self.records[x].get(*i).is_some()).collect();
            let mut cx = Vec::new();
            let mut cy = Vec::new();
            for item in items {
                let (vx, vy) = (self.value(x, item)?, self.value(y, item)?);
                cx.push(self.change(x, item, vy)?);
                cy.push(self.change(y, item, vx)?);
            }
            let (idx, idy) = (self.records[x].source_id.clone(), self.records[y].source_id.clone());
            self.record(x, ErrorKind::SourceRowSwap { other_source_id: idy }, cx, true);
            self.record(y, ErrorKind::SourceRowSwap { other_source_id: idx }, cy, true);
        }
        Ok(())
    }

    fn random_text(&mut self, entry: &PlanEntry, pool: &[String]) -> Result<(), ReviewError> {
        if pool.is_empty() {
            return Err(ReviewError::UnsatisfiablePlan("sentence pool is empty".into()));
        }
        let mut rng = self.rng(ErrorKindTag::RandomTextInsertion);
        let rows = self.targets(entry, &self.all_rows(), &mut rng, "random text")?;
        for row in rows {
            let items: Vec<DataItem> =
                DataItem::KEY_FINDINGS.into_iter().filter(|i| self.records[row].get(*i).is_some()).collect();
            if items.is_empty() {
                return Err(ReviewError::UnsatisfiablePlan("baseline has no key-findings columns".into()));
            }
            let item = items[rng.gen_range(0..items.len())];
            let sentence = pool[rng.gen_range(0..pool.len())].clone();
            let mut list: Vec<Excerpt> = self.value(row, item)?.excerpts().to_vec();
            list.push(Excerpt::new(sentence, list.len()));
            let c = self.change(row, item, ItemValue::Excerpts(list))?;
            self.record(row, ErrorKind::RandomTextInsertion { item }, vec![c], true);
        }
        Ok(())
    }
}

/// Applies the plan in a fixed kind order. Each kind draws from its own
/// seeded stream, so adding one kind to a plan leaves the others unchanged.
pub fn inject_errors(
    baseline: &[ExtractionRecord],
    plan: &InjectionPlan,
    seed: u64,
) -> Result<(Vec<ExtractionRecord>, Vec<InjectedError>), ReviewError> {
    inject_with_pool(baseline, plan, seed, &random_sentence_pool())
}

pub(crate) fn inject_with_pool(
    baseline: &[ExtractionRecord],
    plan: &InjectionPlan,
    seed: u64,
    pool: &[String],
) -> Result<(Vec<ExtractionRecord>, Vec<InjectedError>), ReviewError> {
    let mut records = baseline.to_vec();
    if let Some(PlanEntry::Count(n)) = &plan.source_row_swap {
        if *n > 0 && records.len() < 2 {
            return Err(ReviewError::UnsatisfiablePlan("row swaps need at least two rows".into()));
        }
    }
    let mut inj = Injector { records: &mut records, seed, log: Vec::new() };
    if let Some(e) = &plan.publication_year {
        inj.publication_year(e)?;
    }
    if let Some(e) = &plan.objective_type {
        inj.objective_type(e, &plan.objective_value)?;
    }
    if let Some(e) = &plan.data_item_swap {
        inj.data_item_swap(e)?;
    }
    if let Some(e) = &plan.source_row_swap {
        inj.source_row_swap(e)?;
    }
    if let Some(e) = &plan.random_text {
        inj.random_text(e, pool)?;
    }
    let log = inj.log;
    Ok((records, log))
}

/// Restores every changed cell, newest change first.
pub fn revert_errors(records: &[ExtractionRecord], log: &[InjectedError]) -> Result<Vec<ExtractionRecord>, ReviewError> {
    let mut out = records.to_vec();
    for e in log.iter().rev() {
        let row = out
            .iter_mut()
            .find(|r| r.source_id == e.source_id)
            .ok_or_else(|| ReviewError::Log(format!("{}: source {} not found", e.error_id, e.source_id)))?;
        for c in e.changes.iter().rev() {
            row.set(c.item, c.original.clone())?;
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    #[serde(flatten)]
    error: InjectedError,
    seed: u64,
    tool_version: String,
}

/// JSON lines, one error per line, each stamped with the seed and the tool
/// version.
pub fn write_injection_log<W: Write>(log: &[InjectedError], seed: u64, mut writer: W) -> Result<(), ReviewError> {
    for e in log {
        let line = LogLine { error: e.clone(), seed, tool_version: env!("CARGO_PKG_VERSION").to_string() };
        let mut text = serde_json::to_string(&line).map_err(|e| ReviewError::Log(e.to_string()))?;
        text.push('\n');
        writer.write_all(text.as_bytes()).map_err(|e| ReviewError::Log(e.to_string()))?;
    }
    Ok(())
}

pub fn read_injection_log(text: &str) -> Result<Vec<InjectedError>, ReviewError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<LogLine>(l).map(|x| x.error).map_err(|e| ReviewError::Log(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{excerpts, Instrument, Provenance};

    fn baseline(n: usize) -> Vec<ExtractionRecord> {
        let inst = Instrument::review();
        (0..n)
            .map(|i| {
                let mut r = ExtractionRecord::empty(format!("s{i}.pdf"), Provenance::HumanBaseline, &inst);
                r.set(DataItem::PublicationYear, ItemValue::Scalar(format!("{}", 2015 + i))).unwrap();
                let ty = if i % 3 == 0 { DEFAULT_OBJECTIVE_TYPE } else { "Environmental net gain" };
                r.set(DataItem::ObjectiveType, ItemValue::Scalar(ty.into())).unwrap();
                for (k, item) in DataItem::KEY_FINDINGS.iter().enumerate() {
                    r.set(*item, ItemValue::Excerpts(excerpts([format!("s{i} k{k} a"), format!("s{i} k{k} b")]))).unwrap();
                }
                r
            })
            .collect()
    }

    fn full_plan() -> InjectionPlan {
        InjectionPlan {
            publication_year: Some(PlanEntry::Count(10)),
            objective_type: Some(PlanEntry::Count(10)),
            data_item_swap: Some(PlanEntry::Count(8)),
            source_row_swap: Some(PlanEntry::Count(10)),
            random_text: Some(PlanEntry::Count(4)),
            ..Default::default()
        }
    }

    #[test]
    fn full_plan_counts_and_revert() {
        let base = baseline(10);
        let (mutated, log) = inject_errors(&base, &full_plan(), 7).unwrap();
        let count = |t: ErrorKindTag| log.iter().filter(|e| e.kind.tag() == t && e.applicable).count();
        assert_eq!(count(ErrorKindTag::PublicationYear), 10);
        assert_eq!(count(ErrorKindTag::ObjectiveType), 6);
        assert_eq!(log.iter().filter(|e| e.kind.tag() == ErrorKindTag::ObjectiveType).count(), 10);
        assert_eq!(count(ErrorKindTag::DataItemSwap), 8);
        assert_eq!(count(ErrorKindTag::SourceRowSwap), 10);
        assert_eq!(count(ErrorKindTag::RandomTextInsertion), 4);
        assert_ne!(mutated, base);
        assert_eq!(revert_errors(&mutated, &log).unwrap(), base);
    }

    #[test]
    fn year_changes_and_is_logged() {
        let base = baseline(3);
        let plan = InjectionPlan { publication_year: Some(PlanEntry::Sources(vec![SourceId::new("s1")])), ..Default::default() };
        let (m, log) = inject_errors(&base, &plan, 1).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].original_value, "2016");
        assert_ne!(log[0].injected_value, "2016");
        assert_eq!(m[1].get(DataItem::PublicationYear).unwrap().scalar(), Some(log[0].injected_value.as_str()));
    }

    #[test]
    fn row_swaps_reference_each_other() {
        let (_, log) = inject_errors(
            &baseline(4),
            &InjectionPlan { source_row_swap: Some(PlanEntry::Count(4)), ..Default::default() },
            3,
        )
        .unwrap();
        for e in &log {
            let ErrorKind::SourceRowSwap { other_source_id } = &e.kind else { panic!() };
            let partner = log.iter().find(|p| &p.source_id == other_source_id).unwrap();
            assert_eq!(partner.kind, ErrorKind::SourceRowSwap { other_source_id: e.source_id.clone() });
        }
    }

    #[test]
    fn swaps_are_involutions() {
        let base = baseline(4);
        let plan = InjectionPlan {
            source_row_swap: Some(PlanEntry::Sources(vec![SourceId::new("s0"), SourceId::new("s2")])),
            ..Default::default()
        };
        let (once, _) = inject_errors(&base, &plan, 9).unwrap();
        let (twice, _) = inject_errors(&once, &plan, 9).unwrap();
        assert_eq!(twice, base);

        let (once, log) = inject_errors(&base, &InjectionPlan { data_item_swap: Some(PlanEntry::Count(1)), ..Default::default() }, 5).unwrap();
        let ErrorKind::DataItemSwap { item_a, item_b } = log[0].kind else { panic!() };
        let row = base.iter().position(|r| r.source_id == log[0].source_id).unwrap();
        let mut again = once.clone();
        let (a, b) = (again[row].get(item_a).unwrap().clone(), again[row].get(item_b).unwrap().clone());
        again[row].set(item_a, b).unwrap();
        again[row].set(item_b, a).unwrap();
        assert_eq!(again, base);
    }

    #[test]
    fn unsatisfiable_plans() {
        let base = baseline(3);
        let odd = InjectionPlan { source_row_swap: Some(PlanEntry::Count(3)), ..Default::default() };
        assert!(matches!(inject_errors(&base, &odd, 0), Err(ReviewError::UnsatisfiablePlan(_))));
        let too_many = InjectionPlan { publication_year: Some(PlanEntry::Count(4)), ..Default::default() };
        assert!(matches!(inject_errors(&base, &too_many, 0), Err(ReviewError::UnsatisfiablePlan(_))));
        let same = InjectionPlan {
            objective_type: Some(PlanEntry::Sources(vec![SourceId::new("s0")])),
            ..Default::default()
        };
        assert!(matches!(inject_errors(&base, &same, 0), Err(ReviewError::UnsatisfiablePlan(_))));
        let year_only = Instrument::new([DataItem::PublicationYear]);
        let narrow: Vec<_> = base.iter().map(|r| r.project(&year_only).unwrap()).collect();
        let obj = InjectionPlan { objective_type: Some(PlanEntry::Count(1)), ..Default::default() };
        assert!(matches!(inject_errors(&narrow, &obj, 0), Err(ReviewError::UnsatisfiablePlan(_))));
    }

    #[test]
    fn deterministic_and_logged_round_trip() {
        let base = baseline(10);
        let a = inject_errors(&base, &full_plan(), 42).unwrap();
        let b = inject_errors(&base, &full_plan(), 42).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_injection_log(&a.1, 42, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.contains("\"seed\":42") && l.contains("tool_version")));
        assert_eq!(read_injection_log(&text).unwrap(), a.1);
    }

    #[test]
    fn sentence_pool_is_loaded() {
        assert!(random_sentence_pool().len() >= 10);
    }
}
