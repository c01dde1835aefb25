use std::collections::BTreeMap;

use super::{ReportError, RunReport, Table1, Table2, Table2Group};
use crate::corpus::{DataItem, Provenance};
use crate::evaluation::{aggregate, metrics, round_pct, Averaging, ConfusionCounts, MetricSet};
use crate::review::{DetectionGrid, ErrorKindTag, GridCell, Tally, ValueAddRow, ValueAddTable};

const DASH: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

/// A rendered table: header plus body rows, with a count of undefined cells.
struct Grid {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    undefined: usize,
}

impl Grid {
    fn new(header: &[&str]) -> Self {
        Grid { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new(), undefined: 0 }
    }

    fn csv(&self) -> Result<Vec<u8>, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| ReportError::Io { path: "<csv>".into(), source: e.into() };
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| ReportError::Io { path: "<csv>".into(), source: e.into_error() })
    }

    fn markdown(&self, out: &mut String) {
        let line = |cells: &[String]| format!("| {} |\n", cells.iter().map(|c| c.replace('|', "\\|")).collect::<Vec<_>>().join(" | "));
        out.push_str(&line(&self.header));
        out.push_str(&format!("|{}\n", "---|".repeat(self.header.len())));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        if self.undefined > 0 {
            out.push_str(&format!("\n{DASH} undefined (zero denominator): {} cell(s).\n", self.undefined));
        }
    }
}

fn pct(v: Option<f64>, undefined: &mut usize) -> String {
    match v {
        None => {
            *undefined += 1;
            DASH.to_string()
        }
        Some(r) => {
            let p = round_pct(r);
            if p == 100.0 {
                "100%".into()
            } else {
                format!("{p:.1}%")
            }
        }
    }
}

fn yes_no(b: bool) -> String {
    if b { "Yes" } else { "No" }.into()
}

fn yes_of(k: usize, n: usize) -> String {
    format!("{} ({k} of {n})", if k > 0 { "Yes" } else { "No" })
}

fn method_label(p: Provenance, variant: Option<&str>) -> String {
    match (p, variant) {
        (Provenance::HumanBaseline, _) => "Human (baseline)".into(),
        (Provenance::LlmProtocol, Some(v)) => format!("LLM (protocol {v})"),
        (Provenance::LlmProtocol, None) => "LLM (protocol)".into(),
        (Provenance::LlmExtendedProtocol, _) => "LLM (extended protocol)".into(),
    }
}

/// Labels like "1 to 5" for consecutive runs of source rows.
fn ranges(sizes: impl IntoIterator<Item = usize>) -> Vec<String> {
    let mut start = 1;
    sizes
        .into_iter()
        .map(|n| {
            let label = if n <= 1 { start.to_string() } else { format!("{start} to {}", start + n - 1) };
            start += n;
            label
        })
        .collect()
}

fn table1(t: &Table1) -> Grid {
    let mut g = Grid::new(&[
        "Evidence source",
        "Data extraction approach",
        "LLM process order",
        "Relevant excerpts",
        "Misclassified excerpts",
        "Irrelevant excerpts",
        "New excerpts",
        "Ineligible excerpts",
    ]);
    let na = || "N/A".to_string();
    for (i, src) in t.sources.iter().enumerate() {
        g.rows.push(vec![
            src.label.clone(),
            method_label(Provenance::HumanBaseline, None),
            String::new(),
            src.baseline_excerpts.to_string(),
            na(),
            na(),
            na(),
            "No".into(),
        ]);
        for grp in &t.groups {
            let c = &grp.cells[i];
            g.rows.push(vec![
                String::new(),
                method_label(grp.provenance, c.variant.as_deref()),
                c.order.clone(),
                c.counts.relevant.to_string(),
                c.counts.misclassified.to_string(),
                c.counts.irrelevant.to_string(),
                c.counts.new.to_string(),
                yes_no(c.counts.has_ineligible()),
            ]);
        }
    }
    if t.sources.is_empty() {
        return g;
    }
    let baseline: u64 = t.sources.iter().map(|s| s.baseline_excerpts).sum();
    g.rows.push(vec![
        "All".into(),
        method_label(Provenance::HumanBaseline, None),
        String::new(),
        baseline.to_string(),
        na(),
        na(),
        na(),
        "No".into(),
    ]);
    for grp in &t.groups {
        let c = &grp.total;
        g.rows.push(vec![
            String::new(),
            method_label(grp.provenance, None),
            String::new(),
            c.relevant.to_string(),
            c.misclassified.to_string(),
            c.irrelevant.to_string(),
            c.new.to_string(),
            yes_of(grp.ineligible_sources, t.sources.len()),
        ]);
    }
    for grp in &t.groups {
        let s = grp.total.shares();
        let mut u = 0;
        g.rows.push(vec![
            "Share".into(),
            method_label(grp.provenance, None),
            String::new(),
            pct(s.relevant, &mut u),
            pct(s.misclassified, &mut u),
            pct(s.irrelevant, &mut u),
            String::new(),
            String::new(),
        ]);
        g.undefined += u;
    }
    g
}

fn item_label(i: DataItem) -> &'static str {
    match i {
        DataItem::PublicationYear => "Publication date",
        other => other.column_name(),
    }
}

fn metric_cells(m: &MetricSet, undefined: &mut usize) -> Vec<String> {
    m.values().iter().map(|v| pct(*v, undefined)).collect()
}

fn count_cells(c: &ConfusionCounts) -> Vec<String> {
    [c.tp, c.tn, c.fp, c.fn_].iter().map(u64::to_string).collect()
}

/// Appends one metric row: label, group, counts, metrics, first-in-block.
type PushRow<'a> = dyn FnMut(&mut Grid, String, &Table2Group, Option<ConfusionCounts>, &MetricSet, bool) + 'a;

fn table2(t: &Table2) -> Grid {
    let mut g = Grid::new(&[
        "Data item",
        "Data extraction method",
        "True positives",
        "True negatives",
        "False positives",
        "False negatives",
        "Accuracy",
        "Precision",
        "Recall",
        "F1 score",
    ]);
    if t.groups.is_empty() {
        return g;
    }
    let mut u = 0;
    let mut push = |g: &mut Grid, label: String, grp: &Table2Group, counts: Option<ConfusionCounts>, m: &MetricSet, first: bool| {
        let mut row = vec![if first { label } else { String::new() }, method_label(grp.provenance, None)];
        match counts {
            Some(c) => row.extend(count_cells(&c)),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        row.extend(metric_cells(m, &mut u));
        g.rows.push(row);
    };

    let mut order: Vec<DataItem> = Vec::new();
    for grp in &t.groups {
        for (i, _) in &grp.items {
            if !order.contains(i) {
                order.push(*i);
            }
        }
    }
    let maps: Vec<BTreeMap<DataItem, ConfusionCounts>> = t.groups.iter().map(Table2Group::counts).collect();
    let subtotal = |g: &mut Grid, push: &mut PushRow, label: &str, subset: &[DataItem]| {
        let present: Vec<DataItem> = subset.iter().copied().filter(|i| order.contains(i)).collect();
        if present.is_empty() {
            return;
        }
        let label = format!("All {label} data items (n={} items)", present.len());
        for (k, grp) in t.groups.iter().enumerate() {
            let c: ConfusionCounts = present.iter().filter_map(|i| maps[k].get(i)).copied().sum();
            push(g, label.clone(), grp, Some(c), &metrics(&c), k == 0);
        }
    };

    for item in order.iter().filter(|i| i.is_citation_detail()) {
        for (k, grp) in t.groups.iter().enumerate() {
            let c = maps[k].get(item).copied().unwrap_or_default();
            push(&mut g, item_label(*item).into(), grp, Some(c), &metrics(&c), k == 0);
        }
    }
    subtotal(&mut g, &mut push, "citation", &DataItem::CITATION);
    for item in order.iter().filter(|i| !i.is_citation_detail()) {
        for (k, grp) in t.groups.iter().enumerate() {
            let c = maps[k].get(item).copied().unwrap_or_default();
            push(&mut g, item_label(*item).into(), grp, Some(c), &metrics(&c), k == 0);
        }
    }
    subtotal(&mut g, &mut push, "key findings", &DataItem::KEY_FINDINGS);

    let n = order.len();
    for (mode, name) in [(Averaging::Micro, "micro"), (Averaging::Macro, "macro")] {
        let label = format!("All data items above ({name}) (n={n} items)");
        for (k, grp) in t.groups.iter().enumerate() {
            let m = aggregate(&maps[k], mode, &order).map(|a| a.metrics).unwrap_or_default();
            let counts = (mode == Averaging::Micro).then_some(grp.total);
            push(&mut g, label.clone(), grp, counts, &m, k == 0);
        }
    }
    g.undefined = u;
    g
}

fn table3(t: Option<&ValueAddTable>) -> Grid {
    let mut g = Grid::new(&[
        "Evidence source",
        "Batch",
        "LLM citation corrections",
        "Added value?",
        "LLM additional excerpts",
        "Added value?",
        "Ineligible excerpts",
    ]);
    let Some(t) = t else { return g };
    let batch_of: Vec<&str> = t.batch_rows.iter().flat_map(|b| std::iter::repeat_n(b.label.as_str(), b.sources)).collect();
    for (i, r) in t.source_rows.iter().enumerate() {
        let c = &r.counts;
        g.rows.push(vec![
            r.label.clone(),
            batch_of.get(i).copied().unwrap_or_default().to_string(),
            c.citation_corrections.to_string(),
            c.citation_value_add.to_string(),
            c.additional_excerpts.to_string(),
            c.excerpt_value_add.to_string(),
            yes_no(r.ineligible_sources > 0),
        ]);
    }
    let labels = ranges(t.batch_rows.iter().map(|b| b.sources));
    for (r, range) in t.batch_rows.iter().zip(labels) {
        g.rows.push(summary_row(range, r.label.clone(), r, false, &mut g.undefined));
    }
    let mut u = 0;
    g.rows.push(summary_row("All".into(), "All".into(), &t.all, true, &mut u));
    g.undefined += u;
    g
}

fn summary_row(label: String, batch: String, r: &ValueAddRow, shares: bool, undefined: &mut usize) -> Vec<String> {
    let c = &r.counts;
    let with = |n: u64, s: Option<f64>, u: &mut usize| if shares { format!("{n} ({})", pct(s, u)) } else { n.to_string() };
    vec![
        label,
        batch,
        c.citation_corrections.to_string(),
        with(c.citation_value_add, c.citation_share(), undefined),
        c.additional_excerpts.to_string(),
        with(c.excerpt_value_add, c.excerpt_share(), undefined),
        yes_of(r.ineligible_sources, r.sources),
    ]
}

fn table4(t: Option<&DetectionGrid>) -> (Grid, Option<Tally>) {
    let columns: Vec<ErrorKindTag> = t.map(|t| t.columns.clone()).unwrap_or_else(|| ErrorKindTag::ALL.to_vec());
    let mut header = vec!["Source", "Batch"];
    header.extend(columns.iter().map(|c| c.label()));
    let mut g = Grid::new(&header);
    let Some(t) = t else { return (g, None) };
    let per_batch = if t.batch_rows.is_empty() { 0 } else { t.source_rows.len().div_ceil(t.batch_rows.len()) };
    for (i, r) in t.source_rows.iter().enumerate() {
        let batch = t.batch_rows.get(i.checked_div(per_batch).unwrap_or(0)).map(|b| b.label.clone()).unwrap_or_default();
        let mut row = vec![r.label.clone(), batch];
        row.extend(r.cells.iter().map(GridCell::to_string));
        g.rows.push(row);
    }
    let sizes = (0..t.batch_rows.len()).map(|b| per_batch.min(t.source_rows.len().saturating_sub(b * per_batch)));
    for (r, range) in t.batch_rows.iter().zip(ranges(sizes)) {
        let mut row = vec![range, r.label.clone()];
        row.extend(r.cells.iter().map(GridCell::to_string));
        g.rows.push(row);
    }
    let mut row = vec!["All".to_string(), "All".to_string()];
    row.extend(t.all.cells.iter().map(GridCell::to_string));
    g.rows.push(row);
    (g, Some(t.overall))
}

const LEGEND: &str = "Micro averages are calculated across all document excerpts; macro averages are calculated across data items.";

/// Markdown report with the run header, all four tables and the legends.
pub fn render_markdown(report: &RunReport) -> Result<String, ReportError> {
    let mut out = String::from("# Run report\n\n## Configuration\n\n```json\n");
    out.push_str(&serde_json::to_string_pretty(&report.header)?);
    out.push_str("\n```\n\n## Table 1. Excerpt classification per source\n\n");
    table1(&report.table1).markdown(&mut out);
    out.push_str("\n## Table 2. Performance per data item\n\n");
    table2(&report.table2).markdown(&mut out);
    out.push_str(&format!("\nLegend: {LEGEND}\n"));
    out.push_str("\n## Table 3. Value added by the review step\n\n");
    table3(report.table3.as_ref()).markdown(&mut out);
    out.push_str("\n## Table 4. Detection of injected errors\n\n");
    let (g4, overall) = table4(report.table4.as_ref());
    g4.markdown(&mut out);
    if let Some(o) = overall {
        let mut u = 0;
        out.push_str(&format!("\nOverall: {o} ({}) injected errors detected.\n", pct(o.ratio(), &mut u)));
    }
    Ok(out)
}

/// Every report file by name. Output depends only on the report contents.
pub fn render(report: &RunReport) -> Result<BTreeMap<String, Vec<u8>>, ReportError> {
    report.validate()?;
    let mut files = BTreeMap::new();
    files.insert("table1.csv".into(), table1(&report.table1).csv()?);
    files.insert("table2.csv".into(), table2(&report.table2).csv()?);
    files.insert("table3.csv".into(), table3(report.table3.as_ref()).csv()?);
    files.insert("table4.csv".into(), table4(report.table4.as_ref()).0.csv()?);
    files.insert("report.md".into(), render_markdown(report)?.into_bytes());
    files.insert("run_header.json".into(), serde_json::to_vec_pretty(&report.header)?);
    files.insert("report.json".into(), serde_json::to_vec_pretty(report)?);
    Ok(files)
}

/// Renders one table, or the whole markdown report, in the given format.
pub fn render_table(report: &RunReport, table: u8, format: Format) -> Result<String, ReportError> {
    report.validate()?;
    let g = match table {
        1 => table1(&report.table1),
        2 => table2(&report.table2),
        3 => table3(report.table3.as_ref()),
        _ => table4(report.table4.as_ref()).0,
    };
    Ok(match format {
        Format::Csv => String::from_utf8(g.csv()?).expect("csv output is utf-8"),
        Format::Markdown => {
            let mut s = String::new();
            g.markdown(&mut s);
            s
        }
    })
}
