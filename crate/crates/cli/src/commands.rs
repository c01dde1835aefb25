//! The six subcommands. Each one skips work whose outputs already exist
//! unless `force` is set.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use protex_core::corpus::{
    load_baseline_csv, load_records_csv, records_to_csv_bytes, Corpus, EvidenceSource, ExtractionRecord, Instrument,
    SourceId,
};
use protex_core::evaluation::{pending_rows, AdjudicationSet, EvaluationError};
use protex_core::gateway::Gateway;
use protex_core::parser::DocumentIndex;
use protex_core::pipeline::{
    auto_judgments, evaluate_records, run_extraction, Approach, EvaluationRun, ExtractionConfig, ExtractionInputs,
    PipelineError, SourceOutcome,
};
use protex_core::prompts::{build_extended_package, PROTOCOL_DOC, REVIEW_INSTRUMENT_DOC};
use protex_core::report::{render, RunHeader, RunReport};
use protex_core::review::{
    batch_sources, inject_errors, read_injection_log, run_review, score_detection, tabulate_value_add,
    write_injection_log, DetectionOverrides, DetectionReport, FeedbackKind, ReviewDocuments, ReviewError,
    ReviewOutcome, ValueAddTable, ValueVerdicts,
};
use tracing::{info, warn};

use crate::config::{Backend, RunConfig};
use crate::workspace::{
    document, document_text, load_corpus, open_gateway, ordinal, read_json, remove_if_exists, write_bytes, write_json,
    Exit, Layout,
};

/// Which review batches to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Phase {
    /// Batches over the unmodified baseline.
    Clean,
    /// Batches over the baseline with injected errors.
    Injected,
    All,
}

fn up_to_date(what: &str) -> Result<()> {
    info!("{what} is up to date; pass --force to redo it");
    Ok(())
}

/// Texts searched for content copied from outside the target source.
fn project_docs(cfg: &RunConfig) -> Vec<(String, String)> {
    let d = &cfg.documents;
    [
        ("protocol", &d.protocol),
        ("llm_instrument", &d.llm_instrument),
        ("instructions", &d.instructions),
        ("examples", &d.examples),
        ("review_instrument", &d.review_instrument),
    ]
    .into_iter()
    .filter_map(|(name, p)| document_text(p.as_deref()).map(|t| (name.to_string(), t)))
    .collect()
}

fn index_for(corpus: &Corpus, docs: &[(String, String)]) -> DocumentIndex {
    let refs: Vec<(&str, &str)> = docs.iter().map(|(n, t)| (n.as_str(), t.as_str())).collect();
    DocumentIndex::new(corpus, &refs)
}

fn read_outcomes(path: &Path) -> Result<Vec<SourceOutcome>> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn extract(cfg: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(&cfg.out);
    let corpus = load_corpus(cfg)?;
    if corpus.is_empty() {
        return Err(Exit::new(Exit::EMPTY_CORPUS, "EmptyCorpus: the corpus manifest lists no sources").into());
    }
    let approach = cfg.approach;
    let (csv, outcomes_path, log) = (layout.records(approach), layout.outcomes(approach), layout.extract_log(approach));
    if force {
        for p in [&csv, &outcomes_path, &log] {
            remove_if_exists(p)?;
        }
    }

    let instrument = Instrument::extraction();
    let mut records: Vec<ExtractionRecord> = if csv.exists() {
        load_records_csv(&csv, &instrument, approach.provenance(), Some(&corpus))?
    } else {
        Vec::new()
    };
    let previous = read_outcomes(&outcomes_path)?;
    let completed: BTreeSet<SourceId> = records.iter().map(|r| r.source_id.clone()).collect();
    if corpus.sources().iter().all(|s| completed.contains(&s.source_id)) {
        return up_to_date(&format!("{} extraction", approach_name(approach)));
    }
    if !completed.is_empty() {
        info!(done = completed.len(), total = corpus.len(), "resuming extraction");
    }

    let gateway = open_gateway(cfg, &log)?;
    let workspace = match approach {
        Approach::Extended => Some(build_extended_package(&cfg.workspace_paths()).context("extended approach")?),
        Approach::Protocol => None,
    };
    let inputs = ExtractionInputs {
        corpus: &corpus,
        protocol: document(cfg.documents.protocol.as_deref(), PROTOCOL_DOC)?,
        workspace,
        project_docs: project_docs(cfg),
        completed: completed.clone(),
    };
    let config = ExtractionConfig {
        approach,
        max_corrective_rounds: cfg.max_corrective_rounds,
        retry: cfg.gateway.retry,
        objective_hints: cfg.objective_hints.clone(),
        default_hint: cfg.default_hint.clone(),
        foreign: cfg.foreign_content,
    };
    let run = match run_extraction(&gateway, &inputs, &config, &std::thread::sleep) {
        Err(PipelineError::EmptyCorpus) => return Err(Exit::new(Exit::EMPTY_CORPUS, "EmptyCorpus").into()),
        other => other?,
    };

    // Completed sources keep their earlier outcome; everything else is new.
    let mut outcomes: Vec<SourceOutcome> =
        previous.into_iter().filter(|o| completed.contains(&o.source_id)).collect();
    outcomes.extend(run.outcomes.iter().cloned());
    outcomes.sort_by_key(|o| o.order);
    let failed: Vec<String> =
        run.failures().map(|o| format!("{}: {}", o.source_id, o.failure.as_deref().unwrap_or(""))).collect();
    records.extend(run.records);
    write_bytes(&csv, &records_to_csv_bytes(&records, &instrument, Some(&corpus))?)?;
    write_json(&outcomes_path, &outcomes)?;
    info!(records = records.len(), path = %csv.display(), "wrote extraction");

    if !failed.is_empty() {
        return Err(Exit::new(
            Exit::SOURCE_FAILURES,
            format!(
                "{} source(s) failed; partial results kept in {} (rerun to resume):\n  {}",
                failed.len(),
                csv.display(),
                failed.join("\n  ")
            ),
        )
        .into());
    }
    Ok(())
}

fn approach_name(a: Approach) -> &'static str {
    match a {
        Approach::Protocol => "protocol",
        Approach::Extended => "extended",
    }
}

pub fn evaluate(cfg: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(&cfg.out);
    let approach = cfg.approach;
    let out = layout.evaluation(approach);
    if out.exists() && !force {
        return up_to_date(&format!("{} evaluation", approach_name(approach)));
    }
    let corpus = load_corpus(cfg)?;
    let instrument = Instrument::extraction();
    let baseline = load_baseline_csv(&cfg.baseline, &instrument, Some(&corpus))
        .with_context(|| format!("loading baseline {}", cfg.baseline.display()))?;
    let records_path = layout.records(approach);
    if !records_path.exists() {
        bail!("{} does not exist; run `extract` first", records_path.display());
    }
    let llm = load_records_csv(&records_path, &instrument, approach.provenance(), Some(&corpus))?;
    let adjudications = match &cfg.adjudication {
        Some(p) if p.exists() => AdjudicationSet::load(p)?,
        Some(p) => {
            warn!("adjudication file {} does not exist yet", p.display());
            AdjudicationSet::default()
        }
        None => AdjudicationSet::default(),
    };

    let docs = project_docs(cfg);
    let mut index = index_for(&corpus, &docs);
    let prov = approach.provenance();
    match evaluate_records(&llm, &baseline, prov, &mut index, &adjudications, &cfg.match_config, &cfg.foreign_content) {
        Ok(run) => {
            write_json(&out, &run)?;
            remove_if_exists(&layout.pending_adjudications(approach))?;
            info!(path = %out.display(), "wrote evaluation");
            Ok(())
        }
        Err(EvaluationError::MissingAdjudication(keys)) => {
            let auto = auto_judgments(&llm, &baseline, prov, &mut index, &cfg.match_config, &cfg.foreign_content)?;
            let rows: Vec<_> = auto
                .iter()
                .flat_map(|(record, js)| {
                    pending_rows(js, |j| {
                        record.excerpts(j.excerpt_ref.item).get(j.excerpt_ref.index).map(|e| e.text.clone()).unwrap_or_default()
                    })
                })
                .filter(|r| adjudications.get(&r.key).is_none())
                .collect();
            let pending = layout.pending_adjudications(approach);
            let mut buf = Vec::new();
            AdjudicationSet::write(&rows, &mut buf)?;
            write_bytes(&pending, &buf)?;
            let list: Vec<String> = keys.iter().map(ToString::to_string).collect();
            Err(Exit::new(
                Exit::MISSING_ADJUDICATION,
                format!(
                    "MissingAdjudication: {} judgment(s) need a decision; a template was written to {}:\n  {}",
                    keys.len(),
                    pending.display(),
                    list.join("\n  ")
                ),
            )
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn inject(cfg: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(&cfg.out);
    let (csv, log) = (layout.injected(), layout.injection_log());
    if csv.exists() && log.exists() && !force {
        return up_to_date("error injection");
    }
    let plan = cfg.injection_plan.as_ref().ok_or_else(|| anyhow!("config has no injection_plan"))?;
    let corpus = load_corpus(cfg)?;
    let instrument = Instrument::review();
    let baseline = load_baseline_csv(&cfg.baseline, &instrument, Some(&corpus))?;
    let (mutated, errors) = inject_errors(&baseline, plan, cfg.seed)?;
    let mut buf = Vec::new();
    write_injection_log(&errors, cfg.seed, &mut buf)?;
    write_bytes(&csv, &records_to_csv_bytes(&mutated, &instrument, Some(&corpus))?)?;
    write_bytes(&log, &buf)?;
    let applicable = errors.iter().filter(|e| e.applicable).count();
    info!(errors = errors.len(), applicable, seed = cfg.seed, path = %csv.display(), "injected errors");
    Ok(())
}

/// Batches in author order, as used by every review step.
fn review_batches(cfg: &RunConfig, corpus: &Corpus) -> Result<Vec<Vec<EvidenceSource>>> {
    Ok(batch_sources(&corpus.sorted(), cfg.batch_size)?)
}

/// Prompt number for batch `k` (0-based) of a phase: the clean phase uses
/// the first two review prompts, the injected phase the last two.
fn batch_no(injected: bool, k: usize) -> u8 {
    let step = u8::from(k > 0);
    if injected {
        3 + step
    } else {
        1 + step
    }
}

fn phase_name(injected: bool) -> &'static str {
    if injected {
        "injected"
    } else {
        "clean"
    }
}

pub fn review(cfg: &RunConfig, phase: Phase, force: bool) -> Result<()> {
    let layout = Layout::new(&cfg.out);
    let corpus = load_corpus(cfg)?;
    let batches = review_batches(cfg, &corpus)?;
    let instrument = Instrument::review();
    let phases: &[bool] = match phase {
        Phase::Clean => &[false],
        Phase::Injected => &[true],
        Phase::All => &[false, true],
    };

    let mut todo = Vec::new();
    for &injected in phases {
        for k in 0..batches.len() {
            let path = layout.review_batch(phase_name(injected), k + 1);
            if force || !path.exists() {
                todo.push((injected, k, path));
            }
        }
    }
    if todo.is_empty() {
        return up_to_date("review");
    }
    if force {
        remove_if_exists(&layout.review_log())?;
    }

    let baseline = load_baseline_csv(&cfg.baseline, &instrument, Some(&corpus))?;
    let injected_rows = if todo.iter().any(|t| t.0) {
        let p = layout.injected();
        if !p.exists() {
            bail!("{} does not exist; run `inject` first", p.display());
        }
        load_records_csv(&p, &instrument, protex_core::corpus::Provenance::HumanBaseline, Some(&corpus))?
    } else {
        Vec::new()
    };
    let documents = ReviewDocuments {
        protocol: document(cfg.documents.protocol.as_deref(), PROTOCOL_DOC)?,
        review_instrument: document(cfg.documents.review_instrument.as_deref(), REVIEW_INSTRUMENT_DOC)?,
        spreadsheet_name: cfg.spreadsheet_name.clone(),
    };
    let docs = project_docs(cfg);
    let mut index = index_for(&corpus, &docs);
    let gateway = open_gateway(cfg, &layout.review_log())?;

    let mut failures = Vec::new();
    for (injected, k, path) in todo {
        let rows = if injected { &injected_rows } else { &baseline };
        let n = batch_no(injected, k);
        let run = |g: &Gateway, index: &mut DocumentIndex| {
            run_review(g, &batches[k], rows, &instrument, &documents, n, index, &cfg.foreign_content)
        };
        match with_retry(cfg, || run(&gateway, &mut index)) {
            Ok(outcome) => {
                info!(phase = phase_name(injected), batch = k + 1, feedback = outcome.feedback.len(), "reviewed batch");
                write_json(&path, &outcome)?;
            }
            Err(e) => {
                warn!(phase = phase_name(injected), batch = k + 1, error = %e, "batch failed");
                failures.push(format!("{} batch {}: {e}", phase_name(injected), k + 1));
            }
        }
    }
    if !failures.is_empty() {
        return Err(Exit::new(Exit::SOURCE_FAILURES, format!("review failed for:\n  {}", failures.join("\n  "))).into());
    }
    Ok(())
}

/// Retries transient gateway errors with the configured backoff.
fn with_retry<T>(cfg: &RunConfig, mut f: impl FnMut() -> Result<T, ReviewError>) -> Result<T, ReviewError> {
    let policy = cfg.gateway.retry;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match f() {
            Err(ReviewError::Gateway(e)) if e.is_transient() && attempt < policy.attempts => {
                warn!(attempt, error = %e, "transient gateway error, retrying");
                std::thread::sleep(policy.delay(attempt));
            }
            other => return other,
        }
    }
}

/// Outcomes of the phase's batches that have been run, in batch order.
fn load_phase(layout: &Layout, injected: bool, n: usize) -> Result<Vec<ReviewOutcome>> {
    (1..=n)
        .map(|k| layout.review_batch(phase_name(injected), k))
        .filter(|p| p.exists())
        .map(|p| read_json(&p))
        .collect()
}

pub fn score(cfg: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(&cfg.out);
    let corpus = load_corpus(cfg)?;
    let batches = review_batches(cfg, &corpus)?;
    let ids = |offset: usize| -> Vec<(String, Vec<SourceId>)> {
        batches
            .iter()
            .enumerate()
            .map(|(k, b)| (ordinal(offset + k + 1), b.iter().map(|s| s.source_id.clone()).collect()))
            .collect()
    };
    let mut scored = false;

    let clean = load_phase(&layout, false, batches.len())?;
    if !clean.is_empty() && (force || !layout.value_add().exists()) {
        let feedback: Vec<_> = clean.iter().flat_map(|o| o.feedback.clone()).collect();
        let verdicts = match &cfg.value_verdicts {
            Some(p) if p.exists() => {
                ValueVerdicts::read(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?
            }
            _ => ValueVerdicts::default(),
        };
        match tabulate_value_add(&feedback, &verdicts, &ids(0)) {
            Ok(table) => {
                write_json(&layout.value_add(), &table)?;
                remove_if_exists(&layout.pending_verdicts())?;
                scored = true;
            }
            Err(ReviewError::MissingAdjudication(missing)) => {
                let pending = layout.pending_verdicts();
                write_pending_verdicts(&pending, &feedback, &missing)?;
                return Err(Exit::new(
                    Exit::MISSING_ADJUDICATION,
                    format!(
                        "MissingAdjudication: {} proposal(s) need a value-add verdict; a template was written to {}:\n  {}",
                        missing.len(),
                        pending.display(),
                        missing.join("\n  ")
                    ),
                )
                .into());
            }
            Err(e) => return Err(e.into()),
        }
    }

    let injected = load_phase(&layout, true, batches.len())?;
    if !injected.is_empty() && (force || !layout.detection().exists()) {
        let log_path = layout.injection_log();
        let text =
            std::fs::read_to_string(&log_path).with_context(|| format!("reading {}; run `inject` first", log_path.display()))?;
        let errors = read_injection_log(&text)?;
        let overrides = match &cfg.detection_overrides {
            Some(p) => DetectionOverrides::read(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
            None => DetectionOverrides::default(),
        };
        let feedback: Vec<_> = injected.iter().flat_map(|o| o.feedback.clone()).collect();
        let report = score_detection(&feedback, &errors, &overrides, &ids(batches.len()));
        info!(detected = report.grid.overall.detected, total = report.grid.overall.total, "scored detection");
        write_json(&layout.detection(), &report)?;
        scored = true;
    }

    if !scored {
        if clean.is_empty() && injected.is_empty() {
            bail!("no review outcomes under {}; run `review` first", layout.root.display());
        }
        return up_to_date("scoring");
    }
    Ok(())
}

fn write_pending_verdicts(path: &Path, feedback: &[protex_core::review::ReviewFeedback], missing: &[String]) -> Result<()> {
    let wanted: BTreeSet<&str> = missing.iter().map(String::as_str).collect();
    let mut out = String::from("feedback_id,verdict,source_id,item,kind,text\n");
    for f in feedback.iter().filter(|f| wanted.contains(f.id.as_str())) {
        let kind = match f.kind {
            FeedbackKind::Correction => "correction",
            FeedbackKind::AdditionalExcerpt => "additional excerpt",
            _ => "other",
        };
        let cells = [
            f.id.clone(),
            String::new(),
            f.source_id.as_ref().map(|s| s.to_string()).unwrap_or_default(),
            f.item.map(|i| i.column_name().to_string()).unwrap_or_default(),
            kind.to_string(),
            f.text.clone(),
        ];
        let line: Vec<String> = cells.iter().map(|c| csv_cell(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report(cfg: &RunConfig, force: bool) -> Result<()> {
    let layout = Layout::new(&cfg.out);
    let corpus = load_corpus(cfg)?;
    let baseline = load_baseline_csv(&cfg.baseline, &Instrument::extraction(), Some(&corpus))?;

    let mut inputs = BTreeMap::new();
    inputs.insert("corpus".to_string(), file_name(&cfg.corpus));
    inputs.insert("baseline".to_string(), file_name(&cfg.baseline));
    if let Some(p) = &cfg.adjudication {
        inputs.insert("adjudication".to_string(), file_name(p));
    }
    if let Some(p) = &cfg.value_verdicts {
        inputs.insert("value_verdicts".to_string(), file_name(p));
    }
    if let Some(p) = &cfg.detection_overrides {
        inputs.insert("detection_overrides".to_string(), file_name(p));
    }
    let header = RunHeader {
        seed: Some(cfg.seed),
        backend: match cfg.gateway.backend {
            Backend::Live => "live".into(),
            Backend::Replay => "replay".into(),
        },
        match_config: cfg.match_config,
        foreign_content: cfg.foreign_content,
        decoding: cfg.gateway.decoding.clone(),
        inputs,
        ..RunHeader::default()
    };
    let mut report = RunReport::new(header);
    let mut parts = 0;
    for approach in [Approach::Extended, Approach::Protocol] {
        let path = layout.evaluation(approach);
        if path.exists() {
            let run: EvaluationRun = read_json(&path)?;
            let outcomes = read_outcomes(&layout.outcomes(approach))?;
            report.add_evaluation(&run, &baseline, &outcomes);
            parts += 1;
        }
    }
    if layout.value_add().exists() {
        report.table3 = Some(read_json::<ValueAddTable>(&layout.value_add())?);
        parts += 1;
    }
    if layout.detection().exists() {
        report.table4 = Some(read_json::<DetectionReport>(&layout.detection())?.grid);
        parts += 1;
    }
    if parts == 0 {
        warn!("no evaluation or review results found; the report will only carry the run header");
    }

    let files = render(&report)?;
    let dir = layout.reports();
    let mut written = 0;
    for (name, bytes) in &files {
        let path = dir.join(name);
        if !force && std::fs::read(&path).is_ok_and(|old| &old == bytes) {
            continue;
        }
        write_bytes(&path, bytes)?;
        written += 1;
    }
    if written == 0 {
        return up_to_date("report");
    }
    info!(files = written, dir = %dir.display(), "wrote report");
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}
