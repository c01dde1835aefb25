//! End-to-end runs of the `protex` binary over replay fixtures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use protex_core::corpus::{load_baseline_csv, Corpus, DataItem, ExtractionRecord, Instrument};
use protex_core::gateway::{Clock, Gateway, ReplayBackend, RunLog};
use protex_core::pipeline::SourceOutcome;
use protex_core::prompts::{
    build_extended_per_source_prompt, build_extended_role_prompt, build_simple_prompt, DocumentPackage, TemplateId,
};
use protex_core::review::{DetectionReport, ValueAddTable, DEFAULT_OBJECTIVE_TYPE};
use serde_json::{json, Value};

fn review_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/review")
}

fn protex(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protex"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("PROTEX_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr:\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes the four workspace documents and returns the `documents` block.
fn documents(dir: &Path) -> Value {
    let mut block = serde_json::Map::new();
    for (key, text) in [
        ("protocol", "Review protocol."),
        ("llm_instrument", "Extraction instrument."),
        ("instructions", "Extraction instructions."),
        ("examples", "Item,Example\n"),
        ("review_instrument", "Review instrument."),
    ] {
        let p = dir.join(format!("{key}.txt"));
        std::fs::write(&p, text).unwrap();
        block.insert(key.into(), json!(p));
    }
    Value::Object(block)
}

fn write_config(dir: &Path, mut extra: Value) -> PathBuf {
    let fx = review_fixture();
    let mut cfg = json!({
        "corpus": fx.join("corpus.json"),
        "baseline": fx.join("baseline.csv"),
        "documents": documents(dir),
        "out": dir.join("out"),
        "gateway": { "backend": "replay", "fixture": fx.join("replay.jsonl"), "retry": { "base_delay_ms": 0 } },
    });
    let obj = cfg.as_object_mut().unwrap();
    for (k, v) in extra.as_object_mut().unwrap().iter() {
        obj.insert(k.clone(), v.clone());
    }
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn review_config(dir: &Path) -> PathBuf {
    let fx = review_fixture();
    let setup: Value = serde_json::from_str(&std::fs::read_to_string(fx.join("injection.json")).unwrap()).unwrap();
    write_config(
        dir,
        json!({
            "seed": setup["seed"],
            "injection_plan": setup["plan"],
            "value_verdicts": fx.join("value_verdicts.csv"),
        }),
    )
}

fn read<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn review_inject_score_report_reproduce_the_review_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = review_config(dir.path());
    let out = dir.path().join("out");
    for cmd in ["inject", "review", "score", "report"] {
        ok(&protex(&cfg, &[cmd]));
    }

    let detection: DetectionReport = read(&out.join("review/detection.json"));
    assert_eq!((detection.grid.overall.detected, detection.grid.overall.total), (2, 39));
    let value: ValueAddTable = read(&out.join("review/value_add.json"));
    let a = value.all.counts;
    assert_eq!((a.citation_corrections, a.citation_value_add, a.additional_excerpts, a.excerpt_value_add), (15, 4, 38, 8));

    let md = std::fs::read_to_string(out.join("reports/report.md")).unwrap();
    assert!(md.contains("2 of 39"), "{md}");
    assert!(md.contains("26.7%") && md.contains("21.1%"), "{md}");
    for name in ["table1.csv", "table2.csv", "table3.csv", "table4.csv", "run_header.json"] {
        assert!(out.join("reports").join(name).exists(), "{name}");
    }
    // One conversation per batch.
    let log = std::fs::read_to_string(out.join("logs/review.jsonl")).unwrap();
    let convs: std::collections::BTreeSet<String> =
        log.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["conversation_id"].as_str().unwrap().to_string()).collect();
    assert_eq!(convs.len(), 4);
}

#[test]
fn commands_are_resumable_and_injection_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = review_config(dir.path());
    let out = dir.path().join("out");
    for cmd in ["inject", "review", "score", "report"] {
        ok(&protex(&cfg, &[cmd]));
    }
    let snapshot = |p: &str| std::fs::read(out.join(p)).unwrap();
    let before: Vec<Vec<u8>> = ["review/injected.csv", "logs/review.jsonl", "review/detection.json", "reports/report.md"]
        .iter()
        .map(|p| snapshot(p))
        .collect();
    for cmd in ["inject", "review", "score", "report"] {
        let o = protex(&cfg, &[cmd]);
        ok(&o);
    }
    let after: Vec<Vec<u8>> = ["review/injected.csv", "logs/review.jsonl", "review/detection.json", "reports/report.md"]
        .iter()
        .map(|p| snapshot(p))
        .collect();
    assert_eq!(before, after, "a rerun without --force changed outputs");

    // Forced re-injection with the same seed is byte-identical; a new seed is not.
    ok(&protex(&cfg, &["inject", "--force"]));
    assert_eq!(snapshot("review/injected.csv"), before[0]);
    ok(&protex(&cfg, &["inject", "--force", "--seed", "7"]));
    assert_ne!(snapshot("review/injected.csv"), before[0]);
}

#[test]
fn missing_value_verdicts_exit_nonzero_with_a_template() {
    let dir = tempfile::tempdir().unwrap();
    let fx = review_fixture();
    let setup: Value = serde_json::from_str(&std::fs::read_to_string(fx.join("injection.json")).unwrap()).unwrap();
    let cfg = write_config(dir.path(), json!({ "seed": setup["seed"], "injection_plan": setup["plan"] }));
    ok(&protex(&cfg, &["review", "--phase", "clean"]));
    let o = protex(&cfg, &["score"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("MissingAdjudication"));
    let pending = std::fs::read_to_string(dir.path().join("out/review/value_verdicts.pending.csv")).unwrap();
    assert_eq!(pending.lines().count(), 1 + 53);
}

// ------------------------------------------------------------ extraction

fn baseline() -> (Corpus, Vec<ExtractionRecord>) {
    let fx = review_fixture();
    let corpus = Corpus::load_manifest(&fx.join("corpus.json")).unwrap();
    let records = load_baseline_csv(&fx.join("baseline.csv"), &Instrument::extraction(), Some(&corpus)).unwrap();
    (corpus, records)
}

/// A reply that keeps each item's first excerpt and files the second one
/// under the next item, so evaluation sees hits, misfiles and misses.
fn reply_for(b: &ExtractionRecord) -> String {
    let mut s = String::new();
    for item in DataItem::CITATION {
        writeln!(s, "{}\n{}\n", item.column_name(), b.get(item).and_then(|v| v.scalar()).unwrap_or("")).unwrap();
    }
    for (k, item) in DataItem::KEY_FINDINGS.iter().enumerate() {
        writeln!(s, "{}", item.column_name()).unwrap();
        if let Some(e) = b.excerpts(*item).first() {
            writeln!(s, "- {}", e.text).unwrap();
        }
        if let Some(e) = b.excerpts(DataItem::KEY_FINDINGS[(k + 1) % 5]).get(1) {
            writeln!(s, "- {}", e.text).unwrap();
        }
        if *item == DataItem::Threats {
            writeln!(s, "- Officers expect the scheme to be reviewed again after the next local election.").unwrap();
        }
        writeln!(s).unwrap();
    }
    s
}

/// Records a transcript in run-log form for the given approach, leaving
/// out the sources in `skip`.
fn extraction_fixture(path: &Path, protocol_approach: bool, skip: &[&str]) {
    let (corpus, records) = baseline();
    let replay = ReplayBackend::default();
    let doc = |n: &str| protex_core::corpus::Attachment::text(n, "x");
    let gateway;
    if protocol_approach {
        for (pos, s) in corpus.sorted().iter().enumerate() {
            let (p, package) = build_simple_prompt(s, pos == 0, doc("protocol"));
            let b = records.iter().find(|r| r.source_id == s.source_id).unwrap();
            replay.record(&p.text, &package.manifest().names, reply_for(b));
        }
        gateway = Gateway::new(Box::new(replay), RunLog::memory(Clock::logical()));
        for (pos, s) in corpus.sorted().iter().enumerate().filter(|(_, s)| !skip.contains(&s.filename.as_str())) {
            let (p, package) = build_simple_prompt(s, pos == 0, doc("protocol"));
            let mut conv = gateway.conversation_with_package(package);
            gateway.send(&mut conv, &p.text, vec![]).unwrap();
        }
    } else {
        let package = DocumentPackage::extended_workspace(doc("p"), doc("i"), doc("s"), doc("e"));
        let role = build_extended_role_prompt();
        replay.record(&role.text, &package.manifest().names, "Understood.");
        for s in corpus.sorted() {
            let b = records.iter().find(|r| r.source_id == s.source_id).unwrap();
            let p = build_extended_per_source_prompt(&s, DEFAULT_OBJECTIVE_TYPE).unwrap();
            replay.record(&p.text, std::slice::from_ref(&s.filename), reply_for(b));
        }
        gateway = Gateway::new(Box::new(replay), RunLog::memory(Clock::logical()));
        let mut conv = gateway.conversation_with_package(package);
        gateway.send(&mut conv, &role.text, vec![]).unwrap();
        for s in corpus.sorted().iter().filter(|s| !skip.contains(&s.filename.as_str())) {
            let p = build_extended_per_source_prompt(s, DEFAULT_OBJECTIVE_TYPE).unwrap();
            gateway.send(&mut conv, &p.text, vec![s.upload()]).unwrap();
        }
    }
    std::fs::write(path, gateway.log().contents()).unwrap();
}

fn extraction_config(dir: &Path, approach: &str, skip: &[&str]) -> PathBuf {
    let fixture = dir.join(format!("extract-{approach}.jsonl"));
    extraction_fixture(&fixture, approach == "protocol", skip);
    write_config(
        dir,
        json!({
            "approach": approach,
            "adjudication": dir.join("adjudication.csv"),
            "gateway": { "backend": "replay", "fixture": fixture, "retry": { "base_delay_ms": 0 } },
        }),
    )
}

fn csv_rows(p: &Path) -> usize {
    let (corpus, _) = baseline();
    load_baseline_csv(p, &Instrument::extraction(), Some(&corpus)).unwrap().len()
}

fn pending_rows(p: &Path) -> usize {
    protex_core::evaluation::AdjudicationSet::load(p).unwrap().len()
}

#[test]
fn extended_extraction_writes_ten_rows_and_is_a_noop_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extraction_config(dir.path(), "extended", &[]);
    let out = dir.path().join("out");
    ok(&protex(&cfg, &["extract"]));
    let csv = out.join("extraction/extended.csv");
    assert_eq!(csv_rows(&csv), 10);
    let outcomes: Vec<SourceOutcome> = read(&out.join("extraction/extended.outcomes.json"));
    assert_eq!(outcomes.len(), 10);
    assert!(outcomes.iter().all(|o| o.failure.is_none() && o.template_id == TemplateId::ExtendedPerSource));
    // One shared conversation.
    assert!(outcomes.iter().all(|o| o.conversation_id == outcomes[0].conversation_id));

    let log = std::fs::read(out.join("logs/extract-extended.jsonl")).unwrap();
    ok(&protex(&cfg, &["extract"]));
    assert_eq!(std::fs::read(out.join("logs/extract-extended.jsonl")).unwrap(), log);
}

#[test]
fn protocol_extraction_uses_the_first_prompt_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extraction_config(dir.path(), "protocol", &[]);
    ok(&protex(&cfg, &["extract"]));
    let outcomes: Vec<SourceOutcome> = read(&dir.path().join("out/extraction/protocol.outcomes.json"));
    let firsts = outcomes.iter().filter(|o| o.template_id == TemplateId::SimpleV1_0).count();
    assert_eq!(firsts, 1);
    assert_eq!(outcomes[0].template_id, TemplateId::SimpleV1_0);
    let convs: std::collections::BTreeSet<&str> = outcomes.iter().map(|o| o.conversation_id.as_str()).collect();
    assert_eq!(convs.len(), 10, "one conversation per source");
}

#[test]
fn failed_sources_exit_nonzero_and_keep_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extraction_config(dir.path(), "protocol", &["Evans 2016.pdf"]);
    let o = protex(&cfg, &["extract"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("Evans 2016"), "{}", stderr(&o));
    let csv = dir.path().join("out/extraction/protocol.csv");
    assert_eq!(csv_rows(&csv), 9);

    // A rerun only retries the missing source and still fails on it.
    let o = protex(&cfg, &["extract"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(csv_rows(&csv), 9);
}

#[test]
fn evaluate_lists_missing_adjudications_then_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = extraction_config(dir.path(), "extended", &[]);
    let out = dir.path().join("out");
    ok(&protex(&cfg, &["extract"]));
    let o = protex(&cfg, &["evaluate"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("MissingAdjudication"));
    let pending = out.join("evaluation/extended.pending.csv");
    let rows = pending_rows(&pending);
    assert_eq!(rows, 10, "one unmatched excerpt per source");
    assert!(stderr(&o).contains(&format!("{rows} judgment(s)")));

    // Accepting the template as-is confirms every automatic call.
    std::fs::copy(&pending, dir.path().join("adjudication.csv")).unwrap();
    ok(&protex(&cfg, &["evaluate"]));
    assert!(out.join("evaluation/extended.json").exists());
    assert!(!pending.exists());
    ok(&protex(&cfg, &["report"]));
    let t2 = std::fs::read_to_string(out.join("reports/table2.csv")).unwrap();
    assert!(t2.contains("All data items above (micro)"), "{t2}");
}

#[test]
fn full_replay_runs_are_byte_identical() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = extraction_config(dir.path(), "extended", &[]);
        ok(&protex(&cfg, &["extract"]));
        let _ = protex(&cfg, &["evaluate"]);
        std::fs::copy(dir.path().join("out/evaluation/extended.pending.csv"), dir.path().join("adjudication.csv")).unwrap();
        ok(&protex(&cfg, &["evaluate"]));
        ok(&protex(&cfg, &["report"]));
        let reports = dir.path().join("out/reports");
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&reports)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 7);
    assert_eq!(a, b);
}

#[test]
fn empty_corpus_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.json");
    std::fs::write(&manifest, r#"{"sources": []}"#).unwrap();
    let cfg = write_config(dir.path(), json!({ "corpus": manifest }));
    let o = protex(&cfg, &["extract"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("EmptyCorpus"));
}

#[test]
fn backend_settings_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({ "gateway": { "backend": "replay" } }));
    let o = protex(&cfg, &["extract"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("requires gateway.fixture"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), json!({ "gateway": { "api_key_env": "PROTEX_KEY_UNSET_IN_TESTS" } }));
    let o = protex(&cfg, &["extract", "--backend", "live"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("PROTEX_KEY_UNSET_IN_TESTS"), "{}", stderr(&o));
}
