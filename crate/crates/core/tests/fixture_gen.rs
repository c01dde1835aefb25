//! Regenerates tests/fixtures/review. Run with
//! `cargo test -p protex-core --test fixture_gen -- --ignored`.

mod common;

use std::fmt::Write as _;

use protex_core::corpus::{
    excerpts, write_baseline_csv, Corpus, DataItem, EvidenceSource, ExtractionRecord, Instrument, ItemValue, Provenance,
};
use protex_core::gateway::{Clock, Gateway, ReplayBackend, RunLog};
use protex_core::prompts::{build_review_prompt, DocumentPackage};
use protex_core::review::{
    inject_errors, ErrorKind, FeedbackKind, InjectionPlan, PlanEntry, ReviewFeedback, DEFAULT_OBJECTIVE_TYPE,
};

const AUTHORS: [&str; 10] = ["Adams", "Baker", "Clarke", "Davies", "Evans", "Foster", "Green", "Hughes", "Irving", "Jones"];

const WORDS: &[&str] = &[
    "planning", "health", "policy", "outcome", "housing", "transport", "green", "space", "air", "quality", "equity",
    "local", "authority", "developer", "metric", "baseline", "impact", "assessment", "community", "design", "evidence",
    "guidance", "delivery", "monitoring", "biodiversity", "wellbeing", "urban", "rural", "scheme", "benefit", "net",
    "gain", "objective", "target", "framework", "standard", "population", "exposure", "noise", "access", "travel",
    "active", "inequality", "residents", "council", "strategy", "review", "indicator", "mitigation", "offset",
];

/// Per-source value-add layout: citation corrections, of which add value,
/// additional excerpts, of which add value, whether one proposal is foreign.
const VALUE_ADD: [(usize, usize, usize, usize, bool); 10] = [
    (2, 1, 9, 1, true),
    (2, 0, 6, 0, false),
    (2, 0, 6, 0, true),
    (4, 0, 6, 0, false),
    (2, 0, 8, 5, true),
    (1, 1, 2, 2, false),
    (0, 0, 0, 0, false),
    (2, 2, 0, 0, false),
    (0, 0, 1, 0, false),
    (0, 0, 0, 0, false),
];

fn sentences(i: usize) -> Vec<String> {
    let mut x = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (0..30)
        .map(|_| {
            let n = 10 + (x % 5) as usize;
            let words: Vec<&str> = (0..n)
                .map(|_| {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    WORDS[(x >> 33) as usize % WORDS.len()]
                })
                .collect();
            let mut s = words.join(" ");
            s[..1].make_ascii_uppercase();
            s
        })
        .collect()
}

fn filename(i: usize) -> String {
    format!("{} {}.pdf", AUTHORS[i], 2012 + i)
}

fn build_corpus() -> (serde_json::Value, Vec<Vec<String>>) {
    let texts: Vec<Vec<String>> = (0..10).map(sentences).collect();
    let sources: Vec<serde_json::Value> = (0..10)
        .map(|i| {
            serde_json::json!({
                "filename": filename(i),
                "author_sort_key": AUTHORS[i],
                "full_text": texts[i].join(". ") + ".",
            })
        })
        .collect();
    (serde_json::json!({ "sources": sources }), texts)
}

fn build_baseline(texts: &[Vec<String>]) -> Vec<ExtractionRecord> {
    let inst = Instrument::review();
    (0..10)
        .map(|i| {
            let mut r = ExtractionRecord::empty(filename(i), Provenance::HumanBaseline, &inst);
            let set = |r: &mut ExtractionRecord, item, v: &str| r.set(item, ItemValue::Scalar(v.into())).unwrap();
            set(&mut r, DataItem::Authors, &format!("{} A, Smith B", AUTHORS[i]));
            set(&mut r, DataItem::PublicationYear, &(2012 + i).to_string());
            set(&mut r, DataItem::Title, &format!("Planning for health outcomes: case {}", i + 1));
            let objective = if [5, 8, 9].contains(&i) { DEFAULT_OBJECTIVE_TYPE } else { "Environmental net gain" };
            set(&mut r, DataItem::ObjectiveType, objective);
            for (k, item) in DataItem::KEY_FINDINGS.iter().enumerate() {
                let picks = [&texts[i][k * 2], &texts[i][k * 2 + 1]];
                r.set(*item, ItemValue::Excerpts(excerpts(picks))).unwrap();
            }
            r
        })
        .collect()
}

fn plan(fx_ids: &[protex_core::corpus::SourceId]) -> InjectionPlan {
    let pick = |idx: &[usize]| PlanEntry::Sources(idx.iter().map(|i| fx_ids[i - 1].clone()).collect());
    InjectionPlan {
        publication_year: Some(pick(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10])),
        objective_type: Some(pick(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10])),
        data_item_swap: Some(pick(&[2, 3, 4, 6, 7, 8, 9, 10])),
        source_row_swap: Some(pick(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10])),
        random_text: Some(pick(&[1, 4, 6, 7])),
        ..Default::default()
    }
}

const CITATION_LINES: [&str; 4] = [
    "Author(s): the author list should include a third author, Patel C.",
    "Publication year: the year should be checked against the front page, which gives a different year.",
    "Title: the title should read with its full subtitle.",
    "Author(s): initials for the second author are incorrect.",
];

/// Reviewer reply for a value-add batch.
fn value_add_reply(range: std::ops::Range<usize>, texts: &[Vec<String>]) -> String {
    let mut out = String::from("I have reviewed the five evidence sources against the protocol.\n\n");
    for i in range {
        let (cit, _, ex, _, foreign) = VALUE_ADD[i];
        writeln!(out, "{}", filename(i)).unwrap();
        if cit + ex == 0 {
            out.push_str("- No issues found; the extraction for this source is complete.\n\n");
            continue;
        }
        for c in 0..cit {
            writeln!(out, "- {}", CITATION_LINES[c % CITATION_LINES.len()]).unwrap();
        }
        for e in 0..ex {
            let item = DataItem::KEY_FINDINGS[e % 5].column_name();
            // Own sentences not already in the baseline (indices 10 and up).
            let quote = if foreign && e == ex - 1 { &texts[(i + 1) % 10][12] } else { &texts[i][10 + e] };
            writeln!(out, "- {item}: consider adding \"{quote}\".").unwrap();
        }
        out.push('\n');
    }
    out
}

fn detection_reply(range: std::ops::Range<usize>, texts: &[Vec<String>], random_s6: &str) -> String {
    let mut out = String::from("Review of the extraction spreadsheet.\n\n");
    for i in range {
        writeln!(out, "{}", filename(i)).unwrap();
        match i {
            2 => out.push_str("- Publication year: the recorded year is incorrect; the document was published later.\n"),
            5 => writeln!(out, "- The sentence \"{random_s6}\" does not appear in the source and should be removed.").unwrap(),
            7 => writeln!(out, "- Weaknesses: consider adding \"{}\".", texts[i][20]).unwrap(),
            _ => out.push_str("- No issues found for this source.\n"),
        }
        out.push('\n');
    }
    out
}

#[test]
#[ignore]
fn regenerate_review_fixture() {
    let dir = common::dir();
    std::fs::create_dir_all(&dir).unwrap();
    let (manifest, texts) = build_corpus();
    std::fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let corpus = Corpus::load_manifest(&dir.join("corpus.json")).unwrap();
    let baseline = build_baseline(&texts);
    write_baseline_csv(&baseline, &Instrument::review(), Some(&corpus), &dir.join("baseline.csv")).unwrap();
    let ids: Vec<_> = corpus.sorted().iter().map(|s: &EvidenceSource| s.source_id.clone()).collect();
    let setup = common::InjectionSetup { seed: 20240531, plan: plan(&ids) };
    std::fs::write(dir.join("injection.json"), serde_json::to_string_pretty(&setup).unwrap()).unwrap();

    let fx = common::load();
    let (_, log) = inject_errors(&fx.baseline, &setup.plan, setup.seed).unwrap();
    let random_s6 = log
        .iter()
        .find(|e| e.source_id == ids[5] && matches!(e.kind, ErrorKind::RandomTextInsertion { .. }))
        .and_then(|e| e.changes[0].injected.excerpts().last().map(|x| x.text.clone()))
        .unwrap();

    let replay = ReplayBackend::default();
    let docs = common::documents();
    for batch_no in 1..=4u8 {
        let b = (batch_no as usize - 1) % 2;
        let batch = &fx.batches[b];
        let pkg = DocumentPackage::review_batch(
            docs.protocol.clone(),
            docs.review_instrument.clone(),
            protex_core::corpus::Attachment::text(common::SPREADSHEET, ""),
            batch.iter().map(EvidenceSource::upload).collect(),
        )
        .unwrap();
        let prompt = build_review_prompt(batch_no, common::SPREADSHEET).unwrap();
        let range = b * 5..b * 5 + 5;
        let reply = if batch_no <= 2 { value_add_reply(range, &texts) } else { detection_reply(range, &texts, &random_s6) };
        replay.record(&prompt.text, &pkg.manifest().names, reply);
    }
    let log_path = dir.join("replay.jsonl");
    let _ = std::fs::remove_file(&log_path);
    let gateway = Gateway::new(Box::new(replay), RunLog::open(&log_path, Clock::logical()).unwrap());
    let run = common::run_all(&gateway, &fx).unwrap();

    // Value-add verdicts: per source, the first k proposals of each bucket
    // add value; foreign proposals never do.
    let mut csv = String::from("feedback_id,verdict,note\n");
    for o in &run.outcomes[..2] {
        for (i, src) in ids.iter().enumerate() {
            let (_, cit_va, _, ex_va, _) = VALUE_ADD[i];
            let mine: Vec<&ReviewFeedback> = o
                .feedback
                .iter()
                .filter(|f| f.source_id.as_ref() == Some(src))
                .filter(|f| matches!(f.kind, FeedbackKind::Correction | FeedbackKind::AdditionalExcerpt))
                .collect();
            let (cit, ex): (Vec<_>, Vec<_>) = mine.into_iter().partition(|f| f.item.is_some_and(|i| i.is_citation_detail()));
            for (k, f) in cit.iter().enumerate() {
                let v = if k < cit_va { "adds-value" } else { "no-value" };
                writeln!(csv, "{},{v},", f.id).unwrap();
            }
            let mut granted = 0;
            for f in ex {
                let v = if f.is_ineligible {
                    "ineligible"
                } else if granted < ex_va {
                    granted += 1;
                    "adds-value"
                } else {
                    "no-value"
                };
                writeln!(csv, "{},{v},", f.id).unwrap();
            }
        }
    }
    std::fs::write(dir.join("value_verdicts.csv"), csv).unwrap();
}
