//! Shared loader for the ten-source review fixture.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use protex_core::corpus::{load_records_csv, Attachment, Corpus, EvidenceSource, ExtractionRecord, Instrument, Provenance};
use protex_core::gateway::Gateway;
use protex_core::parser::{DocumentIndex, ForeignContentConfig};
use protex_core::review::{
    batch_sources, inject_errors, run_review, InjectedError, InjectionPlan, ReviewDocuments, ReviewError, ReviewOutcome,
};
use serde::{Deserialize, Serialize};

pub const SPREADSHEET: &str = "Baseline data extraction.csv";

pub fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/review")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionSetup {
    pub seed: u64,
    pub plan: InjectionPlan,
}

pub struct ReviewFixture {
    pub corpus: Corpus,
    pub baseline: Vec<ExtractionRecord>,
    pub setup: InjectionSetup,
    /// Two batches of five, in author order.
    pub batches: Vec<Vec<EvidenceSource>>,
}

pub fn load() -> ReviewFixture {
    let d = dir();
    let corpus = Corpus::load_manifest(&d.join("corpus.json")).expect("corpus fixture");
    let baseline =
        load_records_csv(&d.join("baseline.csv"), &Instrument::review(), Provenance::HumanBaseline, Some(&corpus))
            .expect("baseline fixture");
    let setup: InjectionSetup =
        serde_json::from_str(&std::fs::read_to_string(d.join("injection.json")).expect("injection fixture")).unwrap();
    let batches = batch_sources(&corpus.sorted(), 5).unwrap();
    ReviewFixture { corpus, baseline, setup, batches }
}

pub fn documents() -> ReviewDocuments {
    ReviewDocuments {
        protocol: Attachment::text("protocol", "Scoping review protocol."),
        review_instrument: Attachment::text("instrument", "Data extraction instrument."),
        spreadsheet_name: SPREADSHEET.into(),
    }
}

pub struct ReviewRun {
    /// Batches 1 and 2 review the clean baseline; 3 and 4 the injected one.
    pub outcomes: Vec<ReviewOutcome>,
    pub injected: Vec<InjectedError>,
}

pub fn run_all(gateway: &Gateway, fx: &ReviewFixture) -> Result<ReviewRun, ReviewError> {
    let instrument = Instrument::review();
    let docs = documents();
    let mut index = DocumentIndex::new(&fx.corpus, &[]);
    let foreign = ForeignContentConfig::default();
    let (mutated, injected) = inject_errors(&fx.baseline, &fx.setup.plan, fx.setup.seed)?;
    let mut outcomes = Vec::new();
    for batch_no in 1..=4u8 {
        let batch = &fx.batches[(batch_no as usize - 1) % 2];
        let rows = if batch_no <= 2 { &fx.baseline } else { &mutated };
        outcomes.push(run_review(gateway, batch, rows, &instrument, &docs, batch_no, &mut index, &foreign)?);
    }
    Ok(ReviewRun { outcomes, injected })
}

pub fn batch_ids(fx: &ReviewFixture, labels: [&str; 2]) -> Vec<(String, Vec<protex_core::corpus::SourceId>)> {
    labels
        .iter()
        .zip(&fx.batches)
        .map(|(l, b)| (l.to_string(), b.iter().map(|s| s.source_id.clone()).collect()))
        .collect()
}
