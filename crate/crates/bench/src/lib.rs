//! Deterministic inputs shared by the benchmarks.

use protex_core::corpus::{excerpts, DataItem, ExtractionRecord, Instrument, ItemValue, Provenance};

const WORDS: &[&str] = &[
    "planning", "health", "gain", "policy", "net", "outcome", "housing", "transport", "green", "space", "air",
    "quality", "equity", "local", "authority", "developer", "metric", "baseline", "impact", "assessment",
    "community", "design", "evidence", "guidance", "delivery", "monitoring", "biodiversity", "wellbeing",
];

/// Pseudo-random prose of `n` words; the same seed gives the same text.
pub fn text(seed: u64, n: usize) -> String {
    let mut x = seed.wrapping_mul(2654435761).wrapping_add(1);
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            WORDS[(x >> 33) as usize % WORDS.len()]
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A baseline record and an LLM record with `per_item` excerpts in every
/// key-findings item; half the LLM excerpts are slices of baseline ones.
pub fn record_pair(per_item: usize) -> (ExtractionRecord, ExtractionRecord) {
    let inst = Instrument::extraction();
    let mut base = ExtractionRecord::empty("s.pdf", Provenance::HumanBaseline, &inst);
    let mut llm = ExtractionRecord::empty("s.pdf", Provenance::LlmExtendedProtocol, &inst);
    for (k, item) in DataItem::KEY_FINDINGS.into_iter().enumerate() {
        let b: Vec<String> = (0..per_item).map(|i| text((k * 1000 + i) as u64, 30)).collect();
        let l: Vec<String> = b
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i % 2 == 0 {
                    t.split(' ').skip(5).take(15).collect::<Vec<_>>().join(" ")
                } else {
                    text((k * 1000 + i) as u64 + 500, 20)
                }
            })
            .collect();
        base.set(item, ItemValue::Excerpts(excerpts(&b))).unwrap();
        llm.set(item, ItemValue::Excerpts(excerpts(&l))).unwrap();
    }
    (base, llm)
}

/// A well-formed model reply with `per_item` bullets per item.
pub fn reply(per_item: usize) -> String {
    let mut s = String::from("Author(s)\nAdams, J.\n\nPublication year\n2019\n\nTitle\nA study\n\n");
    for (k, item) in DataItem::KEY_FINDINGS.into_iter().enumerate() {
        s.push_str(item.column_name());
        s.push('\n');
        for i in 0..per_item {
            s.push_str("- ");
            s.push_str(&text((k * 100 + i) as u64, 25));
            s.push('\n');
        }
        s.push('\n');
    }
    s
}
