//! Splits a free-text review reply into per-source, per-item feedback.

use serde::{Deserialize, Serialize};

use crate::corpus::{strip_bullet, DataItem, EvidenceSource, Instrument, SourceId};
use crate::evaluation::text::{normalize, normalized_text};
use crate::parser::{strip_decoration, DocumentIndex, ForeignContentConfig, FormatViolation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Correction,
    AdditionalExcerpt,
    ConfirmsCorrect,
    Narrative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFeedback {
    pub id: String,
    /// `None` for text outside any source section.
    pub source_id: Option<SourceId>,
    pub item: Option<DataItem>,
    pub kind: FeedbackKind,
    pub text: String,
    /// Quoted text proposed by the reviewer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excerpt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cited_page: Option<u32>,
    #[serde(default)]
    pub is_ineligible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_no: Option<u8>,
}

const CONFIRM_NEGATED: &[&str] = &["no errors", "no issues", "no corrections", "no changes", "no problems"];
const ADDITION: &[&str] = &[
    "missing", "omit", "omission", "not extracted", "additional", "should include", "could include",
    "consider including", "consider adding", "could be added", "should be added", "also include", "not captured",
    "not included", "add the", "add this", "adding",
];
const CORRECTION: &[&str] = &[
    "incorrect", "not correct", "error", "wrong", "does not appear", "doesn't appear", "unrelated", "not found in",
    "inaccurate", "not accurate", "misattributed", "should be", "should read", "mismatch", "does not match",
    "not from", "belongs to", "belong to", "discrepanc", "typo", "not relevant", "irrelevant", "remove",
    "should not", "does not belong",
];
const CONFIRM: &[&str] =
    &["correct", "accurate", "appropriate", "matches", "consistent", "complete", "well extracted", "properly"];

fn classify(text: &str, has_quote: bool) -> FeedbackKind {
    let t = text.to_lowercase();
    let any = |list: &[&str]| list.iter().any(|k| t.contains(k));
    let words = format!(" {} ", normalized_text(text));
    let addition = any(ADDITION) || [" add ", " include ", " insert "].iter().any(|w| words.contains(w));
    if any(CONFIRM_NEGATED) {
        FeedbackKind::ConfirmsCorrect
    } else if addition && has_quote {
        FeedbackKind::AdditionalExcerpt
    } else if any(CORRECTION) || addition {
        FeedbackKind::Correction
    } else if any(CONFIRM) {
        FeedbackKind::ConfirmsCorrect
    } else {
        FeedbackKind::Narrative
    }
}

/// First quoted span of at least two words.
fn quoted(text: &str) -> Option<String> {
    const PAIRS: &[(char, char)] = &[('“', '”'), ('"', '"'), ('‘', '’')];
    for (open, close) in PAIRS {
        let mut rest = text;
        while let Some(start) = rest.find(*open) {
            let after = &rest[start + open.len_utf8()..];
            let Some(end) = after.find(*close) else { break };
            let inner = after[..end].trim();
            if inner.split_whitespace().count() >= 2 {
                return Some(inner.to_string());
            }
            rest = &after[end + close.len_utf8()..];
        }
    }
    None
}

/// Page number from "page 4", "p. 4", "p.4" or "pp. 4-5".
fn page_of(text: &str) -> Option<u32> {
    let lower = text.to_lowercase();
    for marker in ["pages ", "page ", "pp. ", "pp.", "p. ", "p."] {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(marker) {
            let at = from + pos;
            let boundary = at == 0 || !lower[..at].chars().next_back().is_some_and(char::is_alphanumeric);
            let digits: String = lower[at + marker.len()..].chars().take_while(char::is_ascii_digit).collect();
            if boundary && !digits.is_empty() {
                return digits.parse().ok();
            }
            from = at + marker.len();
        }
    }
    None
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// The batch source a heading line names, if the line is mostly that name.
fn source_heading<'a>(line: &str, batch: &'a [EvidenceSource]) -> Option<(&'a EvidenceSource, String)> {
    let toks = normalize(line);
    for s in batch {
        let stem = normalize(s.source_id.as_str());
        let full = normalize(&s.filename);
        let name = if contains_run(&toks, &full) { full } else if contains_run(&toks, &stem) { stem } else { continue };
        let (head, rest) = match line.split_once(':') {
            Some((h, r)) if contains_run(&normalize(h), &name) => (h, r.trim().to_string()),
            _ => (line, String::new()),
        };
        if normalize(head).len() <= name.len() + 6 {
            return Some((s, rest));
        }
    }
    None
}

/// Parses a review reply. Text outside any source section is kept as
/// narrative feedback with no source.
pub fn parse_feedback(
    text: &str,
    batch: &[EvidenceSource],
    instrument: &Instrument,
    id_prefix: &str,
) -> (Vec<ReviewFeedback>, Vec<FormatViolation>) {
    let mut out: Vec<ReviewFeedback> = Vec::new();
    let mut violations = Vec::new();
    if text.trim().is_empty() {
        violations.push(FormatViolation::new(ViolationKind::EmptyOutput, "review reply has no text"));
        return (out, violations);
    }
    let mut source: Option<SourceId> = None;
    let mut item: Option<DataItem> = None;
    let mut push = |source: &Option<SourceId>, item: Option<DataItem>, body: &str| {
        let body = body.trim();
        if body.is_empty() {
            return;
        }
        let excerpt = quoted(body);
        out.push(ReviewFeedback {
            id: format!("{id_prefix}-{:03}", out.len() + 1),
            source_id: source.clone(),
            item,
            kind: classify(body, excerpt.is_some()),
            text: body.to_string(),
            excerpt,
            cited_page: page_of(body),
            is_ineligible: false,
            batch_no: None,
        });
    };

    for raw in text.lines() {
        let line = strip_decoration(strip_bullet(raw));
        if line.is_empty() || line.chars().all(|c| !c.is_alphanumeric()) {
            continue;
        }
        if let Some((s, rest)) = source_heading(line, batch) {
            source = Some(s.source_id.clone());
            item = None;
            push(&source, None, &rest);
            continue;
        }
        if let Some(i) = DataItem::from_header(line).filter(|i| instrument.contains(*i)) {
            item = Some(i);
            continue;
        }
        if let Some((head, rest)) = line.split_once(':') {
            if let Some(i) = DataItem::from_header(strip_decoration(head)).filter(|i| instrument.contains(*i)) {
                item = Some(i);
                push(&source, item, rest.trim_start_matches(['*', '_']));
                continue;
            }
        }
        push(&source, item, line);
    }

    for s in batch {
        if !out.iter().any(|f| f.source_id.as_ref() == Some(&s.source_id)) {
            violations.push(FormatViolation::new(
                ViolationKind::StructureDrift,
                format!("no feedback section for {}", s.filename),
            ));
        }
    }
    if out.iter().all(|f| f.source_id.is_none()) {
        tracing::debug!(items = out.len(), "review reply has no recognisable source sections");
    }
    (out, violations)
}

/// Marks proposals whose quoted text is not found in their own source.
pub fn flag_ineligible_feedback(feedback: &mut [ReviewFeedback], index: &mut DocumentIndex, cfg: &ForeignContentConfig) {
    for f in feedback {
        if !matches!(f.kind, FeedbackKind::AdditionalExcerpt | FeedbackKind::Correction) {
            continue;
        }
        let (Some(source), Some(excerpt)) = (&f.source_id, &f.excerpt) else { continue };
        if normalize(excerpt).len() < cfg.min_tokens || index.is_verbatim_in(excerpt, source) {
            continue;
        }
        if index.containment_in(excerpt, source) < cfg.threshold {
            f.is_ineligible = true;
        }
    }
}

/// Whether the feedback text mentions `value` (normalized, as a token run).
pub(crate) fn mentions(feedback: &ReviewFeedback, value: &str) -> bool {
    let v = normalized_text(value);
    if v.is_empty() {
        return false;
    }
    let hay = normalize(&feedback.text);
    contains_run(&hay, &normalize(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    fn batch() -> Vec<EvidenceSource> {
        vec![
            EvidenceSource::new("Smith2020.pdf", "Smith", "Cities should plan for health. The scheme improves air quality for residents.")
                .unwrap(),
            EvidenceSource::new("Jones2019.pdf", "Jones", "Net gain requires monitoring.").unwrap(),
        ]
    }

    const REPLY: &str = "Here is my feedback.\n\n\
## Smith2020.pdf\n\
- Publication year: The publication year 2021 is incorrect; the document states 2020.\n\
- Title: correctly extracted.\n\
**Strengths**\n\
- Missing excerpt: \"The scheme improves air quality for residents\" (page 3).\n\n\
## Jones2019.pdf\n\
All items appear accurate. No errors found.\n";

    #[test]
    fn parses_sections_items_and_kinds() {
        let (fb, v) = parse_feedback(REPLY, &batch(), &Instrument::review(), "c1");
        assert!(v.is_empty(), "{v:?}");
        assert_eq!(fb[0].source_id, None);
        assert_eq!(fb[0].kind, FeedbackKind::Narrative);
        let smith: Vec<_> = fb.iter().filter(|f| f.source_id == Some(SourceId::new("Smith2020"))).collect();
        assert_eq!(smith.len(), 3);
        assert_eq!((smith[0].item, smith[0].kind), (Some(DataItem::PublicationYear), FeedbackKind::Correction));
        assert_eq!((smith[1].item, smith[1].kind), (Some(DataItem::Title), FeedbackKind::ConfirmsCorrect));
        assert_eq!(smith[2].kind, FeedbackKind::AdditionalExcerpt);
        assert_eq!(smith[2].item, Some(DataItem::Strengths));
        assert_eq!(smith[2].excerpt.as_deref(), Some("The scheme improves air quality for residents"));
        assert_eq!(smith[2].cited_page, Some(3));
        let jones: Vec<_> = fb.iter().filter(|f| f.source_id == Some(SourceId::new("Jones2019"))).collect();
        assert_eq!(jones[0].kind, FeedbackKind::ConfirmsCorrect);
        assert_eq!(fb.last().unwrap().id, format!("c1-{:03}", fb.len()));
    }

    #[test]
    fn empty_reply() {
        let (fb, v) = parse_feedback("", &batch(), &Instrument::review(), "c");
        assert!(fb.is_empty());
        assert_eq!(v[0].kind, ViolationKind::EmptyOutput);
    }

    #[test]
    fn quotes_absent_from_the_source_are_ineligible() {
        let b = batch();
        let reply = "Smith2020.pdf\nStrengths: add \"local authorities must publish annual health impact statements for every major scheme\"\n\
Strengths: add \"The scheme improves air quality for residents\"";
        let (mut fb, _) = parse_feedback(reply, &b, &Instrument::review(), "c");
        let corpus = Corpus::new(b).unwrap();
        let mut index = DocumentIndex::new(&corpus, &[]);
        flag_ineligible_feedback(&mut fb, &mut index, &ForeignContentConfig { min_tokens: 5, ..Default::default() });
        assert!(fb[0].is_ineligible);
        assert!(!fb[1].is_ineligible);
    }

    #[test]
    fn page_and_quote_helpers() {
        assert_eq!(page_of("see p.12 and more"), Some(12));
        assert_eq!(page_of("on pages 4-5"), Some(4));
        assert_eq!(page_of("group page"), None);
        assert_eq!(quoted("say “a b” now"), Some("a b".into()));
        assert_eq!(quoted("\"single\" then \"two words\""), Some("two words".into()));
    }
}
