//! Parsing of LLM extraction responses (headers followed by bullet lists)
//! and detection of output slippage that drives corrective prompts.

mod foreign;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    has_bullet, strip_bullet, DataItem, Excerpt, ExtractionRecord, Instrument, ItemClass, ItemValue, Provenance,
    Sentinel, SourceId,
};
use crate::evaluation::text::normalized_text;

pub use foreign::{detect_foreign_content, DocumentIndex, ForeignContentConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ViolationKind {
    MissingHeader { item: DataItem },
    StructureDrift,
    /// Text matched a document other than the target.
    ForeignContent { source_id: SourceId },
    EmptyOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatViolation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl FormatViolation {
    pub fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        FormatViolation { kind, detail: detail.into() }
    }
}

impl fmt::Display for FormatViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::MissingHeader { item } => write!(f, "missing header {item}"),
            ViolationKind::StructureDrift => write!(f, "structure drift: {}", self.detail),
            ViolationKind::ForeignContent { source_id } => write!(f, "foreign content from {source_id}: {}", self.detail),
            ViolationKind::EmptyOutput => write!(f, "empty output"),
        }
    }
}

/// Items recovered from a response; items with no header are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialRecord {
    pub items: BTreeMap<DataItem, ItemValue>,
}

impl PartialRecord {
    /// Completes the record, filling unmatched items with absent values.
    pub fn into_record(
        self,
        source_filename: &str,
        provenance: Provenance,
        instrument: &Instrument,
    ) -> ExtractionRecord {
        let mut record = ExtractionRecord::empty(source_filename, provenance, instrument);
        for (item, value) in self.items {
            if instrument.contains(item) {
                record.set(item, value).expect("parser emits values fitting their class");
            }
        }
        record
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub record: PartialRecord,
    pub violations: Vec<FormatViolation>,
    /// Lines outside any recognised header, kept for the run log.
    pub narrative: Vec<String>,
}

/// Headings that group items without being items themselves.
const GROUP_HEADINGS: &[&str] = &[
    "citation details",
    "evidence source details",
    "key findings",
    "narrative",
    "notes",
    "note",
    "accompanying narrative",
    "data extraction",
    "data extraction results",
    "summary",
];

const NOT_FOUND_PREFIXES: &[&str] = &[
    "no relevant",
    "no specific",
    "no explicit",
    "no information",
    "no excerpts",
    "no data",
    "not explicitly",
    "not found",
    "not stated",
    "not addressed",
    "not applicable",
    "none identified",
    "none found",
    "none stated",
    "there is no",
    "there are no",
    "the document does not",
    "this document does not",
    "the source does not",
    "unstated",
];

/// Whether a line states that nothing relevant was found.
pub fn is_not_found_statement(line: &str) -> bool {
    let n = normalized_text(line);
    n == "none" || n == "n a" || NOT_FOUND_PREFIXES.iter().any(|p| n.starts_with(p))
}

/// A header line: optional markdown decoration, the item name, an optional
/// colon and optional inline content.
enum HeaderMatch {
    Item(DataItem, String),
    /// A recognisable heading that is not an instrument item.
    Other,
}

pub(crate) fn strip_decoration(s: &str) -> &str {
    let s = s.trim().trim_start_matches('#').trim();
    let s = s.trim_matches(|c| c == '*' || c == '_').trim();
    s.trim_end_matches(':').trim().trim_matches(|c| c == '*' || c == '_').trim()
}

fn match_header(line: &str, instrument: &Instrument) -> Option<HeaderMatch> {
    let decorated = line.trim_start().starts_with('#') || line.trim_start().starts_with("**");
    let whole = strip_decoration(line);
    if let Some(item) = DataItem::from_header(whole) {
        return Some(if instrument.contains(item) { HeaderMatch::Item(item, String::new()) } else { HeaderMatch::Other });
    }
    if let Some((head, rest)) = line.split_once(':') {
        if GROUP_HEADINGS.contains(&normalized_text(head).as_str()) {
            return Some(HeaderMatch::Other);
        }
        if let Some(item) = DataItem::from_header(strip_decoration(head)) {
            let inline = rest.trim().trim_matches(|c| c == '*' || c == '_').trim().to_string();
            return Some(if instrument.contains(item) { HeaderMatch::Item(item, inline) } else { HeaderMatch::Other });
        }
    }
    let key = normalized_text(whole);
    if GROUP_HEADINGS.contains(&key.as_str()) || (decorated && !key.is_empty()) {
        return Some(HeaderMatch::Other);
    }
    None
}

/// Removes one pair of surrounding quotation marks.
fn strip_quotes(s: &str) -> &str {
    const PAIRS: &[(char, char)] = &[('"', '"'), ('“', '”'), ('\'', '\''), ('‘', '’'), ('«', '»')];
    let t = s.trim();
    for (open, close) in PAIRS {
        if let Some(inner) = t.strip_prefix(*open).and_then(|r| r.strip_suffix(*close)) {
            return inner.trim();
        }
    }
    t
}

/// Splits a trailing page citation such as "(p. 4)" or "(page 12)".
pub fn split_page_ref(s: &str) -> (&str, Option<u32>) {
    let t = s.trim_end();
    let Some(body) = t.strip_suffix(')') else { return (s, None) };
    let Some(open) = body.rfind('(') else { return (s, None) };
    let inside = body[open + 1..].trim().to_ascii_lowercase();
    let digits = ["pages", "page", "pp.", "pp", "p.", "p"]
        .iter()
        .find_map(|p| inside.strip_prefix(p))
        .map(str::trim);
    match digits.and_then(|d| d.split(|c: char| !c.is_ascii_digit()).next()).and_then(|d| d.parse().ok()) {
        Some(page) => (body[..open].trim_end(), Some(page)),
        None => (s, None),
    }
}

struct Section {
    lines: Vec<(bool, String)>,
}

/// Parses a response into items. Never fails: problems are reported as
/// violations.
pub fn parse_response(text: &str, instrument: &Instrument) -> ParsedResponse {
    let mut violations = Vec::new();
    let mut narrative = Vec::new();
    if text.trim().is_empty() {
        violations.push(FormatViolation::new(ViolationKind::EmptyOutput, "response has no text"));
        return ParsedResponse { record: PartialRecord::default(), violations, narrative };
    }

    let mut sections: BTreeMap<DataItem, Section> = BTreeMap::new();
    let mut current: Option<DataItem> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !has_bullet(line) {
            match match_header(line, instrument) {
                Some(HeaderMatch::Item(item, inline)) => {
                    if sections.contains_key(&item) {
                        violations.push(FormatViolation::new(
                            ViolationKind::StructureDrift,
                            format!("header {item} appears more than once"),
                        ));
                    }
                    let section = sections.entry(item).or_insert(Section { lines: Vec::new() });
                    if !inline.is_empty() {
                        section.lines.push((false, inline));
                    }
                    current = Some(item);
                    continue;
                }
                Some(HeaderMatch::Other) => {
                    narrative.push(line.to_string());
                    current = None;
                    continue;
                }
                None => {}
            }
        }
        match current {
            Some(item) => sections
                .get_mut(&item)
                .expect("current section exists")
                .lines
                .push((has_bullet(line), strip_bullet(line).to_string())),
            None => narrative.push(line.to_string()),
        }
    }

    let mut items = BTreeMap::new();
    for (item, section) in sections {
        let value = match item.class() {
            ItemClass::KeyFindings => key_findings_value(item, section, &mut violations, &mut narrative),
            ItemClass::Citation => {
                let joined = section
                    .lines
                    .iter()
                    .map(|(_, l)| strip_quotes(l))
                    .filter(|l| !l.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ");
                if is_not_found_statement(&joined) {
                    ItemValue::Scalar(String::new())
                } else {
                    ItemValue::Scalar(joined)
                }
            }
            ItemClass::Instrument => {
                let joined = section.lines.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join("\n");
                match Sentinel::parse(&joined) {
                    Some(s) => ItemValue::Sentinel(s),
                    None => ItemValue::Scalar(joined),
                }
            }
        };
        items.insert(item, value);
    }

    for item in instrument.items() {
        if !items.contains_key(item) {
            violations.push(FormatViolation::new(ViolationKind::MissingHeader { item: *item }, item.column_name()));
        }
    }
    if !narrative.is_empty() {
        tracing::debug!(lines = narrative.len(), "response narrative outside headers");
    }
    ParsedResponse { record: PartialRecord { items }, violations, narrative }
}

fn key_findings_value(
    item: DataItem,
    section: Section,
    violations: &mut Vec<FormatViolation>,
    narrative: &mut Vec<String>,
) -> ItemValue {
    let any_bullet = section.lines.iter().any(|(b, _)| *b);
    if !any_bullet {
        let joined = section.lines.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join(" ");
        if let Some(s) = Sentinel::parse(&joined) {
            return ItemValue::Sentinel(s);
        }
        if section.lines.is_empty() {
            return ItemValue::Excerpts(Vec::new());
        }
        if is_not_found_statement(&joined) {
            narrative.extend(section.lines.into_iter().map(|(_, l)| l));
            return ItemValue::Sentinel(Sentinel::Unstated);
        }
    }
    let mut out: Vec<Excerpt> = Vec::new();
    let mut drift = false;
    for (bullet, line) in section.lines {
        if !bullet {
            if is_not_found_statement(&line) {
                narrative.push(line);
                continue;
            }
            drift = true;
        }
        let (body, page) = split_page_ref(&line);
        let text = strip_quotes(body);
        if text.is_empty() {
            continue;
        }
        out.push(Excerpt { text: text.to_string(), order_index: out.len(), page });
    }
    if drift {
        violations.push(FormatViolation::new(
            ViolationKind::StructureDrift,
            format!("{item} has excerpt lines without bullet markers"),
        ));
    }
    ItemValue::Excerpts(out)
}

/// Drops excerpts whose normalized text repeats an earlier one; survivors
/// keep their order and are renumbered densely.
pub fn dedupe_excerpts(cell: &[Excerpt]) -> Vec<Excerpt> {
    let mut seen = std::collections::HashSet::new();
    cell.iter()
        .filter(|e| seen.insert(normalized_text(&e.text)))
        .enumerate()
        .map(|(i, e)| Excerpt { order_index: i, ..e.clone() })
        .collect()
}
