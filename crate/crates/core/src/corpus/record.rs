use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::item::{DataItem, Instrument, ItemClass};
use super::source::SourceId;
use super::CorpusError;

pub const UNSTATED: &str = "Unstated";
pub const AGGREGATED: &str = "Aggregated (not extracted)";
const AGGREGATED_SHORT: &str = "Aggregated";

/// Markers recognised at the start of an excerpt line. ASCII-like markers
/// need a following space ("-5%" and "**bold**" are not bullets).
const GLUED_BULLETS: &[char] = &['•', '·', '‣', '◦'];
const BULLETS: &[char] = &['-', '*', '–', '—', '+'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sentinel {
    Unstated,
    AggregatedNotExtracted,
}

impl Sentinel {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentinel::Unstated => UNSTATED,
            Sentinel::AggregatedNotExtracted => AGGREGATED,
        }
    }

    /// Accepts the long and short spellings, case-insensitively.
    pub fn parse(cell: &str) -> Option<Sentinel> {
        let t = cell.trim();
        if t.eq_ignore_ascii_case(UNSTATED) {
            Some(Sentinel::Unstated)
        } else if t.eq_ignore_ascii_case(AGGREGATED) || t.eq_ignore_ascii_case(AGGREGATED_SHORT) {
            Some(Sentinel::AggregatedNotExtracted)
        } else {
            None
        }
    }
}

/// A verbatim quotation extracted under one data item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub text: String,
    pub order_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<u32>,
}

impl Excerpt {
    pub fn new(text: impl Into<String>, order_index: usize) -> Self {
        Excerpt { text: text.into(), order_index, page: None }
    }
}

/// Builds a dense, ordered excerpt list from raw texts, dropping blanks.
pub fn excerpts<I, S>(texts: I) -> Vec<Excerpt>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    texts
        .into_iter()
        .map(|s| s.as_ref().trim().to_string())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| Excerpt::new(s, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItemValue {
    Scalar(String),
    Excerpts(Vec<Excerpt>),
    Sentinel(Sentinel),
}

impl ItemValue {
    /// Default value for an item that was not output at all.
    pub fn absent(item: DataItem) -> ItemValue {
        match item.class() {
            ItemClass::KeyFindings => ItemValue::Excerpts(Vec::new()),
            _ => ItemValue::Scalar(String::new()),
        }
    }

    /// True when the cell carries no extracted content (blank, empty list or
    /// a sentinel).
    pub fn is_empty(&self) -> bool {
        match self {
            ItemValue::Scalar(s) => s.trim().is_empty(),
            ItemValue::Excerpts(v) => v.is_empty(),
            ItemValue::Sentinel(_) => true,
        }
    }

    pub fn excerpts(&self) -> &[Excerpt] {
        match self {
            ItemValue::Excerpts(v) => v,
            _ => &[],
        }
    }

    pub fn scalar(&self) -> Option<&str> {
        match self {
            ItemValue::Scalar(s) => Some(s),
            _ => None,
        }
    }

    pub fn sentinel(&self) -> Option<Sentinel> {
        match self {
            ItemValue::Sentinel(s) => Some(*s),
            _ => None,
        }
    }

    /// Decodes a CSV cell for the given item. Input is NFC-normalized.
    pub fn decode(item: DataItem, cell: &str) -> ItemValue {
        let cell: String = cell.nfc().collect();
        if item.accepts_sentinel() {
            if let Some(s) = Sentinel::parse(&cell) {
                return ItemValue::Sentinel(s);
            }
        }
        match item.class() {
            ItemClass::KeyFindings => ItemValue::Excerpts(excerpts(cell.lines().map(strip_bullet))),
            ItemClass::Citation => ItemValue::Scalar(cell.trim().to_string()),
            ItemClass::Instrument => ItemValue::Scalar(cell),
        }
    }

    /// Encodes into the canonical cell text: excerpts as `• a\n• b`,
    /// sentinels in their long form.
    pub fn encode(&self) -> String {
        match self {
            ItemValue::Scalar(s) => s.clone(),
            ItemValue::Sentinel(s) => s.as_str().to_string(),
            ItemValue::Excerpts(v) => {
                let mut out = String::new();
                for (i, e) in v.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    out.push_str("• ");
                    out.push_str(&e.text);
                }
                out
            }
        }
    }

    fn check(&self, item: DataItem) -> Result<(), String> {
        match (self, item.class()) {
            (ItemValue::Excerpts(_), ItemClass::Citation) => Err("citation item holds an excerpt list".into()),
            (ItemValue::Sentinel(_), ItemClass::Citation) => Err("citation item holds a sentinel".into()),
            (ItemValue::Excerpts(v), _) => {
                for (i, e) in v.iter().enumerate() {
                    if e.order_index != i {
                        return Err(format!("excerpt order_index {} at position {i}", e.order_index));
                    }
                    if e.text.trim().is_empty() {
                        return Err(format!("empty excerpt at position {i}"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Removes a leading bullet or list number ("•", "-", "*", "1.", "2)").
pub fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix(GLUED_BULLETS) {
        return rest.trim_start();
    }
    if let Some(rest) = t.strip_prefix(BULLETS) {
        if rest.is_empty() || rest.starts_with(char::is_whitespace) {
            return rest.trim_start();
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 && digits <= 3 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if r.is_empty() || r.starts_with(char::is_whitespace) {
                return r.trim_start();
            }
        }
    }
    t
}

/// Whether a line starts with a bullet or list number.
pub fn has_bullet(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && strip_bullet(t).len() != t.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    HumanBaseline,
    #[serde(rename = "protocol")]
    LlmProtocol,
    #[serde(rename = "extended")]
    LlmExtendedProtocol,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::HumanBaseline => "human-baseline",
            Provenance::LlmProtocol => "protocol",
            Provenance::LlmExtendedProtocol => "extended",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Provenance::HumanBaseline => "Human (baseline)",
            Provenance::LlmProtocol => "LLM (protocol)",
            Provenance::LlmExtendedProtocol => "LLM (extended protocol)",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human-baseline" | "baseline" | "human" => Ok(Provenance::HumanBaseline),
            "protocol" | "llm-protocol" | "simple" => Ok(Provenance::LlmProtocol),
            "extended" | "llm-extended-protocol" | "extended-protocol" => Ok(Provenance::LlmExtendedProtocol),
            other => Err(format!("unknown provenance {other:?}")),
        }
    }
}

/// Per-source extraction covering every item of an instrument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub source_id: SourceId,
    pub source_filename: String,
    pub provenance: Provenance,
    items: BTreeMap<DataItem, ItemValue>,
}

impl ExtractionRecord {
    /// Validates that `items` covers `instrument` exactly and that every value
    /// fits its item class.
    pub fn new(
        source_filename: impl Into<String>,
        provenance: Provenance,
        items: BTreeMap<DataItem, ItemValue>,
        instrument: &Instrument,
    ) -> Result<Self, CorpusError> {
        let source_filename = source_filename.into();
        let source_id = SourceId::from_filename(&source_filename);
        for item in instrument.items() {
            match items.get(item) {
                None => {
                    return Err(CorpusError::InvalidRecord {
                        source_id,
                        reason: format!("missing value for {item}"),
                    })
                }
                Some(v) => v.check(*item).map_err(|reason| CorpusError::InvalidRecord {
                    source_id: source_id.clone(),
                    reason: format!("{item}: {reason}"),
                })?,
            }
        }
        if let Some(extra) = items.keys().find(|k| !instrument.contains(**k)) {
            return Err(CorpusError::InvalidRecord {
                source_id,
                reason: format!("{extra} is not part of the instrument"),
            });
        }
        Ok(ExtractionRecord { source_id, source_filename, provenance, items })
    }

    /// A record with every item absent.
    pub fn empty(source_filename: impl Into<String>, provenance: Provenance, instrument: &Instrument) -> Self {
        let items = instrument.items().iter().map(|i| (*i, ItemValue::absent(*i))).collect();
        let source_filename = source_filename.into();
        ExtractionRecord { source_id: SourceId::from_filename(&source_filename), source_filename, provenance, items }
    }

    pub fn get(&self, item: DataItem) -> Option<&ItemValue> {
        self.items.get(&item)
    }

    /// Replaces the value of an item already in the record.
    pub fn set(&mut self, item: DataItem, value: ItemValue) -> Result<(), CorpusError> {
        if !self.items.contains_key(&item) {
            return Err(CorpusError::InvalidRecord {
                source_id: self.source_id.clone(),
                reason: format!("{item} is not part of the instrument"),
            });
        }
        value.check(item).map_err(|reason| CorpusError::InvalidRecord {
            source_id: self.source_id.clone(),
            reason: format!("{item}: {reason}"),
        })?;
        self.items.insert(item, value);
        Ok(())
    }

    pub fn items(&self) -> impl Iterator<Item = (DataItem, &ItemValue)> {
        self.items.iter().map(|(k, v)| (*k, v))
    }

    pub fn covers(&self, instrument: &Instrument) -> bool {
        instrument.items().iter().all(|i| self.items.contains_key(i))
    }

    pub fn excerpts(&self, item: DataItem) -> &[Excerpt] {
        self.items.get(&item).map(ItemValue::excerpts).unwrap_or(&[])
    }

    /// Restricts the record to a sub-instrument.
    pub fn project(&self, instrument: &Instrument) -> Result<ExtractionRecord, CorpusError> {
        let items = instrument
            .items()
            .iter()
            .map(|i| (*i, self.items.get(i).cloned().unwrap_or_else(|| ItemValue::absent(*i))))
            .collect();
        ExtractionRecord::new(self.source_filename.clone(), self.provenance, items, instrument)
    }
}
