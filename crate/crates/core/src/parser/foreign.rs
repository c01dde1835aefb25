//! Cross-source contamination check: an excerpt that is found in some other
//! corpus or project document but not in its own target source.

use serde::{Deserialize, Serialize};

use super::{FormatViolation, ViolationKind};
use crate::corpus::{Corpus, EvidenceSource, ExtractionRecord, SourceId};
use crate::evaluation::text::{longest_common_run, normalize, normalized_text, Interner};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForeignContentConfig {
    /// Containment at or above which an excerpt counts as found in a document.
    pub threshold: f64,
    /// Excerpts shorter than this (in tokens) are never flagged.
    pub min_tokens: usize,
}

impl Default for ForeignContentConfig {
    fn default() -> Self {
        ForeignContentConfig { threshold: 0.8, min_tokens: 8 }
    }
}

struct IndexedDoc {
    id: SourceId,
    raw: String,
    normalized: String,
    tokens: Vec<u32>,
}

/// Tokenized corpus and project documents, built once per run.
pub struct DocumentIndex {
    interner: Interner,
    docs: Vec<IndexedDoc>,
}

impl DocumentIndex {
    /// Corpus sources first (in corpus order), then project documents given
    /// as `(name, text)` pairs.
    pub fn new(corpus: &Corpus, project_docs: &[(&str, &str)]) -> Self {
        let mut index = DocumentIndex { interner: Interner::default(), docs: Vec::new() };
        for s in corpus.sources() {
            index.push(s.source_id.clone(), &s.full_text);
        }
        for (name, text) in project_docs {
            index.push(SourceId::new(*name), text);
        }
        index
    }

    fn push(&mut self, id: SourceId, text: &str) {
        let normalized = normalized_text(text);
        let tokens = self.interner.intern(&normalize(&normalized));
        self.docs.push(IndexedDoc { id, raw: text.to_string(), normalized, tokens });
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn tokens_of(&mut self, text: &str) -> Vec<u32> {
        self.interner.intern(&normalize(text))
    }

    fn find(&self, id: &SourceId) -> Option<&IndexedDoc> {
        self.docs.iter().find(|d| &d.id == id)
    }

    /// Containment of `text` in the named document; 0 when unknown.
    pub fn containment_in(&mut self, text: &str, id: &SourceId) -> f64 {
        let toks = self.tokens_of(text);
        match self.find(id) {
            Some(d) => ratio(&toks, &d.tokens),
            None => 0.0,
        }
    }

    /// Whether `text` occurs in the document as a verbatim substring, before
    /// or after normalization.
    pub fn is_verbatim_in(&self, text: &str, id: &SourceId) -> bool {
        let Some(d) = self.find(id) else { return false };
        let t = text.trim();
        if t.is_empty() {
            return true;
        }
        let n = normalized_text(t);
        d.raw.contains(t) || (!n.is_empty() && d.normalized.contains(&n))
    }

    /// The document other than `target` that best contains `text`, if it
    /// does so at or above the threshold while the target does not.
    pub fn foreign_match(&mut self, text: &str, target: &SourceId, cfg: &ForeignContentConfig) -> Option<(SourceId, f64)> {
        let toks = self.tokens_of(text);
        if toks.len() < cfg.min_tokens || self.is_verbatim_in(text, target) {
            return None;
        }
        let in_target = self.find(target).map(|d| ratio(&toks, &d.tokens)).unwrap_or(0.0);
        if in_target >= cfg.threshold {
            return None;
        }
        let mut best: Option<(&IndexedDoc, f64)> = None;
        for d in self.docs.iter().filter(|d| &d.id != target) {
            let c = ratio(&toks, &d.tokens);
            if c >= cfg.threshold && best.is_none_or(|(_, b)| c > b) {
                best = Some((d, c));
            }
        }
        best.map(|(d, c)| (d.id.clone(), c))
    }

    /// Flags every key-findings excerpt of `record` that belongs to another
    /// document.
    pub fn detect(&mut self, record: &ExtractionRecord, target: &SourceId, cfg: &ForeignContentConfig) -> Vec<FormatViolation> {
        let mut out = Vec::new();
        for (item, value) in record.items() {
            for e in value.excerpts() {
                if let Some((id, c)) = self.foreign_match(&e.text, target, cfg) {
                    out.push(FormatViolation::new(
                        ViolationKind::ForeignContent { source_id: id },
                        format!("{item} excerpt {} (containment {c:.2})", e.order_index),
                    ));
                }
            }
        }
        out
    }
}

/// Share of the excerpt covered by its longest run inside the document.
fn ratio(excerpt: &[u32], doc: &[u32]) -> f64 {
    if excerpt.is_empty() || doc.is_empty() {
        return 0.0;
    }
    longest_common_run(excerpt, doc) as f64 / excerpt.len().min(doc.len()) as f64
}

/// One-shot form of [`DocumentIndex::detect`].
pub fn detect_foreign_content(
    record: &ExtractionRecord,
    target: &EvidenceSource,
    corpus: &Corpus,
    project_docs: &[(&str, &str)],
    cfg: &ForeignContentConfig,
) -> Vec<FormatViolation> {
    DocumentIndex::new(corpus, project_docs).detect(record, &target.source_id, cfg)
}
