//! Prompt templates and the document packages uploaded alongside them.
//!
//! Template bodies live in `templates/*.txt`, one file per template id.
//! Lines starting with `#!` are metadata (`id`, `version`, `paraphrase`)
//! and are not part of the body.

mod package;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::EvidenceSource;
use crate::parser::{FormatViolation, ViolationKind};

pub use package::{
    build_extended_package, DocumentPackage, PackageKind, PackageManifest, WorkspacePaths, EXAMPLES_DOC,
    INSTRUCTIONS_DOC, LLM_INSTRUMENT_DOC, MAX_REVIEW_SOURCES, PROTOCOL_DOC, REVIEW_INSTRUMENT_DOC,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no value")]
    UnboundPlaceholder(String),
    #[error("objective hint is empty")]
    EmptyHint,
    #[error("review batch {0} is not one of 1-4")]
    InvalidBatch(u8),
    #[error("document {0:?} is missing")]
    MissingDocument(String),
    #[error("review batch holds {0} sources; at most {MAX_REVIEW_SOURCES} can be uploaded together")]
    BatchTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    SimpleV1_0,
    SimpleV1_1,
    ExtendedRole,
    ExtendedPerSource,
    ReviewBatch1_2,
    ReviewBatch3,
    ReviewBatch4,
    CorrectiveAdhere,
    CorrectiveSourceOnly,
    CorrectiveFormat,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::SimpleV1_0,
        TemplateId::SimpleV1_1,
        TemplateId::ExtendedRole,
        TemplateId::ExtendedPerSource,
        TemplateId::ReviewBatch1_2,
        TemplateId::ReviewBatch3,
        TemplateId::ReviewBatch4,
        TemplateId::CorrectiveAdhere,
        TemplateId::CorrectiveSourceOnly,
        TemplateId::CorrectiveFormat,
    ];

    fn raw(self) -> &'static str {
        match self {
            TemplateId::SimpleV1_0 => include_str!("../../templates/simple_v1_0.txt"),
            TemplateId::SimpleV1_1 => include_str!("../../templates/simple_v1_1.txt"),
            TemplateId::ExtendedRole => include_str!("../../templates/extended_role.txt"),
            TemplateId::ExtendedPerSource => include_str!("../../templates/extended_per_source.txt"),
            TemplateId::ReviewBatch1_2 => include_str!("../../templates/review_batch1_2.txt"),
            TemplateId::ReviewBatch3 => include_str!("../../templates/review_batch3.txt"),
            TemplateId::ReviewBatch4 => include_str!("../../templates/review_batch4.txt"),
            TemplateId::CorrectiveAdhere => include_str!("../../templates/corrective_adhere.txt"),
            TemplateId::CorrectiveSourceOnly => include_str!("../../templates/corrective_source_only.txt"),
            TemplateId::CorrectiveFormat => include_str!("../../templates/corrective_format.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A parsed template resource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub version: u32,
    /// Set for bodies reconstructed from a summary rather than copied.
    pub paraphrase: bool,
    pub body: String,
}

/// Metadata lines and body of a `#!`-annotated resource file.
pub(crate) fn split_resource(raw: &str) -> (BTreeMap<String, String>, String) {
    let mut meta = BTreeMap::new();
    let mut body = Vec::new();
    for line in raw.lines() {
        match line.strip_prefix("#!") {
            Some(m) if body.is_empty() => {
                let (k, v) = m.split_once(':').unwrap_or((m, ""));
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            _ => body.push(line),
        }
    }
    (meta, body.join("\n"))
}

impl PromptTemplate {
    fn parse(id: TemplateId) -> PromptTemplate {
        let (meta, body) = split_resource(id.raw());
        PromptTemplate {
            id,
            version: meta.get("version").and_then(|v| v.parse().ok()).unwrap_or(1),
            paraphrase: meta.contains_key("paraphrase"),
            body,
        }
    }

    /// Names of the `{placeholder}` markers in the body, in order of first
    /// appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for name in placeholder_names(&self.body) {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<RenderedPrompt, PromptError> {
        let mut text = String::with_capacity(self.body.len() + 64);
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find('{') {
            text.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            match after.find('}').map(|end| &after[..end]).filter(|n| is_placeholder_name(n)) {
                Some(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::UnboundPlaceholder(name.to_string()))?;
                    text.push_str(value);
                    rest = &after[name.len() + 1..];
                }
                None => {
                    text.push('{');
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        Ok(RenderedPrompt { template_id: self.id, version: self.version, text })
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

fn placeholder_names(text: &str) -> impl Iterator<Item = &str> {
    text.match_indices('{').filter_map(move |(i, _)| {
        let after = &text[i + 1..];
        after.find('}').map(|end| &after[..end]).filter(|n| is_placeholder_name(n))
    })
}

/// Whether a string still contains an unresolved `{name}` marker.
pub fn has_unresolved_placeholder(text: &str) -> bool {
    placeholder_names(text).next().is_some()
}

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    static TEMPLATES: OnceLock<Vec<PromptTemplate>> = OnceLock::new();
    let all = TEMPLATES.get_or_init(|| TemplateId::ALL.iter().map(|id| PromptTemplate::parse(*id)).collect());
    &all[TemplateId::ALL.iter().position(|t| *t == id).expect("every id is listed")]
}

/// Template id to version, echoed into run headers.
pub fn template_versions() -> BTreeMap<String, u32> {
    TemplateId::ALL.iter().map(|id| (id.to_string(), template(*id).version)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub version: u32,
    pub text: String,
}

/// Simple protocol prompt: V1.0 for the first source of a run, V1.1 after.
/// The package pairs the protocol with the target source.
pub fn build_simple_prompt(
    source: &EvidenceSource,
    first_in_run: bool,
    protocol: crate::corpus::Attachment,
) -> (RenderedPrompt, DocumentPackage) {
    let id = if first_in_run { TemplateId::SimpleV1_0 } else { TemplateId::SimpleV1_1 };
    let prompt = template(id)
        .render(&[("source_filename", &source.filename)])
        .expect("simple templates only use source_filename");
    (prompt, DocumentPackage::simple_pair(protocol, source.upload()))
}

/// The role prompt sent with the extended workspace package.
pub fn build_extended_role_prompt() -> RenderedPrompt {
    template(TemplateId::ExtendedRole).render(&[]).expect("role prompt has no placeholders")
}

/// Prompt accompanying each source in the extended approach.
pub fn build_extended_per_source_prompt(
    _source: &EvidenceSource,
    objective_hint: &str,
) -> Result<RenderedPrompt, PromptError> {
    let hint = objective_hint.trim();
    if hint.is_empty() {
        return Err(PromptError::EmptyHint);
    }
    template(TemplateId::ExtendedPerSource).render(&[("objective_hint", hint)])
}

pub fn review_template_for(batch_no: u8) -> Result<TemplateId, PromptError> {
    match batch_no {
        1 | 2 => Ok(TemplateId::ReviewBatch1_2),
        3 => Ok(TemplateId::ReviewBatch3),
        4 => Ok(TemplateId::ReviewBatch4),
        other => Err(PromptError::InvalidBatch(other)),
    }
}

pub fn build_review_prompt(batch_no: u8, spreadsheet_name: &str) -> Result<RenderedPrompt, PromptError> {
    template(review_template_for(batch_no)?).render(&[("spreadsheet_name", spreadsheet_name)])
}

/// Picks at most one corrective prompt. Foreign content outranks structure
/// drift, which outranks everything else.
pub fn select_corrective_prompt(violations: &[FormatViolation]) -> Option<RenderedPrompt> {
    let rank = |v: &FormatViolation| match v.kind {
        ViolationKind::ForeignContent { .. } => 0,
        ViolationKind::StructureDrift => 1,
        _ => 2,
    };
    let id = match violations.iter().map(rank).min()? {
        0 => TemplateId::CorrectiveSourceOnly,
        1 => TemplateId::CorrectiveFormat,
        _ => TemplateId::CorrectiveAdhere,
    };
    Some(template(id).render(&[]).expect("corrective templates have no placeholders"))
}

/// Step-by-step extraction and presentation instructions shipped with the
/// crate, for workspaces that do not provide their own copy.
pub fn default_instructions() -> String {
    split_resource(include_str!("../../resources/instructions.txt")).1
}

/// Plain-text rendering of the LLM extraction instrument.
pub fn default_llm_instrument() -> String {
    split_resource(include_str!("../../resources/llm_instrument.txt")).1
}
