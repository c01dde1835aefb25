use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::corpus::Attachment;

pub const PROTOCOL_DOC: &str = "Scoping review protocol.pdf";
pub const LLM_INSTRUMENT_DOC: &str = "Data extraction instrument (LLM).docx";
pub const INSTRUCTIONS_DOC: &str = "Data extraction and presentation instructions.docx";
pub const EXAMPLES_DOC: &str = "Data extraction examples.csv";
pub const REVIEW_INSTRUMENT_DOC: &str = "template-extraction-updated.docx";

/// Sources uploaded together with one review prompt.
pub const MAX_REVIEW_SOURCES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PackageKind {
    /// Protocol, LLM instrument, instructions, examples CSV.
    ExtendedWorkspace,
    /// Protocol plus the one target source.
    SimplePair,
    /// Protocol, review instrument, extraction CSV and up to five sources.
    ReviewBatch,
}

/// Ordered set of documents uploaded with a prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentPackage {
    pub kind: PackageKind,
    pub documents: Vec<Attachment>,
}

/// Logical names of a package, without payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageManifest {
    pub kind: PackageKind,
    pub names: Vec<String>,
}

impl DocumentPackage {
    pub fn extended_workspace(
        protocol: Attachment,
        instrument: Attachment,
        instructions: Attachment,
        examples: Attachment,
    ) -> Self {
        DocumentPackage {
            kind: PackageKind::ExtendedWorkspace,
            documents: vec![
                rename(protocol, PROTOCOL_DOC),
                rename(instrument, LLM_INSTRUMENT_DOC),
                rename(instructions, INSTRUCTIONS_DOC),
                rename(examples, EXAMPLES_DOC),
            ],
        }
    }

    pub fn simple_pair(protocol: Attachment, source: Attachment) -> Self {
        DocumentPackage { kind: PackageKind::SimplePair, documents: vec![rename(protocol, PROTOCOL_DOC), source] }
    }

    pub fn review_batch(
        protocol: Attachment,
        review_instrument: Attachment,
        extraction_csv: Attachment,
        sources: Vec<Attachment>,
    ) -> Result<Self, PromptError> {
        if sources.len() > MAX_REVIEW_SOURCES {
            return Err(PromptError::BatchTooLarge(sources.len()));
        }
        let mut documents =
            vec![rename(protocol, PROTOCOL_DOC), rename(review_instrument, REVIEW_INSTRUMENT_DOC), extraction_csv];
        documents.extend(sources);
        Ok(DocumentPackage { kind: PackageKind::ReviewBatch, documents })
    }

    pub fn manifest(&self) -> PackageManifest {
        PackageManifest { kind: self.kind, names: self.documents.iter().map(|d| d.logical_name.clone()).collect() }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

fn rename(mut a: Attachment, name: &str) -> Attachment {
    a.logical_name = name.to_string();
    a
}

/// File locations of the extended-approach project documents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspacePaths {
    pub protocol: Option<PathBuf>,
    pub llm_instrument: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub examples: Option<PathBuf>,
}

/// Reads the four workspace documents in upload order.
pub fn build_extended_package(config: &WorkspacePaths) -> Result<DocumentPackage, PromptError> {
    let load = |path: &Option<PathBuf>, name: &str| -> Result<Attachment, PromptError> {
        let p: &Path = path.as_deref().ok_or_else(|| PromptError::MissingDocument(name.to_string()))?;
        Attachment::from_path(name, p).map_err(|_| PromptError::MissingDocument(name.to_string()))
    };
    Ok(DocumentPackage::extended_workspace(
        load(&config.protocol, PROTOCOL_DOC)?,
        load(&config.llm_instrument, LLM_INSTRUMENT_DOC)?,
        load(&config.instructions, INSTRUCTIONS_DOC)?,
        load(&config.examples, EXAMPLES_DOC)?,
    ))
}
