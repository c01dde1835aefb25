use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Stable identity of an evidence source: its filename stem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(String);

impl SourceId {
    pub fn new(id: impl Into<String>) -> Self {
        SourceId(id.into())
    }

    pub fn from_filename(filename: &str) -> Self {
        let name = Path::new(filename).file_name().and_then(|n| n.to_str()).unwrap_or(filename);
        let stem = match name.rfind('.') {
            Some(pos) if pos > 0 => &name[..pos],
            _ => name,
        };
        SourceId(stem.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A named binary payload handed to the gateway.
#[derive(Clone, PartialEq, Eq)]
pub struct Attachment {
    pub logical_name: String,
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl Attachment {
    pub fn new(logical_name: impl Into<String>, media_type: impl Into<String>, bytes: Vec<u8>) -> Self {
        Attachment { logical_name: logical_name.into(), media_type: media_type.into(), bytes }
    }

    pub fn text(logical_name: impl Into<String>, text: &str) -> Self {
        Attachment::new(logical_name, "text/plain", text.as_bytes().to_vec())
    }

    /// Reads a file, guessing the media type from its extension.
    pub fn from_path(logical_name: impl Into<String>, path: &Path) -> std::io::Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Attachment::new(logical_name, media_type_for(path), bytes))
    }
}

impl fmt::Debug for Attachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Attachment")
            .field("logical_name", &self.logical_name)
            .field("media_type", &self.media_type)
            .field("len", &self.bytes.len())
            .finish()
    }
}

pub(crate) fn media_type_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pdf") => "application/pdf",
        Some("csv") => "text/csv",
        Some("docx") => "application/vnd.openxmlformats-officedocument.wordprocessingml.document",
        Some("txt") | Some("md") => "text/plain",
        _ => "application/octet-stream",
    }
}

/// One document of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceSource {
    pub source_id: SourceId,
    pub filename: String,
    /// Surname-based key deciding processing and CSV row order.
    pub author_sort_key: String,
    /// Pre-extracted document text.
    pub full_text: String,
    pub attachment: Option<Attachment>,
    /// The review protocol itself is also an included source.
    pub is_protocol: bool,
}

impl EvidenceSource {
    pub fn new(
        filename: impl Into<String>,
        author_sort_key: impl Into<String>,
        full_text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let filename = filename.into();
        let source = EvidenceSource {
            source_id: SourceId::from_filename(&filename),
            filename,
            author_sort_key: author_sort_key.into(),
            full_text: full_text.into(),
            attachment: None,
            is_protocol: false,
        };
        source.validate()?;
        Ok(source)
    }

    pub fn with_attachment(mut self, attachment: Attachment) -> Self {
        self.attachment = Some(attachment);
        self
    }

    pub fn protocol(mut self) -> Self {
        self.is_protocol = true;
        self
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.author_sort_key.trim().is_empty() {
            return Err(CorpusError::InvalidSource {
                filename: self.filename.clone(),
                reason: "author_sort_key is empty".into(),
            });
        }
        if self.full_text.trim().is_empty() && self.attachment.is_none() {
            return Err(CorpusError::InvalidSource {
                filename: self.filename.clone(),
                reason: "no full_text and no attachment".into(),
            });
        }
        Ok(())
    }

    /// What gets uploaded for this source: the binary when present,
    /// otherwise the extracted text.
    pub fn upload(&self) -> Attachment {
        match &self.attachment {
            Some(a) => Attachment { logical_name: self.filename.clone(), ..a.clone() },
            None => Attachment::text(self.filename.clone(), &self.full_text),
        }
    }

    fn sort_key(&self) -> (String, &str) {
        (self.author_sort_key.to_lowercase(), self.source_id.as_str())
    }
}

/// Sorts by author surname, case-insensitively, ties by source id.
pub fn sort_by_author(sources: &mut [EvidenceSource]) {
    sources.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// A validated set of evidence sources with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    sources: Vec<EvidenceSource>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    sources: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    filename: String,
    author_sort_key: String,
    #[serde(default)]
    text_path: Option<PathBuf>,
    #[serde(default)]
    full_text: Option<String>,
    #[serde(default)]
    attachment_path: Option<PathBuf>,
    #[serde(default)]
    is_protocol: bool,
}

impl Corpus {
    pub fn new(sources: Vec<EvidenceSource>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for s in &sources {
            s.validate()?;
            if !seen.insert(s.source_id.clone()) {
                return Err(CorpusError::DuplicateSource(s.source_id.clone()));
            }
        }
        Ok(Corpus { sources })
    }

    /// Loads a JSON manifest; relative paths resolve against its directory.
    pub fn load_manifest(path: &Path) -> Result<Self, CorpusError> {
        let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&raw)
            .map_err(|e| CorpusError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut sources = Vec::with_capacity(manifest.sources.len());
        for entry in manifest.sources {
            let full_text = match (&entry.full_text, &entry.text_path) {
                (Some(t), _) => t.clone(),
                (None, Some(p)) => {
                    let p = base.join(p);
                    fs::read_to_string(&p).map_err(|e| CorpusError::io(&p, e))?
                }
                (None, None) => String::new(),
            };
            let attachment = match &entry.attachment_path {
                Some(p) => {
                    let p = base.join(p);
                    Some(Attachment::from_path(entry.filename.clone(), &p).map_err(|e| CorpusError::io(&p, e))?)
                }
                None => None,
            };
            sources.push(EvidenceSource {
                source_id: SourceId::from_filename(&entry.filename),
                filename: entry.filename,
                author_sort_key: entry.author_sort_key,
                full_text,
                attachment,
                is_protocol: entry.is_protocol,
            });
        }
        Corpus::new(sources)
    }

    pub fn sources(&self) -> &[EvidenceSource] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn get(&self, id: &SourceId) -> Option<&EvidenceSource> {
        self.sources.iter().find(|s| &s.source_id == id)
    }

    pub fn by_filename(&self, filename: &str) -> Option<&EvidenceSource> {
        let id = SourceId::from_filename(filename.trim());
        self.get(&id)
    }

    /// Sources in author-alphabetical order.
    pub fn sorted(&self) -> Vec<EvidenceSource> {
        let mut out = self.sources.clone();
        sort_by_author(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_id_is_filename_stem() {
        assert_eq!(SourceId::from_filename("Smith 2020.pdf").as_str(), "Smith 2020");
        assert_eq!(SourceId::from_filename("dir/a.b.pdf").as_str(), "a.b");
        assert_eq!(SourceId::from_filename("noext").as_str(), "noext");
    }

    #[test]
    fn rejects_empty_sort_key_and_empty_text() {
        assert!(EvidenceSource::new("a.pdf", " ", "text").is_err());
        assert!(EvidenceSource::new("a.pdf", "A", "  ").is_err());
        let with_bin = EvidenceSource {
            attachment: Some(Attachment::new("a.pdf", "application/pdf", vec![1, 2])),
            ..EvidenceSource::new("a.pdf", "A", "x").unwrap()
        };
        let mut no_text = with_bin.clone();
        no_text.full_text.clear();
        assert!(Corpus::new(vec![no_text]).is_ok());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = EvidenceSource::new("a.pdf", "A", "x").unwrap();
        let b = EvidenceSource::new("a.txt", "B", "y").unwrap();
        assert!(matches!(Corpus::new(vec![a, b]), Err(CorpusError::DuplicateSource(_))));
    }
}
