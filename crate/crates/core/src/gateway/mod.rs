//! Chat LLM access with document attachments, conversation history, a
//! token budget that signals rollover, and record/replay.

#[cfg(feature = "http")]
mod http;
mod replay;
mod runlog;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Attachment;
use crate::prompts::{DocumentPackage, PackageManifest};

#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig};
pub use replay::ReplayBackend;
pub use runlog::{read_log, Clock, LogEntry, RunLog};

pub const DEFAULT_BUDGET: u64 = 150_000;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("token budget exceeded ({estimate} > {budget}); start a new conversation")]
    BudgetExceeded { estimate: u64, budget: u64 },
    #[error("backend error (status {status}): {message}")]
    BackendError { status: u16, message: String },
    #[error("no recorded response for request digest {0}")]
    ReplayMiss(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("replay fixture: {0}")]
    Fixture(String),
    #[error("run log: {0}")]
    Log(#[from] std::io::Error),
}

impl GatewayError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::BackendError { status, .. } => *status == 0 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// Decoding settings passed through to the backend and recorded verbatim.
/// None of them has a default value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub attachments: Vec<Attachment>,
}

impl Turn {
    pub fn attachment_names(&self) -> Vec<String> {
        self.attachments.iter().map(|a| a.logical_name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    turns: Vec<Turn>,
    token_estimate: u64,
    carried_package: Option<DocumentPackage>,
    /// Documents uploaded with the next user turn.
    pending: Vec<Attachment>,
}

impl Conversation {
    pub fn new(id: impl Into<String>) -> Self {
        Conversation { id: id.into(), turns: Vec::new(), token_estimate: 0, carried_package: None, pending: Vec::new() }
    }

    /// A conversation whose first user turn uploads `package`, and whose
    /// rollovers re-upload it.
    pub fn with_package(id: impl Into<String>, package: DocumentPackage) -> Self {
        let mut c = Conversation::new(id);
        c.pending = package.documents.clone();
        c.carried_package = Some(package);
        c
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn token_estimate(&self) -> u64 {
        self.token_estimate
    }

    pub fn carried_manifest(&self) -> Option<PackageManifest> {
        self.carried_package.as_ref().map(DocumentPackage::manifest)
    }

    pub fn pending_attachments(&self) -> &[Attachment] {
        &self.pending
    }

    /// Fresh conversation carrying the same package, re-attached to the
    /// first turn.
    pub fn rollover(&self, new_id: impl Into<String>) -> Conversation {
        match &self.carried_package {
            Some(p) => Conversation::with_package(new_id, p.clone()),
            None => Conversation::new(new_id),
        }
    }
}

/// Heuristic token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

fn estimate_attachment(a: &Attachment) -> u64 {
    (a.bytes.len() as u64).div_ceil(4)
}

/// Replay key: SHA-256 over the prompt and the attachment logical names.
/// Attachment bytes are deliberately excluded.
pub fn request_digest(prompt: &str, attachment_names: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    for n in attachment_names {
        h.update([0u8]);
        h.update(n.as_bytes());
    }
    hex::encode(h.finalize())
}

/// What a backend sees for one exchange.
pub struct ChatRequest<'a> {
    pub conversation_id: &'a str,
    pub history: &'a [Turn],
    pub prompt: &'a str,
    pub attachments: &'a [Attachment],
    pub digest: &'a str,
    pub params: &'a DecodingParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<Usage>,
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest<'_>) -> Result<BackendReply, GatewayError>;
}

/// Location of an assistant turn in the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRef {
    pub conversation_id: String,
    pub turn_index: usize,
    pub log_line: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub transcript_ref: TranscriptRef,
}

pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    log: RunLog,
    budget: u64,
    params: DecodingParams,
    next_id: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>, log: RunLog) -> Self {
        Gateway { backend, log, budget: DEFAULT_BUDGET, params: DecodingParams::default(), next_id: AtomicU64::new(1) }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_params(mut self, params: DecodingParams) -> Self {
        self.params = params;
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    fn next_id(&self) -> String {
        format!("conv-{:04}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    pub fn conversation(&self) -> Conversation {
        Conversation::new(self.next_id())
    }

    pub fn conversation_with_package(&self, package: DocumentPackage) -> Conversation {
        Conversation::with_package(self.next_id(), package)
    }

    pub fn rollover(&self, conv: &Conversation) -> Conversation {
        conv.rollover(self.next_id())
    }

    /// One user turn and its reply. The budget is checked before the
    /// backend is called; both turns are logged before returning.
    pub fn send(
        &self,
        conv: &mut Conversation,
        prompt: &str,
        attachments: Vec<Attachment>,
    ) -> Result<GatewayResponse, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let mut uploads = conv.pending.clone();
        uploads.extend(attachments);
        let estimate = conv.token_estimate
            + estimate_tokens(prompt)
            + uploads.iter().map(estimate_attachment).sum::<u64>();
        if estimate > self.budget {
            return Err(GatewayError::BudgetExceeded { estimate, budget: self.budget });
        }

        let names: Vec<String> = uploads.iter().map(|a| a.logical_name.clone()).collect();
        let digest = request_digest(prompt, &names);
        self.log.append(&conv.id, Role::User, prompt, &names, &digest, Some(&self.params))?;
        let reply = self.backend.complete(&ChatRequest {
            conversation_id: &conv.id,
            history: &conv.turns,
            prompt,
            attachments: &uploads,
            digest: &digest,
            params: &self.params,
        })?;
        let line = self.log.append(&conv.id, Role::Assistant, &reply.text, &[], &digest, None)?;

        conv.pending.clear();
        conv.turns.push(Turn { role: Role::User, text: prompt.to_string(), attachments: uploads });
        conv.turns.push(Turn { role: Role::Assistant, text: reply.text.clone(), attachments: Vec::new() });
        conv.token_estimate = estimate + estimate_tokens(&reply.text);
        Ok(GatewayResponse {
            text: reply.text,
            usage: reply.usage,
            transcript_ref: TranscriptRef { conversation_id: conv.id.clone(), turn_index: conv.turns.len() - 1, log_line: line },
        })
    }
}
