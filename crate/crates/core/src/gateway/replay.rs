use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use super::runlog::read_log;
use super::{request_digest, BackendReply, ChatBackend, ChatRequest, GatewayError, Role};

/// Serves recorded assistant replies keyed by request digest. Repeated
/// identical requests consume successive recordings.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    /// Builds from a transcript in run-log format: each user entry is paired
    /// with the next assistant entry of the same conversation.
    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        let entries = read_log(text).map_err(|e| GatewayError::Fixture(e.to_string()))?;
        let mut open: HashMap<String, String> = HashMap::new();
        let backend = ReplayBackend::default();
        for e in entries {
            match e.role {
                Role::User => {
                    open.insert(e.conversation_id, e.digest);
                }
                Role::Assistant => {
                    let digest = open.remove(&e.conversation_id).ok_or_else(|| {
                        GatewayError::Fixture(format!("assistant turn without request in {}", e.conversation_id))
                    })?;
                    backend.push(digest, e.text);
                }
            }
        }
        Ok(backend)
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Records a reply for a prompt with the given attachment names.
    pub fn record(&self, prompt: &str, attachment_names: &[String], reply: impl Into<String>) {
        self.push(request_digest(prompt, attachment_names), reply.into());
    }

    fn push(&self, digest: String, reply: String) {
        self.queues.lock().unwrap_or_else(|p| p.into_inner()).entry(digest).or_default().push_back(reply);
    }

    /// Recordings not yet served.
    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap_or_else(|p| p.into_inner()).values().map(VecDeque::len).sum()
    }
}

impl ChatBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<BackendReply, GatewayError> {
        let mut queues = self.queues.lock().unwrap_or_else(|p| p.into_inner());
        queues
            .get_mut(request.digest)
            .and_then(VecDeque::pop_front)
            .map(|text| BackendReply { text, usage: None })
            .ok_or_else(|| GatewayError::ReplayMiss(request.digest.to_string()))
    }
}
