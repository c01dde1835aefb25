//! Chat-completions adapter over blocking HTTP. Attachments travel as
//! base64 data URLs; history is resent with every request.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendReply, ChatBackend, ChatRequest, GatewayError, Role, Turn, Usage};
use crate::corpus::Attachment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    300
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("url", &self.url).finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: &HttpConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| GatewayError::BackendError {
            status: 0,
            message: format!("environment variable {} is not set", config.api_key_env),
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::BackendError { status: 0, message: e.to_string() })?;
        Ok(HttpBackend {
            client,
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            api_key,
        })
    }
}

fn content(text: &str, attachments: &[Attachment]) -> Value {
    let mut parts: Vec<Value> = attachments
        .iter()
        .map(|a| {
            let data = base64::engine::general_purpose::STANDARD.encode(&a.bytes);
            json!({
                "type": "file",
                "file": { "filename": a.logical_name, "file_data": format!("data:{};base64,{data}", a.media_type) }
            })
        })
        .collect();
    parts.push(json!({ "type": "text", "text": text }));
    Value::Array(parts)
}

fn message(turn: &Turn) -> Value {
    match turn.role {
        Role::User => json!({ "role": "user", "content": content(&turn.text, &turn.attachments) }),
        Role::Assistant => json!({ "role": "assistant", "content": turn.text }),
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        "live"
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<BackendReply, GatewayError> {
        let mut messages: Vec<Value> = request.history.iter().map(message).collect();
        messages.push(json!({ "role": "user", "content": content(request.prompt, request.attachments) }));
        let mut body = json!({ "messages": messages });
        let p = request.params;
        if let Some(m) = &p.model {
            body["model"] = json!(m);
        }
        if let Some(t) = p.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(n) = p.max_tokens {
            body["max_tokens"] = json!(n);
        }

        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| GatewayError::BackendError { status: 0, message: e.to_string() })?;
        let status = resp.status();
        if !status.is_success() {
            let message = resp.text().unwrap_or_default();
            return Err(GatewayError::BackendError { status: status.as_u16(), message });
        }
        let completion: Completion = resp
            .json()
            .map_err(|e| GatewayError::BackendError { status: status.as_u16(), message: e.to_string() })?;
        let text = completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(BackendReply {
            text,
            usage: completion.usage.map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens }),
        })
    }
}
