//! Pluggable conversation backend: a real HTTP chat-completions client and a
//! deterministic scripted mock behind one interface.
//!
//! A conversation is strictly sequential; distinct conversations may share
//! one backend concurrently.

mod http;
mod script;

pub use http::{HttpChatBackend, HttpChatConfig, RetryPolicy};
pub use script::{load_script, ScriptEntry, ScriptedBackend};

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("send_turn requires a user message, got {0:?}")]
    NotAUserMessage(Role),
    #[error("conversation role order violated: {0}")]
    RoleOrder(String),
    #[error("message text must be non-empty")]
    EmptyText,
    #[error("attachments are only allowed on user messages")]
    AttachmentOnNonUser,
    #[error("backend returned an empty reply")]
    EmptyReply,
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("chat endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("could not parse chat response: {0}")]
    BadResponse(String),
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
    #[error("script exhausted after {consumed} replies")]
    ScriptExhausted { consumed: usize },
    #[error("prompt/script mismatch at reply {index}: prompt does not match {pattern:?}")]
    ScriptMismatch { index: usize, pattern: String },
    #[error("failed to load script {path}: {message}")]
    ScriptParse { path: String, message: String },
    #[error("failed to write transcript {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One message in a conversation, optionally carrying image attachments
/// (file paths or opaque ids) on user turns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            text: text.into(),
            attachments: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            text: text.into(),
            attachments: Vec::new(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            text: text.into(),
            attachments: Vec::new(),
        }
    }
}

/// Ordered message history plus generation parameters passed through to the
/// backend verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conversation {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, serde_json::Value>,
    pub messages: Vec<ChatMessage>,
}

impl Conversation {
    pub fn new(model_id: impl Into<String>) -> Self {
        Conversation {
            model_id: model_id.into(),
            params: serde_json::Map::new(),
            messages: Vec::new(),
        }
    }

    /// Append a message, enforcing role alternation (user/assistant after any
    /// leading system messages) and the attachment invariant.
    pub fn push(&mut self, msg: ChatMessage) -> Result<(), GatewayError> {
        if msg.text.is_empty() && msg.role != Role::System {
            return Err(GatewayError::EmptyText);
        }
        if !msg.attachments.is_empty() && msg.role != Role::User {
            return Err(GatewayError::AttachmentOnNonUser);
        }
        let last_non_system = self.messages.iter().rev().find(|m| m.role != Role::System);
        match msg.role {
            Role::System => {
                if self.messages.iter().any(|m| m.role != Role::System) {
                    return Err(GatewayError::RoleOrder(
                        "system messages must lead the conversation".into(),
                    ));
                }
            }
            Role::User => {
                if let Some(prev) = last_non_system {
                    if prev.role == Role::User {
                        return Err(GatewayError::RoleOrder(
                            "two user messages in a row".into(),
                        ));
                    }
                }
            }
            Role::Assistant => match last_non_system {
                Some(prev) if prev.role == Role::User => {}
                _ => {
                    return Err(GatewayError::RoleOrder(
                        "assistant reply without a preceding user message".into(),
                    ))
                }
            },
        }
        self.messages.push(msg);
        Ok(())
    }

    /// Text of the most recent user message, if any.
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
    }

    /// Persist the full transcript as JSON for audit.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("conversation serializes");
        std::fs::write(path, text).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A conversation backend. Implementations must be shareable across
/// concurrently running conversations.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, conv: &Conversation) -> Result<String, GatewayError>;

    /// Short backend name for logs and reports.
    fn name(&self) -> &'static str;
}

/// Which backend a campaign talks to.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// Real HTTP chat-completions endpoint, configured via environment
    /// variables (`FORGE_API_BASE_URL`, `FORGE_API_KEY`, `FORGE_MODEL_ID`).
    HttpChat,
    /// Deterministic scripted mock loaded from a JSON file.
    ScriptedMock { script: PathBuf },
}

impl BackendKind {
    pub fn build(&self) -> Result<Box<dyn ChatBackend>, GatewayError> {
        match self {
            BackendKind::HttpChat => Ok(Box::new(HttpChatBackend::from_env()?)),
            BackendKind::ScriptedMock { script } => Ok(Box::new(load_script(script)?)),
        }
    }
}

/// Send one user turn and return the assistant reply. On success the
/// conversation is extended by exactly the two messages; on failure it is
/// left unchanged, so a retried turn never duplicates history.
pub fn send_turn(
    backend: &dyn ChatBackend,
    conv: &mut Conversation,
    msg: ChatMessage,
) -> Result<ChatMessage, GatewayError> {
    if msg.role != Role::User {
        return Err(GatewayError::NotAUserMessage(msg.role));
    }
    conv.push(msg)?;
    let reply_text = match backend.complete(conv) {
        Ok(text) => text,
        Err(e) => {
            conv.messages.pop();
            return Err(e);
        }
    };
    if reply_text.is_empty() {
        conv.messages.pop();
        return Err(GatewayError::EmptyReply);
    }
    let reply = ChatMessage::assistant(reply_text);
    conv.push(reply.clone())?;
    Ok(reply)
}
