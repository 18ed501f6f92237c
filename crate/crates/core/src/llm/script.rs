//! Deterministic scripted backend for tests and offline campaigns.
//!
//! A script is a JSON list of `{"reply": "...", "expect_regex": "..."}`
//! entries returned in order. The optional regex is matched against the
//! incoming prompt so tests fail loudly when prompt templates drift.

use super::{ChatBackend, Conversation, GatewayError};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_regex: Option<String>,
    pub reply: String,
}

impl ScriptEntry {
    pub fn reply(text: impl Into<String>) -> Self {
        ScriptEntry {
            expect_regex: None,
            reply: text.into(),
        }
    }

    pub fn expect(pattern: impl Into<String>, text: impl Into<String>) -> Self {
        ScriptEntry {
            expect_regex: Some(pattern.into()),
            reply: text.into(),
        }
    }
}

struct CompiledEntry {
    guard: Option<Regex>,
    reply: String,
}

/// Replays scripted replies in order. Identical scripts and prompts produce
/// byte-identical transcripts.
pub struct ScriptedBackend {
    entries: Vec<CompiledEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Self {
        let entries = entries
            .into_iter()
            .map(|e| CompiledEntry {
                guard: e
                    .expect_regex
                    .as_deref()
                    .map(|p| Regex::new(p).expect("script regex compiles")),
                reply: e.reply,
            })
            .collect();
        ScriptedBackend {
            entries,
            cursor: Mutex::new(0),
        }
    }

    /// Total scripted replies.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replies not yet consumed.
    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().unwrap()
    }

    /// Fast-forward over `n` replies; used when resuming a campaign whose
    /// earlier scenarios already consumed a script prefix.
    pub fn skip(&self, n: usize) {
        let mut cursor = self.cursor.lock().unwrap();
        *cursor = (*cursor + n).min(self.entries.len());
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, conv: &Conversation) -> Result<String, GatewayError> {
        let mut cursor = self.cursor.lock().unwrap();
        let index = *cursor;
        let entry = self
            .entries
            .get(index)
            .ok_or(GatewayError::ScriptExhausted { consumed: index })?;
        if let Some(guard) = &entry.guard {
            let prompt = conv.last_user_text().unwrap_or_default();
            if !guard.is_match(prompt) {
                return Err(GatewayError::ScriptMismatch {
                    index,
                    pattern: guard.as_str().to_string(),
                });
            }
        }
        *cursor += 1;
        Ok(entry.reply.clone())
    }

    fn name(&self) -> &'static str {
        "scripted_mock"
    }
}

/// Load a scripted backend from a JSON file.
pub fn load_script(path: impl AsRef<Path>) -> Result<ScriptedBackend, GatewayError> {
    let path = path.as_ref();
    let err = |message: String| GatewayError::ScriptParse {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let entries: Vec<ScriptEntry> =
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    if entries.is_empty() {
        return Err(err("script has no entries".into()));
    }
    for (i, entry) in entries.iter().enumerate() {
        if let Some(pattern) = &entry.expect_regex {
            Regex::new(pattern).map_err(|e| err(format!("entry {i}: bad regex: {e}")))?;
        }
    }
    Ok(ScriptedBackend::from_entries(entries))
}
