//! Blocking HTTP client for chat-completions style endpoints.
//!
//! The wire format follows the de-facto chat-completions JSON shape:
//! `messages: [{role, content}]`, with image attachments sent as
//! `image_url` content parts (data URLs for local files). Generation
//! parameters from the conversation are passed through verbatim.

use super::{ChatBackend, Conversation, GatewayError, Role};
use base64::Engine;
use serde_json::{json, Value};
use std::time::Duration;

/// Environment variables configuring the HTTP backend.
pub const ENV_API_BASE_URL: &str = "FORGE_API_BASE_URL";
pub const ENV_API_KEY: &str = "FORGE_API_KEY";
pub const ENV_MODEL_ID: &str = "FORGE_MODEL_ID";

/// Bounded retry with exponential backoff.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpChatConfig {
    pub base_url: String,
    pub api_key: String,
    /// Model used when a conversation does not set one.
    pub default_model: String,
    pub retry: RetryPolicy,
    pub request_timeout: Duration,
}

pub struct HttpChatBackend {
    config: HttpChatConfig,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: HttpChatConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .expect("http client builds");
        HttpChatBackend { config, client }
    }

    /// Configuration from `FORGE_API_BASE_URL`, `FORGE_API_KEY` and
    /// `FORGE_MODEL_ID`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base_url = std::env::var(ENV_API_BASE_URL)
            .map_err(|_| GatewayError::MissingEnv(ENV_API_BASE_URL))?;
        let api_key = std::env::var(ENV_API_KEY).unwrap_or_default();
        let default_model =
            std::env::var(ENV_MODEL_ID).map_err(|_| GatewayError::MissingEnv(ENV_MODEL_ID))?;
        Ok(Self::new(HttpChatConfig {
            base_url,
            api_key,
            default_model,
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(120),
        }))
    }

    fn attachment_part(reference: &str) -> Value {
        let url = match std::fs::read(reference) {
            Ok(bytes) => {
                let mime = if reference.ends_with(".jpg") || reference.ends_with(".jpeg") {
                    "image/jpeg"
                } else {
                    "image/png"
                };
                format!(
                    "data:{mime};base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(bytes)
                )
            }
            // Not a readable file: treat the reference as a URL or opaque id.
            Err(_) => reference.to_string(),
        };
        json!({"type": "image_url", "image_url": {"url": url}})
    }

    fn request_body(&self, conv: &Conversation) -> Value {
        let messages: Vec<Value> = conv
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                let content: Value = if m.attachments.is_empty() {
                    Value::String(m.text.clone())
                } else {
                    let mut parts = vec![json!({"type": "text", "text": m.text})];
                    parts.extend(m.attachments.iter().map(|a| Self::attachment_part(a)));
                    Value::Array(parts)
                };
                json!({"role": role, "content": content})
            })
            .collect();
        let model = if conv.model_id.is_empty() {
            self.config.default_model.clone()
        } else {
            conv.model_id.clone()
        };
        let mut body = json!({"model": model, "messages": messages});
        for (k, v) in &conv.params {
            body[k] = v.clone();
        }
        body
    }

    fn extract_reply(value: &Value) -> Result<String, GatewayError> {
        let content = &value["choices"][0]["message"]["content"];
        match content {
            Value::String(s) => Ok(s.clone()),
            Value::Array(parts) => {
                let text: String = parts
                    .iter()
                    .filter_map(|p| p["text"].as_str())
                    .collect::<Vec<_>>()
                    .join("");
                if text.is_empty() {
                    Err(GatewayError::BadResponse(
                        "no text content in choices[0].message".into(),
                    ))
                } else {
                    Ok(text)
                }
            }
            _ => Err(GatewayError::BadResponse(
                "missing choices[0].message.content".into(),
            )),
        }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, conv: &Conversation) -> Result<String, GatewayError> {
        let body = self.request_body(conv);
        let mut backoff = self.config.retry.initial_backoff;
        let mut last_err = String::new();
        for attempt in 1..=self.config.retry.max_attempts {
            let mut request = self
                .client
                .post(self.endpoint())
                .header("Content-Type", "application/json")
                .json(&body);
            if !self.config.api_key.is_empty() {
                request = request.bearer_auth(&self.config.api_key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().unwrap_or_default();
                    if status.is_success() {
                        let value: Value = serde_json::from_str(&text)
                            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
                        return Self::extract_reply(&value);
                    }
                    // Retry server-side failures and rate limits only.
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_err = format!("HTTP {status}");
                    } else {
                        return Err(GatewayError::HttpStatus {
                            status: status.as_u16(),
                            body: text.chars().take(500).collect(),
                        });
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
            if attempt < self.config.retry.max_attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(GatewayError::Transport {
            attempts: self.config.retry.max_attempts,
            message: last_err,
        })
    }

    fn name(&self) -> &'static str {
        "http_chat"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    #[test]
    fn body_shape_and_param_passthrough() {
        let backend = HttpChatBackend::new(HttpChatConfig {
            base_url: "http://localhost:0".into(),
            api_key: String::new(),
            default_model: "fallback".into(),
            retry: RetryPolicy::default(),
            request_timeout: Duration::from_secs(1),
        });
        let mut conv = Conversation::new("gpt-test");
        conv.params.insert("temperature".into(), json!(0.1));
        conv.push(ChatMessage::system("be brief")).unwrap();
        let mut msg = ChatMessage::user("look at this");
        msg.attachments.push("not-a-file-id-123".into());
        conv.push(msg).unwrap();

        let body = backend.request_body(&conv);
        assert_eq!(body["model"], "gpt-test");
        assert_eq!(body["temperature"], json!(0.1));
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"][0]["type"], "text");
        assert_eq!(
            body["messages"][1]["content"][1]["image_url"]["url"],
            "not-a-file-id-123"
        );
    }

    #[test]
    fn reply_extraction_variants() {
        let plain = json!({"choices":[{"message":{"content":"hello"}}]});
        assert_eq!(HttpChatBackend::extract_reply(&plain).unwrap(), "hello");

        let parts = json!({"choices":[{"message":{"content":[
            {"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(HttpChatBackend::extract_reply(&parts).unwrap(), "ab");

        let bad = json!({"error":"nope"});
        assert!(HttpChatBackend::extract_reply(&bad).is_err());
    }
}
