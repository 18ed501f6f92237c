//! HTTP backend tests against a local stub chat-completions server.

use forge_core::llm::{
    send_turn, ChatBackend, ChatMessage, Conversation, GatewayError, HttpChatBackend,
    HttpChatConfig, RetryPolicy,
};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::time::Duration;

/// Serve `responses` (status, body) one per connection, recording request
/// bodies. Shuts down after the last response.
fn stub_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // Read headers, then the declared body length.
            let mut content_length = 0usize;
            let mut header_end = 0usize;
            loop {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
                    header_end = pos + 4;
                    let headers = String::from_utf8_lossy(&buf[..pos]).to_string();
                    for line in headers.lines() {
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:")
                        {
                            content_length = v.trim().parse().unwrap();
                        }
                    }
                    break;
                }
            }
            while buf.len() < header_end + content_length {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            let request_body =
                String::from_utf8_lossy(&buf[header_end..header_end + content_length]).to_string();
            tx.send(request_body).unwrap();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn backend(base_url: String) -> HttpChatBackend {
    HttpChatBackend::new(HttpChatConfig {
        base_url,
        api_key: "test-key".into(),
        default_model: "stub-model".into(),
        retry: RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(10),
        },
        request_timeout: Duration::from_secs(5),
    })
}

fn chat_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
        .to_string()
}

#[test]
fn stub_round_trip() {
    let (url, rx) = stub_server(vec![(200, chat_body("stub says hi"))]);
    let backend = backend(url);
    let mut conv = Conversation::new("stub-model");
    let reply = send_turn(&backend, &mut conv, ChatMessage::user("hello stub")).unwrap();
    assert_eq!(reply.text, "stub says hi");
    assert_eq!(conv.messages.len(), 2);

    // The request the stub saw matches the chat-completions shape.
    let request: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert_eq!(request["model"], "stub-model");
    assert_eq!(request["messages"][0]["role"], "user");
    assert_eq!(request["messages"][0]["content"], "hello stub");
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, rx) = stub_server(vec![
        (500, "{\"error\":\"boom\"}".into()),
        (200, chat_body("recovered")),
    ]);
    let backend = backend(url);
    let mut conv = Conversation::new("stub-model");
    let reply = send_turn(&backend, &mut conv, ChatMessage::user("try me")).unwrap();
    assert_eq!(reply.text, "recovered");
    // Two requests were made, and the successful turn appears exactly once.
    assert_eq!(rx.try_iter().count(), 2);
    assert_eq!(conv.messages.len(), 2);
}

#[test]
fn client_error_fails_fast() {
    let (url, rx) = stub_server(vec![(400, "{\"error\":\"bad request\"}".into())]);
    let backend = backend(url);
    let mut conv = Conversation::new("stub-model");
    let err = send_turn(&backend, &mut conv, ChatMessage::user("reject me")).unwrap_err();
    match err {
        GatewayError::HttpStatus { status, .. } => assert_eq!(status, 400),
        other => panic!("expected HttpStatus, got {other:?}"),
    }
    assert_eq!(rx.try_iter().count(), 1);
    assert!(conv.messages.is_empty());
}

#[test]
fn transport_failure_after_bounded_retries() {
    // Nothing listens on this port.
    let backend = backend("http://127.0.0.1:1".into());
    let mut conv = Conversation::new("stub-model");
    let err = backend.complete(&conv).unwrap_err();
    match err {
        GatewayError::Transport { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("expected Transport, got {other:?}"),
    }
    // Conversation still usable.
    conv.push(ChatMessage::user("x")).unwrap();
}
