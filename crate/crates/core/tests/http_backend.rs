use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use uplift_core::backend::{BackendError, HttpBackend, HttpConfig};
use uplift_core::{ChatBackend, ChatMessage, ChatRequest};

/// Serves the canned (status, body) replies in order, one per connection,
/// and records each request body.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let seen_bg = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; content_length];
            reader.read_exact(&mut buf).unwrap();
            seen_bg
                .lock()
                .unwrap()
                .push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (addr, seen)
}

fn config(endpoint: String) -> HttpConfig {
    HttpConfig {
        endpoint,
        max_attempts: 3,
        initial_backoff: Duration::from_millis(1),
        timeout: Duration::from_secs(10),
    }
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "gpt-4o-mini".into(),
        messages: vec![ChatMessage::system("sys"), ChatMessage::user("update this")],
        temperature: Some(0.2),
        max_output_tokens: Some(256),
    }
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"```php\n<?php ok\n```"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;

#[test]
fn retries_server_errors_then_succeeds() {
    let (addr, seen) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, OK_BODY.into()),
    ]);
    let backend = HttpBackend::new(config(addr), "test-key").unwrap();
    let resp = backend.complete(&request()).unwrap();
    assert_eq!(resp.content, "```php\n<?php ok\n```");
    assert_eq!(resp.prompt_tokens, Some(12));
    assert_eq!(resp.completion_tokens, Some(5));
    assert!(resp.latency_seconds >= 0.0);

    let bodies = seen.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    let sent: serde_json::Value = serde_json::from_str(&bodies[2]).unwrap();
    assert_eq!(sent["model"], "gpt-4o-mini");
    assert_eq!(sent["max_tokens"], 256);
    assert_eq!(sent["temperature"], 0.2);
    assert_eq!(sent["messages"][0]["role"], "system");
    assert_eq!(sent["messages"][1]["content"], "update this");
}

#[test]
fn gives_up_after_max_attempts() {
    let (addr, seen) = serve(vec![
        (503, "a".into()),
        (503, "b".into()),
        (503, "c".into()),
    ]);
    let backend = HttpBackend::new(config(addr), "k").unwrap();
    match backend.complete(&request()) {
        Err(BackendError::BackendExhausted {
            attempts,
            last_error,
        }) => {
            assert_eq!(attempts, 3);
            assert!(last_error.contains("503"));
        }
        other => panic!("expected exhaustion, got {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (addr, seen) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let backend = HttpBackend::new(config(addr), "k").unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(BackendError::Http { status: 401, .. })
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn connection_refused_counts_as_transport_failure() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let backend = HttpBackend::new(config(addr), "k").unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(BackendError::BackendExhausted { attempts: 3, .. })
    ));
}
