//! The HTTP backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thematica::gateway::{
    ChatBackend, ChatMessage, Gateway, GatewayError, HttpBackend, ModelConfig, ResponseStore, RetryPolicy, Transport, TransportKind,
};

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: String,
}

/// Serves one scripted `(status, body)` per connection and records what
/// it received.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, log)
}

fn ok(content: &str) -> (u16, String) {
    (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
}

fn gateway(url: &str, transport: impl FnOnce(Box<dyn ChatBackend>) -> Transport) -> Gateway {
    let config = ModelConfig {
        endpoint_url: url.to_string(),
        timeout_secs: 5,
        ..ModelConfig::default()
    };
    let backend: Box<dyn ChatBackend> = Box::new(HttpBackend::new("test-key", Duration::from_secs(5)).unwrap());
    Gateway::new(config, transport(backend)).unwrap().with_retry(RetryPolicy::no_delay(5))
}

fn messages() -> Vec<ChatMessage> {
    vec![ChatMessage::system("sys").unwrap(), ChatMessage::user("hello").unwrap()]
}

#[test]
fn sends_openai_compatible_request() {
    let (url, log) = serve(vec![ok("  the reply \n")]);
    let gw = gateway(&url, Transport::Live);
    let c = gw.complete(&messages()).unwrap();
    assert_eq!(c.text, "the reply");
    assert_eq!(c.transport, TransportKind::Live);
    let log = log.lock().unwrap();
    assert_eq!(log[0].request_line, "POST /v1/chat/completions HTTP/1.1");
    assert!(log[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer test-key")));
    let body: serde_json::Value = serde_json::from_str(&log[0].body).unwrap();
    assert_eq!(body["model"], "gpt-4-turbo");
    assert_eq!(body["temperature"], 0.3);
    assert_eq!(body["max_tokens"], 1000);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "hello");
}

#[test]
fn retries_rate_limits_and_server_errors() {
    let (url, log) = serve(vec![(429, "{}".into()), (503, "{}".into()), ok("done")]);
    let gw = gateway(&url, Transport::Live);
    assert_eq!(gw.complete(&messages()).unwrap().text, "done");
    assert_eq!(log.lock().unwrap().len(), 3);
    assert_eq!(gw.stats().network_calls, 3);
}

#[test]
fn gives_up_after_five_rate_limits() {
    let (url, _) = serve(vec![(429, "{}".into()); 5]);
    let gw = gateway(&url, Transport::Live);
    assert!(matches!(gw.complete(&messages()), Err(GatewayError::RateLimited { attempts: 5 })));
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, log) = serve(vec![(401, "{\"error\": \"bad key\"}".into()), ok("unused")]);
    let gw = gateway(&url, Transport::Live);
    assert!(matches!(gw.complete(&messages()), Err(GatewayError::Auth(_))));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    let gw = gateway(&url, Transport::Live);
    assert!(matches!(gw.complete(&messages()), Err(GatewayError::MalformedResponse(_))));
}

#[test]
fn cache_serves_repeats_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let (url, log) = serve(vec![ok("cached reply")]);
    let cache = ResponseStore::open_or_create(&dir.path().join("cache.json")).unwrap();
    let gw = gateway(&url, Transport::Live).with_cache(cache);
    assert_eq!(gw.complete(&messages()).unwrap().transport, TransportKind::Live);
    let again = gw.complete(&messages()).unwrap();
    assert_eq!(again.transport, TransportKind::Cache);
    assert_eq!(again.text, "cached reply");
    assert_eq!(log.lock().unwrap().len(), 1);
    assert_eq!(ResponseStore::open_existing(&dir.path().join("cache.json")).unwrap().len(), 1);
}

#[test]
fn recorded_fixture_replays_offline() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture.json");
    let (url, _) = serve(vec![ok("recorded")]);
    let gw = gateway(&url, |b| Transport::record(b, &fixture).unwrap());
    let live = gw.complete(&messages()).unwrap();

    let replay = Gateway::new(
        ModelConfig {
            endpoint_url: "http://127.0.0.1:9/unreachable".into(),
            ..ModelConfig::default()
        },
        Transport::replay(&fixture).unwrap(),
    )
    .unwrap();
    let c = replay.complete(&messages()).unwrap();
    assert_eq!(c.text, "recorded");
    assert_eq!(c.request_digest, live.request_digest);
    assert_eq!(c.transport, TransportKind::Replay);
    let other = vec![ChatMessage::user("different").unwrap()];
    assert!(matches!(replay.complete(&other), Err(GatewayError::FixtureMiss { .. })));
}

#[test]
fn connection_refused_is_retried_then_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let gw = gateway(&url, Transport::Live);
    match gw.complete(&messages()) {
        Err(GatewayError::Transport(msg)) => assert!(msg.contains("after 5 attempts"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(gw.stats().network_calls, 5);
}
