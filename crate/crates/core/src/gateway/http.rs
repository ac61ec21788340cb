use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{ChatBackend, ChatMessage, GatewayError, ModelConfig, SendError};

/// OpenAI-compatible `POST {endpoint}/chat/completions` client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: String,
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    max_tokens: u32,
    temperature: f64,
}

impl HttpBackend {
    pub fn new(api_key: impl Into<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            api_key: api_key.into(),
        })
    }

    /// Builds a backend using the credential from the environment.
    pub fn from_env(config: &ModelConfig) -> Result<Self, GatewayError> {
        let key = super::api_key_from_env()?;
        Self::new(key, Duration::from_secs(config.timeout_secs))
    }
}

pub(crate) fn completions_url(endpoint: &str) -> String {
    format!("{}/chat/completions", endpoint.trim_end_matches('/'))
}

pub(crate) fn extract_content(body: &str) -> Result<String, SendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| SendError::Malformed(format!("reply is not JSON: {e}")))?;
    v.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| SendError::Malformed("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn send(&self, config: &ModelConfig, messages: &[ChatMessage]) -> Result<String, SendError> {
        let body = RequestBody {
            model: &config.model_id,
            messages,
            max_tokens: config.max_tokens,
            temperature: config.temperature,
        };
        let resp = self
            .client
            .post(completions_url(&config.endpoint_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() || e.is_request() {
                    SendError::Transient(e.to_string())
                } else {
                    SendError::Fatal(e.to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| SendError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => extract_content(&text),
            401 | 403 => Err(SendError::Auth(format!("HTTP {status}"))),
            429 => Err(SendError::RateLimited),
            500..=599 => Err(SendError::Transient(format!("HTTP {status}"))),
            _ => Err(SendError::Fatal(format!("HTTP {status}: {}", truncate(&text, 200)))),
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_joining() {
        assert_eq!(completions_url("http://h/v1/"), "http://h/v1/chat/completions");
        assert_eq!(completions_url("http://h/v1"), "http://h/v1/chat/completions");
    }

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "hi");
        assert!(matches!(extract_content(r#"{"choices":[]}"#), Err(SendError::Malformed(_))));
        assert!(matches!(extract_content("<html>"), Err(SendError::Malformed(_))));
    }
}
