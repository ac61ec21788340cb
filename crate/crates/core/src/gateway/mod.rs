//! Chat-completion gateway.
//!
//! Every request is identified by a content digest over the model settings
//! and the message list. The digest keys the response cache and the
//! record/replay fixtures, so a replayed analysis never touches the network.

mod http;
mod store;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::HttpBackend;
pub use store::{FixtureEntry, ResponseStore};

pub const API_KEY_ENV: &str = "THEMATICA_API_KEY";
pub const API_KEY_FALLBACK_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("replay fixture has no entry for request digest {digest}")]
    FixtureMiss { digest: String },
    #[error("fixture {path} is corrupt: {detail}")]
    FixtureCorrupt { path: String, detail: String },
    #[error("fixture {0} does not exist")]
    FixtureNotFound(String),
    #[error("could not write {path}: {detail}")]
    Persist { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub endpoint_url: String,
    pub timeout_secs: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model_id: "gpt-4-turbo".to_string(),
            temperature: 0.3,
            max_tokens: 1000,
            endpoint_url: DEFAULT_ENDPOINT.to_string(),
            timeout_secs: 120,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("model_id is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidConfig("max_tokens must be at least 1".into()));
        }
        if self.timeout_secs == 0 {
            return Err(GatewayError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, GatewayError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("message content is empty".into()));
        }
        Ok(ChatMessage { role, content })
    }

    pub fn system(content: impl Into<String>) -> Result<Self, GatewayError> {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Result<Self, GatewayError> {
        Self::new(Role::User, content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Live,
    Cache,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub request_digest: String,
    pub text: String,
    pub transport: TransportKind,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: &'a [ChatMessage],
}

/// Lowercase hex SHA-256 of the canonical JSON form of
/// `(model_id, temperature, max_tokens, messages)`. Endpoint and timeout do
/// not participate.
pub fn request_digest(config: &ModelConfig, messages: &[ChatMessage]) -> String {
    let input = DigestInput {
        model: &config.model_id,
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        messages,
    };
    let canonical = serde_json::to_vec(&input).expect("digest input serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Failure reported by a [`ChatBackend`] for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendError {
    /// HTTP 429.
    RateLimited,
    /// 5xx, timeouts, connection resets.
    Transient(String),
    Auth(String),
    Fatal(String),
    Malformed(String),
}

/// One network round trip. Implementations return the raw reply content of
/// the first choice; the gateway handles trimming, retries and storage.
pub trait ChatBackend: Send + Sync {
    fn send(&self, config: &ModelConfig, messages: &[ChatMessage]) -> Result<String, SendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            factor: 2,
        }
    }

    /// Delay to wait after failed attempt number `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1).min(16);
        self.base_delay * self.factor.saturating_pow(exp)
    }
}

pub enum Transport {
    Live(Box<dyn ChatBackend>),
    Replay(ResponseStore),
    Record {
        backend: Box<dyn ChatBackend>,
        fixture: ResponseStore,
    },
}

impl Transport {
    pub fn replay(path: impl AsRef<std::path::Path>) -> Result<Self, GatewayError> {
        Ok(Transport::Replay(ResponseStore::open_existing(path.as_ref())?))
    }

    pub fn record(
        backend: Box<dyn ChatBackend>,
        path: impl AsRef<std::path::Path>,
    ) -> Result<Self, GatewayError> {
        Ok(Transport::Record {
            backend,
            fixture: ResponseStore::open_or_create(path.as_ref())?,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Transport::Live(_) => "live",
            Transport::Replay(_) => "replay",
            Transport::Record { .. } => "record",
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct GatewayStats {
    pub requests: usize,
    pub network_calls: usize,
    pub cache_hits: usize,
    pub replay_hits: usize,
}

pub struct Gateway {
    config: ModelConfig,
    transport: Transport,
    cache: Option<ResponseStore>,
    retry: RetryPolicy,
    requests: AtomicUsize,
    network_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    replay_hits: AtomicUsize,
}

impl Gateway {
    pub fn new(config: ModelConfig, transport: Transport) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            config,
            transport,
            cache: None,
            retry: RetryPolicy::default(),
            requests: AtomicUsize::new(0),
            network_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            replay_hits: AtomicUsize::new(0),
        })
    }

    pub fn with_cache(mut self, cache: ResponseStore) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::SeqCst),
            network_calls: self.network_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            replay_hits: self.replay_hits.load(Ordering::SeqCst),
        }
    }

    pub fn digest(&self, messages: &[ChatMessage]) -> String {
        request_digest(&self.config, messages)
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if let Some(m) = messages.iter().find(|m| m.content.trim().is_empty()) {
            return Err(GatewayError::InvalidRequest(format!(
                "{:?} message has empty content",
                m.role
            )));
        }
        self.requests.fetch_add(1, Ordering::SeqCst);
        let digest = self.digest(messages);

        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&digest) {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(Completion {
                    request_digest: digest,
                    text,
                    transport: TransportKind::Cache,
                });
            }
        }

        let (text, transport) = match &self.transport {
            Transport::Replay(fixture) => {
                let text = fixture
                    .get(&digest)
                    .ok_or_else(|| GatewayError::FixtureMiss { digest: digest.clone() })?;
                self.replay_hits.fetch_add(1, Ordering::SeqCst);
                (text, TransportKind::Replay)
            }
            Transport::Live(backend) => (self.send_with_retry(backend.as_ref(), messages)?, TransportKind::Live),
            Transport::Record { backend, fixture } => {
                let text = self.send_with_retry(backend.as_ref(), messages)?;
                fixture.insert(&digest, &text)?;
                (text, TransportKind::Live)
            }
        };

        if transport == TransportKind::Live {
            if let Some(cache) = &self.cache {
                cache.insert(&digest, &text)?;
            }
        }
        Ok(Completion {
            request_digest: digest,
            text,
            transport,
        })
    }

    fn send_with_retry(
        &self,
        backend: &dyn ChatBackend,
        messages: &[ChatMessage],
    ) -> Result<String, GatewayError> {
        let max = self.retry.max_attempts.max(1);
        let mut last = SendError::Transient("no attempt made".into());
        for attempt in 1..=max {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match backend.send(&self.config, messages) {
                Ok(raw) => {
                    let text = raw.trim().to_string();
                    if text.is_empty() {
                        return Err(GatewayError::MalformedResponse("empty content".into()));
                    }
                    return Ok(text);
                }
                Err(SendError::Auth(msg)) => return Err(GatewayError::Auth(msg)),
                Err(SendError::Fatal(msg)) => return Err(GatewayError::Transport(msg)),
                Err(SendError::Malformed(msg)) => return Err(GatewayError::MalformedResponse(msg)),
                Err(retryable) => {
                    log::warn!("attempt {attempt}/{max} failed: {retryable:?}");
                    last = retryable;
                    if attempt < max {
                        std::thread::sleep(self.retry.delay_after(attempt));
                    }
                }
            }
        }
        Err(match last {
            SendError::RateLimited => GatewayError::RateLimited { attempts: max },
            SendError::Transient(msg) => GatewayError::Transport(format!("{msg} (after {max} attempts)")),
            other => GatewayError::Transport(format!("{other:?}")),
        })
    }
}

/// Reads the API credential from the environment, preferring
/// [`API_KEY_ENV`] over [`API_KEY_FALLBACK_ENV`].
pub fn api_key_from_env() -> Result<String, GatewayError> {
    for var in [API_KEY_ENV, API_KEY_FALLBACK_ENV] {
        if let Ok(value) = std::env::var(var) {
            if !value.trim().is_empty() {
                return Ok(value.trim().to_string());
            }
        }
    }
    Err(GatewayError::Auth(format!(
        "no API key found; set {API_KEY_ENV} (or {API_KEY_FALLBACK_ENV})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<String, SendError>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<String, SendError>>) -> Self {
            replies.reverse();
            Scripted {
                replies: Mutex::new(replies),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl ChatBackend for Scripted {
        fn send(&self, _: &ModelConfig, _: &[ChatMessage]) -> Result<String, SendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Err(SendError::Fatal("script exhausted".into())))
        }
    }

    fn msgs(text: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system("You are a skilled qualitative researcher focusing on inductively emerging codes.").unwrap(),
            ChatMessage::user(text).unwrap(),
        ]
    }

    #[test]
    fn defaults_match_published_settings() {
        let c = ModelConfig::default();
        assert_eq!(c.model_id, "gpt-4-turbo");
        assert_eq!(c.temperature, 0.3);
        assert_eq!(c.max_tokens, 1000);
        assert_eq!(c.timeout_secs, 120);
        c.validate().unwrap();
    }

    #[test]
    fn config_bounds() {
        let hot = ModelConfig { temperature: 2.5, ..ModelConfig::default() };
        assert!(hot.validate().is_err());
        let empty = ModelConfig { max_tokens: 0, ..ModelConfig::default() };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn empty_message_rejected() {
        assert!(ChatMessage::user("   ").is_err());
    }

    #[test]
    fn digest_ignores_endpoint_and_timeout() {
        let a = ModelConfig::default();
        let mut b = a.clone();
        b.endpoint_url = "http://localhost:1".into();
        b.timeout_secs = 5;
        let m = msgs("hello");
        assert_eq!(request_digest(&a, &m), request_digest(&b, &m));
        let mut c = a.clone();
        c.temperature = 0.4;
        assert_ne!(request_digest(&a, &m), request_digest(&c, &m));
        assert_ne!(request_digest(&a, &m), request_digest(&a, &msgs("hello!")));
    }

    #[test]
    fn retries_transient_failures_then_succeeds() {
        let backend = Scripted::new(vec![
            Err(SendError::RateLimited),
            Err(SendError::Transient("503".into())),
            Ok("  reply text \n".into()),
        ]);
        let gw = Gateway::new(ModelConfig::default(), Transport::Live(Box::new(backend)))
            .unwrap()
            .with_retry(RetryPolicy::no_delay(5));
        let c = gw.complete(&msgs("x")).unwrap();
        assert_eq!(c.text, "reply text");
        assert_eq!(c.transport, TransportKind::Live);
        assert_eq!(gw.stats().network_calls, 3);
    }

    #[test]
    fn rate_limit_exhausts_attempt_budget() {
        let backend = Scripted::new((0..10).map(|_| Err(SendError::RateLimited)).collect());
        let gw = Gateway::new(ModelConfig::default(), Transport::Live(Box::new(backend)))
            .unwrap()
            .with_retry(RetryPolicy::no_delay(4));
        let err = gw.complete(&msgs("x")).unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited { attempts: 4 }));
        assert_eq!(gw.stats().network_calls, 4);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let backend = Scripted::new(vec![Err(SendError::Auth("401".into())), Ok("never".into())]);
        let gw = Gateway::new(ModelConfig::default(), Transport::Live(Box::new(backend)))
            .unwrap()
            .with_retry(RetryPolicy::no_delay(5));
        assert!(matches!(gw.complete(&msgs("x")), Err(GatewayError::Auth(_))));
        assert_eq!(gw.stats().network_calls, 1);
    }

    #[test]
    fn whitespace_reply_is_malformed() {
        let backend = Scripted::new(vec![Ok("  \n ".into())]);
        let gw = Gateway::new(ModelConfig::default(), Transport::Live(Box::new(backend))).unwrap();
        assert!(matches!(gw.complete(&msgs("x")), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn cache_serves_identical_request() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseStore::open_or_create(&dir.path().join("cache.json")).unwrap();
        let backend = Scripted::new(vec![Ok("first".into()), Ok("second".into())]);
        let gw = Gateway::new(ModelConfig::default(), Transport::Live(Box::new(backend)))
            .unwrap()
            .with_cache(cache);
        let a = gw.complete(&msgs("same")).unwrap();
        let b = gw.complete(&msgs("same")).unwrap();
        assert_eq!(a.transport, TransportKind::Live);
        assert_eq!(b.transport, TransportKind::Cache);
        assert_eq!(a.text, b.text);
        assert_eq!(gw.stats().network_calls, 1);

        // persisted: a fresh gateway over the same file hits the cache
        let cache = ResponseStore::open_or_create(&dir.path().join("cache.json")).unwrap();
        let gw2 = Gateway::new(
            ModelConfig::default(),
            Transport::Live(Box::new(Scripted::new(vec![]))),
        )
        .unwrap()
        .with_cache(cache);
        assert_eq!(gw2.complete(&msgs("same")).unwrap().text, "first");
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        let backend = Scripted::new(vec![Ok("1. **Academic Background of Researcher**: \"x\" - Page 1".into())]);
        let gw = Gateway::new(ModelConfig::default(), Transport::record(Box::new(backend), &path).unwrap()).unwrap();
        let live = gw.complete(&msgs("page one")).unwrap();

        let gw = Gateway::new(ModelConfig::default(), Transport::replay(&path).unwrap()).unwrap();
        let replayed = gw.complete(&msgs("page one")).unwrap();
        assert_eq!(replayed.transport, TransportKind::Replay);
        assert_eq!(replayed.text, live.text);
        assert_eq!(replayed.request_digest, live.request_digest);
        assert_eq!(gw.stats().network_calls, 0);

        let miss = gw.complete(&msgs("page two")).unwrap_err();
        assert!(matches!(miss, GatewayError::FixtureMiss { .. }));
    }

    #[test]
    fn replay_requires_existing_fixture() {
        assert!(matches!(
            Transport::replay("/nonexistent/fixture.json"),
            Err(GatewayError::FixtureNotFound(_))
        ));
    }

    #[test]
    fn retry_delays_grow_exponentially() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_after(1), Duration::from_secs(1));
        assert_eq!(p.delay_after(2), Duration::from_secs(2));
        assert_eq!(p.delay_after(4), Duration::from_secs(8));
    }
}
