//! HTTP model backend.
//!
//! The core only knows text in, text out. [`LiveAdapter`] maps a prompt
//! context onto a concrete provider's request and response JSON.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendConfig, BackendError, BackendMode, CallSite, Completion, TextBackend};
use super::context::{Author, PromptContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiveAdapter {
    /// `{system, messages: [{role, content}], temperature, model}` in,
    /// `{text}` out. Bearer credential.
    #[default]
    Generic,
    /// Anthropic Messages API.
    Anthropic,
    /// OpenAI-compatible chat completions.
    OpenAiChat,
}

impl LiveAdapter {
    fn request_body(self, config: &BackendConfig, ctx: &PromptContext) -> Value {
        let messages: Vec<Value> = ctx
            .messages
            .iter()
            .map(|m| {
                let role = match m.author {
                    Author::User => "user",
                    Author::Assistant => "assistant",
                };
                json!({ "role": role, "content": m.text })
            })
            .collect();
        match self {
            Self::Generic => json!({
                "system": ctx.system_prompt,
                "messages": messages,
                "temperature": config.temperature,
                "model": config.model_name,
            }),
            Self::Anthropic => json!({
                "model": config.model_name,
                "system": ctx.system_prompt,
                "messages": messages,
                "temperature": config.temperature,
                "max_tokens": config.max_tokens,
            }),
            Self::OpenAiChat => {
                let mut all = vec![json!({ "role": "system", "content": ctx.system_prompt })];
                all.extend(messages);
                json!({
                    "model": config.model_name,
                    "messages": all,
                    "temperature": config.temperature,
                    "max_tokens": config.max_tokens,
                })
            }
        }
    }

    fn headers(self, credential: Option<&str>) -> Vec<(String, String)> {
        let mut headers = vec![("content-type".to_owned(), "application/json".to_owned())];
        match (self, credential) {
            (Self::Anthropic, Some(key)) => {
                headers.push(("x-api-key".to_owned(), key.to_owned()));
                headers.push(("anthropic-version".to_owned(), "2023-06-01".to_owned()));
            }
            (Self::Anthropic, None) => headers.push(("anthropic-version".to_owned(), "2023-06-01".to_owned())),
            (_, Some(key)) => headers.push(("authorization".to_owned(), format!("Bearer {key}"))),
            (_, None) => {}
        }
        headers
    }

    fn response_text(self, body: &str) -> Result<String, BackendError> {
        let value: Value = serde_json::from_str(body).map_err(|e| BackendError::Decode(e.to_string()))?;
        let text = match self {
            Self::Generic => value.get("text").and_then(Value::as_str).map(str::to_owned),
            Self::Anthropic => value.get("content").and_then(Value::as_array).map(|blocks| {
                blocks
                    .iter()
                    .filter_map(|b| b.get("text").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join("")
            }),
            Self::OpenAiChat => value
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .map(str::to_owned),
        };
        text.ok_or_else(|| BackendError::Decode(format!("no text in {self:?} response")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Minimal HTTP POST used by [`LiveBackend`].
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError> {
        let mut req = self.client.post(url).body(body.to_string());
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| TransportError(e.without_url().to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

pub struct LiveBackend<T> {
    config: BackendConfig,
    transport: T,
}

impl<T: Transport> LiveBackend<T> {
    pub fn new(config: BackendConfig, transport: T) -> Self {
        Self { config, transport }
    }

    fn credential(&self) -> Option<String> {
        self.config.api_key_env.as_deref().and_then(|name| std::env::var(name).ok())
    }

    /// Delay before retry number `retry` (1-based): base * 2^(retry-1), ±20%.
    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.backoff_base.as_secs_f64() * 2f64.powi(retry as i32 - 1);
        let jitter = rand::rng().random_range(0.8..=1.2);
        Duration::from_secs_f64(base * jitter)
    }
}

fn retryable_status(status: u16) -> bool {
    status == 429 || status == 408 || (500..600).contains(&status)
}

impl<T: Transport> TextBackend for LiveBackend<T> {
    fn complete(&self, _call: &CallSite<'_>, ctx: &PromptContext) -> Result<Completion, BackendError> {
        let url = self.config.endpoint.as_deref().ok_or_else(|| BackendError::Config("no endpoint".into()))?;
        let adapter = self.config.adapter;
        let body = adapter.request_body(&self.config, ctx);
        let headers = adapter.headers(self.credential().as_deref());
        let max_attempts = self.config.max_retries + 1;

        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            match self.transport.post_json(url, &headers, &body) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let text = adapter.response_text(&reply.body)?;
                    return Ok(Completion { text, attempts: attempt });
                }
                Ok(reply) if retryable_status(reply.status) => {
                    tracing::warn!(attempt, status = reply.status, "retryable HTTP status");
                    last_error = format!("HTTP {}", reply.status);
                }
                Ok(reply) => return Err(BackendError::Http { status: reply.status, body: reply.body }),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "transport failure");
                    last_error = e.0;
                }
            }
        }
        Err(BackendError::Transport { attempts: max_attempts, message: last_error })
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Live
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;
    use crate::agents::AgentRole;

    /// Records every request and replays canned outcomes; the last repeats.
    struct FakeTransport {
        outcomes: Vec<Result<HttpReply, TransportError>>,
        calls: Mutex<Vec<(String, Vec<(String, String)>, Value)>>,
    }

    impl FakeTransport {
        fn new(outcomes: Vec<Result<HttpReply, TransportError>>) -> Self {
            Self { outcomes, calls: Mutex::new(Vec::new()) }
        }

        fn call_count(&self) -> usize {
            self.calls.lock().unwrap().len()
        }
    }

    impl Transport for &FakeTransport {
        fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError> {
            let mut calls = self.calls.lock().unwrap();
            calls.push((url.to_owned(), headers.to_vec(), body.clone()));
            let idx = (calls.len() - 1).min(self.outcomes.len() - 1);
            self.outcomes[idx].clone()
        }
    }

    fn config() -> BackendConfig {
        BackendConfig {
            backoff_base: Duration::from_millis(1),
            max_retries: 2,
            ..BackendConfig::live("http://127.0.0.1:9/v1", "test-model")
        }
    }

    fn ctx() -> PromptContext {
        let mut ctx = PromptContext::new("You are a Doctor.");
        ctx.push_user("The conversation is about to start.");
        ctx
    }

    fn call() -> CallSite<'static> {
        CallSite { role: AgentRole::Doctor, turn_index: 0, vignette: "v", constitution: "c", attempt: 0 }
    }

    fn ok(body: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply { status: 200, body: body.to_owned() })
    }

    #[test]
    fn unreachable_endpoint_gives_up_after_retries() {
        let fake = FakeTransport::new(vec![Err(TransportError("connection refused".into()))]);
        let backend = LiveBackend::new(config(), &fake);
        let err = backend.complete(&call(), &ctx()).unwrap_err();
        assert_eq!(fake.call_count(), 3);
        assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn recovers_after_transient_failure() {
        let fake = FakeTransport::new(vec![
            Err(TransportError("reset".into())),
            Ok(HttpReply { status: 503, body: String::new() }),
            ok(r#"{"text":"Hello there"}"#),
        ]);
        let backend = LiveBackend::new(config(), &fake);
        let completion = backend.complete(&call(), &ctx()).unwrap();
        assert_eq!(completion, Completion { text: "Hello there".into(), attempts: 3 });
    }

    #[test]
    fn client_errors_are_not_retried() {
        let fake = FakeTransport::new(vec![Ok(HttpReply { status: 400, body: "bad".into() })]);
        let backend = LiveBackend::new(config(), &fake);
        assert!(matches!(backend.complete(&call(), &ctx()), Err(BackendError::Http { status: 400, .. })));
        assert_eq!(fake.call_count(), 1);
    }

    #[test]
    fn generic_request_shape_carries_temperature() {
        let fake = FakeTransport::new(vec![ok(r#"{"text":"hi"}"#)]);
        let backend = LiveBackend::new(config(), &fake);
        backend.complete(&call(), &ctx()).unwrap();
        let calls = fake.calls.lock().unwrap();
        let (url, _, body) = &calls[0];
        assert_eq!(url, "http://127.0.0.1:9/v1");
        assert_eq!(body["system"], "You are a Doctor.");
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "The conversation is about to start.");
    }

    #[test]
    fn anthropic_adapter() {
        std::env::set_var("CONSTEVAL_TEST_KEY_A", "sk-test");
        let cfg = BackendConfig {
            adapter: LiveAdapter::Anthropic,
            api_key_env: Some("CONSTEVAL_TEST_KEY_A".into()),
            ..config()
        };
        let fake = FakeTransport::new(vec![ok(r#"{"content":[{"type":"text","text":"Hel"},{"type":"text","text":"lo"}]}"#)]);
        let backend = LiveBackend::new(cfg, &fake);
        assert_eq!(backend.complete(&call(), &ctx()).unwrap().text, "Hello");
        let calls = fake.calls.lock().unwrap();
        let (_, headers, body) = &calls[0];
        assert!(headers.contains(&("x-api-key".to_owned(), "sk-test".to_owned())));
        assert_eq!(body["max_tokens"], 1024);
        assert_eq!(body["model"], "test-model");
    }

    #[test]
    fn openai_adapter() {
        let cfg = BackendConfig { adapter: LiveAdapter::OpenAiChat, ..config() };
        let fake = FakeTransport::new(vec![ok(r#"{"choices":[{"message":{"content":"Hi"}}]}"#)]);
        let backend = LiveBackend::new(cfg, &fake);
        assert_eq!(backend.complete(&call(), &ctx()).unwrap().text, "Hi");
        let calls = fake.calls.lock().unwrap();
        assert_eq!(calls[0].2["messages"][0]["role"], "system");
    }

    #[test]
    fn undecodable_reply() {
        let fake = FakeTransport::new(vec![ok("not json")]);
        let backend = LiveBackend::new(config(), &fake);
        assert!(matches!(backend.complete(&call(), &ctx()), Err(BackendError::Decode(_))));
    }

    #[test]
    fn real_transport_unreachable() {
        // port 9 (discard) is closed on loopback
        let backend = LiveBackend::new(config(), ReqwestTransport::new(Duration::from_secs(2)).unwrap());
        let err = backend.complete(&call(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err}");
    }
}
