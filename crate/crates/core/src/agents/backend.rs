//! Chat backends: the HTTP client and the scripted playback used offline.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::AgentRole;
use crate::error::{Error, Result};
use crate::{fsutil, http};

pub const LLM_URL_ENV: &str = "KGMASD_LLM_BASE_URL";
pub const LLM_KEY_ENV: &str = "KGMASD_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

/// Body of `POST {endpoint}/chat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Deserialize)]
struct ChatResponse {
    content: String,
}

/// Who is calling, and in which iteration of the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallContext {
    pub agent_role: AgentRole,
    pub iteration: u32,
}

/// A chat completion service. Implementations must tolerate concurrent use.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, ctx: &CallContext, request: &ChatRequest) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatBackendConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub api_key_env: String,
    pub timeout_secs: f64,
}

impl Default for ChatBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "deepseek-v2".into(),
            temperature: 0.8,
            top_p: 0.85,
            max_tokens: 1024,
            api_key_env: LLM_KEY_ENV.into(),
            timeout_secs: 120.0,
        }
    }
}

impl ChatBackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("top_p must lie in (0, 1]".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpChatBackend {
    /// Reads the bearer token from the env var named by `api_key_env`.
    pub fn new(config: &ChatBackendConfig) -> Result<Self> {
        config.validate()?;
        if config.endpoint.is_empty() {
            return Err(Error::Config(format!(
                "no chat endpoint configured (set --llm-url or {LLM_URL_ENV})"
            )));
        }
        Ok(Self {
            endpoint: config.endpoint.clone(),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs_f64(config.timeout_secs),
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, _ctx: &CallContext, request: &ChatRequest) -> Result<String> {
        let url = http::join_url(&self.endpoint, "chat");
        let resp: ChatResponse = http::post_json(&url, request, self.api_key.as_deref(), self.timeout)?;
        Ok(resp.content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptMatch {
    pub agent_role: AgentRole,
    /// Absent means "any iteration".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub when: ScriptMatch,
    pub response: String,
}

/// Deterministic playback of recorded replies.
///
/// A call is answered from the entries whose match names its role and
/// iteration; if there are none, from the role's iteration-free entries.
/// Entries for the same match are consumed in file order and the last one
/// repeats once exhausted.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<(AgentRole, Option<u32>), Vec<String>>,
    cursors: Mutex<HashMap<(AgentRole, Option<u32>), usize>>,
    calls: Mutex<Vec<(CallContext, ChatRequest)>>,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut map: HashMap<_, Vec<String>> = HashMap::new();
        for e in entries {
            map.entry((e.when.agent_role, e.when.iteration))
                .or_default()
                .push(e.response);
        }
        Self {
            entries: map,
            ..Default::default()
        }
    }

    pub fn from_jsonl(path: &Path) -> Result<Self> {
        let entries: Vec<ScriptEntry> = fsutil::read_jsonl(path)?;
        Ok(Self::new(entries))
    }

    /// Every request seen so far, in call order.
    pub fn calls(&self) -> Vec<(CallContext, ChatRequest)> {
        self.calls.lock().expect("calls lock").clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, ctx: &CallContext, request: &ChatRequest) -> Result<String> {
        self.calls.lock().expect("calls lock").push((*ctx, request.clone()));
        let key = [(ctx.agent_role, Some(ctx.iteration)), (ctx.agent_role, None)]
            .into_iter()
            .find(|k| self.entries.contains_key(k))
            .ok_or_else(|| {
                Error::Contract(format!(
                    "script has no response for {} at iteration {}",
                    ctx.agent_role, ctx.iteration
                ))
            })?;
        let replies = &self.entries[&key];
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cursor = cursors.entry(key).or_insert(0);
        let reply = replies[(*cursor).min(replies.len() - 1)].clone();
        *cursor += 1;
        Ok(reply)
    }
}

/// Transport retries with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay_ms: 0,
        }
    }

    pub fn call(&self, backend: &dyn ChatBackend, ctx: &CallContext, request: &ChatRequest) -> Result<String> {
        let mut attempt = 0;
        loop {
            match backend.complete(ctx, request) {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let delay = self.base_delay_ms.saturating_mul(1 << attempt);
                    tracing::warn!(role = %ctx.agent_role, attempt, "transport error, retrying in {delay} ms: {e}");
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn ctx(role: AgentRole, iteration: u32) -> CallContext {
        CallContext {
            agent_role: role,
            iteration,
        }
    }

    fn req() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user("hi")],
            temperature: 0.8,
            top_p: 0.85,
            max_tokens: 16,
        }
    }

    fn entry(role: AgentRole, iteration: Option<u32>, response: &str) -> ScriptEntry {
        ScriptEntry {
            when: ScriptMatch {
                agent_role: role,
                iteration,
            },
            response: response.into(),
        }
    }

    #[test]
    fn scripted_prefers_exact_iteration_then_wildcard() {
        let b = ScriptedBackend::new([
            entry(AgentRole::Verifier, Some(1), "reject #1: no"),
            entry(AgentRole::Verifier, None, "all valid"),
        ]);
        assert_eq!(
            b.complete(&ctx(AgentRole::Verifier, 1), &req()).unwrap(),
            "reject #1: no"
        );
        assert_eq!(b.complete(&ctx(AgentRole::Verifier, 2), &req()).unwrap(), "all valid");
        assert!(matches!(
            b.complete(&ctx(AgentRole::KgMaster, 1), &req()),
            Err(Error::Contract(_))
        ));
        assert_eq!(b.calls().len(), 3);
    }

    #[test]
    fn scripted_consumes_in_order_then_repeats_last() {
        let b = ScriptedBackend::new([
            entry(AgentRole::EntityExtractor, Some(1), "a"),
            entry(AgentRole::EntityExtractor, Some(1), "b"),
        ]);
        let c = ctx(AgentRole::EntityExtractor, 1);
        let got: Vec<_> = (0..3).map(|_| b.complete(&c, &req()).unwrap()).collect();
        assert_eq!(got, ["a", "b", "b"]);
    }

    #[test]
    fn script_line_format() {
        let e: ScriptEntry =
            serde_json::from_str(r#"{"match":{"agent_role":"kr_distiller","iteration":2},"response":"x"}"#).unwrap();
        assert_eq!(e.when.agent_role, AgentRole::KrDistiller);
        assert_eq!(e.when.iteration, Some(2));
    }

    struct Flaky {
        failures: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn complete(&self, _: &CallContext, _: &ChatRequest) -> Result<String> {
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                Err(Error::Transport("down".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn retry_policy_recovers_within_budget() {
        let policy = RetryPolicy {
            max_retries: 2,
            base_delay_ms: 0,
        };
        let b = Flaky {
            failures: AtomicU32::new(2),
        };
        assert_eq!(policy.call(&b, &ctx(AgentRole::KgMaster, 1), &req()).unwrap(), "ok");
        let b = Flaky {
            failures: AtomicU32::new(3),
        };
        assert!(policy.call(&b, &ctx(AgentRole::KgMaster, 1), &req()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ChatBackendConfig::default().validate().is_ok());
        let bad = ChatBackendConfig {
            top_p: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ChatBackendConfig {
            temperature: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
