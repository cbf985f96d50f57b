use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::context::{ContextError, PromptContext};
use super::live::{LiveAdapter, LiveBackend, ReqwestTransport};
use super::scripted::{ScriptError, ScriptedBackend};
use super::AgentRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    Scripted,
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Live => "live",
            Self::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub script_path: Option<PathBuf>,
    /// Name of the environment variable holding the API credential.
    pub api_key_env: Option<String>,
    pub adapter: LiveAdapter,
    pub max_tokens: u32,
    /// First retry delay; doubles on each further retry.
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Scripted,
            endpoint: None,
            model_name: None,
            temperature: 1.0,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            script_path: None,
            api_key_env: None,
            adapter: LiveAdapter::Generic,
            max_tokens: 1024,
            backoff_base: Duration::from_secs(1),
        }
    }
}

impl BackendConfig {
    pub fn scripted(script_path: impl Into<PathBuf>) -> Self {
        Self { mode: BackendMode::Scripted, script_path: Some(script_path.into()), ..Self::default() }
    }

    pub fn live(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            mode: BackendMode::Live,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        match self.mode {
            BackendMode::Live if self.endpoint.is_none() => {
                Err(BackendError::Config("live backend needs an endpoint".into()))
            }
            BackendMode::Live if self.model_name.is_none() => {
                Err(BackendError::Config("live backend needs a model name".into()))
            }
            BackendMode::Scripted if self.script_path.is_none() => {
                Err(BackendError::Config("scripted backend needs a script path".into()))
            }
            _ => Ok(()),
        }
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Where in a dialogue run a generation request comes from.
///
/// `turn_index` is the number of dialogue turns already recorded in the run
/// (counted across both conversations) when the request is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallSite<'a> {
    pub role: AgentRole,
    pub turn_index: usize,
    pub vignette: &'a str,
    pub constitution: &'a str,
    /// Regeneration attempt of the enclosing run, starting at 0.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Transport attempts used, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub role: AgentRole,
    pub request_digest: String,
    pub response_text: String,
    pub latency: Duration,
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("non-alternating context: {0}")]
    Context(#[from] ContextError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("could not read model reply: {0}")]
    Decode(String),
    #[error("{role} backend returned an empty response")]
    EmptyResponse { role: AgentRole },
}

/// Text-in/text-out model access.
pub trait TextBackend: Send + Sync {
    fn complete(&self, call: &CallSite<'_>, ctx: &PromptContext) -> Result<Completion, BackendError>;

    fn mode(&self) -> BackendMode;
}

impl<T: TextBackend + ?Sized> TextBackend for &T {
    fn complete(&self, call: &CallSite<'_>, ctx: &PromptContext) -> Result<Completion, BackendError> {
        (**self).complete(call, ctx)
    }

    fn mode(&self) -> BackendMode {
        (**self).mode()
    }
}

impl<T: TextBackend + ?Sized> TextBackend for Box<T> {
    fn complete(&self, call: &CallSite<'_>, ctx: &PromptContext) -> Result<Completion, BackendError> {
        (**self).complete(call, ctx)
    }

    fn mode(&self) -> BackendMode {
        (**self).mode()
    }
}

/// Requests the next assistant message for `ctx`.
pub fn generate(
    backend: &dyn TextBackend,
    call: &CallSite<'_>,
    ctx: &PromptContext,
) -> Result<(String, GenerationRecord), BackendError> {
    ctx.check_ready()?;
    let started = Instant::now();
    let completion = backend.complete(call, ctx)?;
    if completion.text.trim().is_empty() {
        return Err(BackendError::EmptyResponse { role: call.role });
    }
    let record = GenerationRecord {
        role: call.role,
        request_digest: ctx.digest(),
        response_text: completion.text.clone(),
        latency: started.elapsed(),
        attempt: completion.attempts,
    };
    tracing::debug!(role = %call.role, turn = call.turn_index, digest = %record.request_digest, "generated");
    Ok((completion.text, record))
}

pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn TextBackend>, BackendError> {
    config.validate()?;
    Ok(match config.mode {
        BackendMode::Scripted => {
            Box::new(ScriptedBackend::from_file(config.script_path.as_ref().expect("validated"))?)
        }
        BackendMode::Live => Box::new(LiveBackend::new(config.clone(), ReqwestTransport::new(config.timeout)?)),
    })
}
