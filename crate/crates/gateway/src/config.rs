use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_INTERPRETER_KEY_ENV: &str = "NOTANA_INTERPRETER_KEY";
pub const DEFAULT_IMAGE_KEY_ENV: &str = "NOTANA_IMAGE_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid backend config: {0}")]
    Parse(String),
    #[error("invalid backend config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Interpreter,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordReplayMode {
    #[default]
    Live,
    Record,
    Replay,
}

/// Wire format spoken by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// `POST <endpoint>` with a chat-completions body; text replies only.
    OpenaiChat,
    /// `POST <endpoint>/models/<model>:generateContent`; text or inline image replies.
    GeminiGenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub protocol: Protocol,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub mode: RecordReplayMode,
    #[serde(default)]
    pub cassette_dir: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    1000
}

impl BackendConfig {
    pub fn new(kind: BackendKind, protocol: Protocol, endpoint: &str, model: &str) -> Self {
        Self {
            kind,
            protocol,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            credential_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff(),
            mode: RecordReplayMode::Live,
            cassette_dir: None,
        }
    }

    /// Replay-only config reading from `dir`; never touches the network.
    pub fn replay(kind: BackendKind, dir: impl Into<PathBuf>) -> Self {
        let protocol = match kind {
            BackendKind::Interpreter => Protocol::OpenaiChat,
            BackendKind::Image => Protocol::GeminiGenerate,
        };
        Self {
            mode: RecordReplayMode::Replay,
            cassette_dir: Some(dir.into()),
            ..Self::new(kind, protocol, "", "")
        }
    }

    pub fn credential_var(&self) -> &str {
        self.credential_env.as_deref().unwrap_or(match self.kind {
            BackendKind::Interpreter => DEFAULT_INTERPRETER_KEY_ENV,
            BackendKind::Image => DEFAULT_IMAGE_KEY_ENV,
        })
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ConfigError::Invalid(format!("timeout_secs must be positive, got {}", self.timeout_secs)));
        }
        if self.mode != RecordReplayMode::Live && self.cassette_dir.is_none() {
            return Err(ConfigError::Invalid("record and replay modes need cassette_dir".into()));
        }
        if self.mode != RecordReplayMode::Replay {
            if self.endpoint.trim().is_empty() {
                return Err(ConfigError::Invalid("endpoint is required outside replay mode".into()));
            }
            if self.model.trim().is_empty() {
                return Err(ConfigError::Invalid("model is required outside replay mode".into()));
            }
        }
        if self.kind == BackendKind::Image && self.protocol == Protocol::OpenaiChat {
            return Err(ConfigError::Invalid("openai_chat cannot return images; use gemini_generate".into()));
        }
        Ok(())
    }
}

/// Both backends, as read from a TOML file with `[interpreter]` and `[image]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub interpreter: Option<BackendConfig>,
    pub image: Option<BackendConfig>,
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (expected, backend) in [
            (BackendKind::Interpreter, &config.interpreter),
            (BackendKind::Image, &config.image),
        ] {
            if let Some(b) = backend {
                if b.kind != expected {
                    return Err(ConfigError::Invalid(format!("[{expected:?}] table has kind {:?}", b.kind)));
                }
                b.validate()?;
            }
        }
        Ok(config)
    }

    /// Reads the file; relative cassette directories resolve against its folder.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for b in [&mut config.interpreter, &mut config.image].into_iter().flatten() {
            if let Some(dir) = &b.cassette_dir {
                if dir.is_relative() {
                    b.cassette_dir = Some(base.join(dir));
                }
            }
        }
        Ok(config)
    }
}
