use std::sync::Arc;
use std::time::Duration;

use notana_core::backend::{prompt_digest, request_digest, BackendError, ImageGenerator, Interpreter};
use notana_core::raster::Raster;
use serde_json::Value;

use crate::cassette::{Cassette, CassetteEntry};
use crate::config::{BackendConfig, BackendKind, ConfigError, Protocol, RecordReplayMode};
use crate::retry::{with_retries, RetryPolicy, Sleeper};
use crate::transport::{ReqwestTransport, Transport};
use crate::wire::{build_request, decode_image, extract_image_bytes, extract_text};

type EnvLookup = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Shared plumbing: credentials, retry, cassette record/replay.
#[derive(Clone)]
struct Gateway {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    cassette: Option<Cassette>,
    retry: RetryPolicy,
    env: EnvLookup,
}

impl Gateway {
    fn new(config: BackendConfig, expected: BackendKind) -> Result<Self, ConfigError> {
        config.validate()?;
        if config.kind != expected {
            return Err(ConfigError::Invalid(format!(
                "expected a {expected:?} backend, got {:?}",
                config.kind
            )));
        }
        Ok(Self {
            cassette: config.cassette_dir.clone().map(Cassette::new),
            retry: RetryPolicy::new(config.max_retries, Duration::from_millis(config.backoff_base_ms)),
            transport: Arc::new(ReqwestTransport::new()),
            env: Arc::new(|name| std::env::var(name).ok()),
            config,
        })
    }

    fn cassette_error(e: impl std::fmt::Display) -> BackendError {
        BackendError::Config(format!("cassette: {e}"))
    }

    /// Reply bytes for a request, from the cassette or the network per mode.
    fn exchange(
        &self,
        image: &Raster,
        prompt: &str,
        extract: impl Fn(Protocol, &Value) -> Result<Vec<u8>, BackendError>,
    ) -> Result<Vec<u8>, BackendError> {
        let digest = request_digest(image, prompt);
        if self.config.mode == RecordReplayMode::Replay {
            let cassette = self.cassette.as_ref().expect("validated: replay has cassette");
            return cassette
                .get(&digest)
                .map_err(Self::cassette_error)?
                .ok_or(BackendError::CassetteMiss(digest));
        }

        let var = self.config.credential_var();
        let key = (self.env)(var)
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::AuthMissing(var.to_string()))?;
        let request = build_request(&self.config, &key, image, prompt)?;
        let reply = with_retries(&self.retry, || self.transport.post_json(&request))?;
        let bytes = extract(self.config.protocol, &reply)?;

        if self.config.mode == RecordReplayMode::Record {
            let cassette = self.cassette.as_ref().expect("validated: record has cassette");
            let entry = CassetteEntry {
                kind: format!("{:?}", self.config.kind).to_lowercase(),
                model: self.config.model.clone(),
                prompt_sha256: prompt_digest(prompt),
                bytes: bytes.len() as u64,
                sampling: "provider defaults".to_string(),
            };
            cassette.put(&digest, &bytes, entry).map_err(Self::cassette_error)?;
        }
        Ok(bytes)
    }
}

macro_rules! builder_methods {
    () => {
        /// Replaces the HTTP transport (tests, proxies).
        pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
            self.inner.transport = transport;
            self
        }

        /// Replaces how backoff waits (tests use a recorder instead of sleeping).
        pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
            self.inner.retry.sleeper = sleeper;
            self
        }

        /// Replaces environment lookup for the credential variable.
        pub fn with_env(mut self, env: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> Self {
            self.inner.env = Arc::new(env);
            self
        }

        pub fn config(&self) -> &BackendConfig {
            &self.inner.config
        }
    };
}

/// Vision-language interpreter over HTTP or a cassette.
#[derive(Clone)]
pub struct InterpreterClient {
    inner: Gateway,
}

impl InterpreterClient {
    pub fn new(config: BackendConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            inner: Gateway::new(config, BackendKind::Interpreter)?,
        })
    }

    builder_methods!();
}

impl Interpreter for InterpreterClient {
    fn interpret(&self, image: &Raster, prompt: &str) -> Result<String, BackendError> {
        let bytes = self
            .inner
            .exchange(image, prompt, |p, v| extract_text(p, v).map(String::into_bytes))?;
        String::from_utf8(bytes).map_err(|_| BackendError::InvalidResponse("reply is not UTF-8".into()))
    }
}

/// Image generator over HTTP or a cassette. Replies are resampled to the
/// input size when the model answers at another resolution.
#[derive(Clone)]
pub struct ImageClient {
    inner: Gateway,
}

impl ImageClient {
    pub fn new(config: BackendConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            inner: Gateway::new(config, BackendKind::Image)?,
        })
    }

    builder_methods!();
}

impl ImageGenerator for ImageClient {
    fn generate_image(&self, image: &Raster, prompt: &str) -> Result<Raster, BackendError> {
        let bytes = self.inner.exchange(image, prompt, extract_image_bytes)?;
        decode_image(&bytes, image.width(), image.height())
    }
}
