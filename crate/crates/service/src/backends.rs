//! Backend selection: unconfigured, scripted mocks, cassette replay or live HTTP.

use std::path::Path;
use std::sync::Arc;

use notana_core::backend::{BackendError, DigestStamper, ImageGenerator, Interpreter, ScriptedInterpreter};
use notana_core::raster::Raster;
use notana_gateway::{BackendConfig, BackendKind, ConfigError, GatewayConfig, ImageClient, InterpreterClient};
use serde::{Deserialize, Serialize};

/// Stands in for a backend nobody configured.
#[derive(Debug, Clone, Copy)]
pub struct Unconfigured(pub BackendKind);

impl Unconfigured {
    fn error(&self) -> BackendError {
        let which = match self.0 {
            BackendKind::Interpreter => "interpreter",
            BackendKind::Image => "image",
        };
        BackendError::Config(format!("no {which} backend configured"))
    }
}

impl Interpreter for Unconfigured {
    fn interpret(&self, _: &Raster, _: &str) -> Result<String, BackendError> {
        Err(self.error())
    }
}

impl ImageGenerator for Unconfigured {
    fn generate_image(&self, _: &Raster, _: &str) -> Result<Raster, BackendError> {
        Err(self.error())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendStatus {
    pub configured: bool,
    /// `none`, `mock`, `live`, `record` or `replay`.
    pub mode: String,
}

impl BackendStatus {
    fn of(mode: &str) -> Self {
        Self {
            configured: mode != "none",
            mode: mode.to_string(),
        }
    }
}

#[derive(Clone)]
pub struct Backends {
    pub interpreter: Arc<dyn Interpreter>,
    pub image: Arc<dyn ImageGenerator>,
    pub interpreter_status: BackendStatus,
    pub image_status: BackendStatus,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("interpreter", &self.interpreter_status)
            .field("image", &self.image_status)
            .finish()
    }
}

impl Backends {
    pub fn unconfigured() -> Self {
        Self {
            interpreter: Arc::new(Unconfigured(BackendKind::Interpreter)),
            image: Arc::new(Unconfigured(BackendKind::Image)),
            interpreter_status: BackendStatus::of("none"),
            image_status: BackendStatus::of("none"),
        }
    }

    pub fn new(interpreter: Arc<dyn Interpreter>, image: Arc<dyn ImageGenerator>, mode: &str) -> Self {
        Self {
            interpreter,
            image,
            interpreter_status: BackendStatus::of(mode),
            image_status: BackendStatus::of(mode),
        }
    }

    /// Scripted interpreter plus the digest-stamping image mock.
    pub fn mock(interpreter: ScriptedInterpreter) -> Self {
        Self::new(Arc::new(interpreter), Arc::new(DigestStamper), "mock")
    }

    /// Both backends answer from one cassette directory; no network.
    pub fn replay(dir: &Path) -> Result<Self, ConfigError> {
        Ok(Self {
            interpreter: Arc::new(InterpreterClient::new(BackendConfig::replay(BackendKind::Interpreter, dir))?),
            image: Arc::new(ImageClient::new(BackendConfig::replay(BackendKind::Image, dir))?),
            interpreter_status: BackendStatus::of("replay"),
            image_status: BackendStatus::of("replay"),
        })
    }

    /// Whatever the config file provides; missing tables stay unconfigured.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, ConfigError> {
        let mut out = Self::unconfigured();
        if let Some(c) = &config.interpreter {
            out.interpreter = Arc::new(InterpreterClient::new(c.clone())?);
            out.interpreter_status = BackendStatus::of(mode_name(c));
        }
        if let Some(c) = &config.image {
            out.image = Arc::new(ImageClient::new(c.clone())?);
            out.image_status = BackendStatus::of(mode_name(c));
        }
        Ok(out)
    }

    pub fn degraded(&self) -> bool {
        !(self.interpreter_status.configured && self.image_status.configured)
    }
}

fn mode_name(c: &BackendConfig) -> &'static str {
    match c.mode {
        notana_gateway::RecordReplayMode::Live => "live",
        notana_gateway::RecordReplayMode::Record => "record",
        notana_gateway::RecordReplayMode::Replay => "replay",
    }
}
