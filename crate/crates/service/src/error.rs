use notana_core::backend::BackendError;
use notana_core::generation::{GenerationError, PartialGeneration};
use notana_core::intent::IntentError;
use notana_core::pipeline::PipelineError;
use notana_core::prompt::PromptError;
use notana_core::raster::RasterError;
use notana_core::timeline::TimelineError;
use notana_core::workspace::WorkspaceError;
use notana_store::StoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Every machine-readable error code the service can return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ValidationFailed,
    NotFound,
    WorkspaceExists,
    WorkspaceLocked,
    GenerationInProgress,
    InferenceSuperseded,
    IdempotencyKeyReused,
    BackendUnavailable,
    BackendAuthMissing,
    BackendRejected,
    BackendInvalidResponse,
    CassetteMiss,
    InterpretationInvalid,
    DecompositionInvalid,
    IntegrityError,
    StorageError,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 17] = [
        Self::ValidationFailed,
        Self::NotFound,
        Self::WorkspaceExists,
        Self::WorkspaceLocked,
        Self::GenerationInProgress,
        Self::InferenceSuperseded,
        Self::IdempotencyKeyReused,
        Self::BackendUnavailable,
        Self::BackendAuthMissing,
        Self::BackendRejected,
        Self::BackendInvalidResponse,
        Self::CassetteMiss,
        Self::InterpretationInvalid,
        Self::DecompositionInvalid,
        Self::IntegrityError,
        Self::StorageError,
        Self::Internal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ValidationFailed => "validation_failed",
            Self::NotFound => "not_found",
            Self::WorkspaceExists => "workspace_exists",
            Self::WorkspaceLocked => "workspace_locked",
            Self::GenerationInProgress => "generation_in_progress",
            Self::InferenceSuperseded => "inference_superseded",
            Self::IdempotencyKeyReused => "idempotency_key_reused",
            Self::BackendUnavailable => "backend_unavailable",
            Self::BackendAuthMissing => "backend_auth_missing",
            Self::BackendRejected => "backend_rejected",
            Self::BackendInvalidResponse => "backend_invalid_response",
            Self::CassetteMiss => "cassette_miss",
            Self::InterpretationInvalid => "interpretation_invalid",
            Self::DecompositionInvalid => "decomposition_invalid",
            Self::IntegrityError => "integrity_error",
            Self::StorageError => "storage_error",
            Self::Internal => "internal",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            Self::ValidationFailed => 400,
            Self::NotFound => 404,
            Self::WorkspaceExists
            | Self::WorkspaceLocked
            | Self::GenerationInProgress
            | Self::InferenceSuperseded => 409,
            Self::IdempotencyKeyReused => 422,
            Self::BackendUnavailable
            | Self::BackendAuthMissing
            | Self::BackendRejected
            | Self::BackendInvalidResponse
            | Self::CassetteMiss
            | Self::InterpretationInvalid
            | Self::DecompositionInvalid => 502,
            Self::IntegrityError | Self::StorageError | Self::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{}: {message}", code.as_str())]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::ValidationFailed, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn status(&self) -> u16 {
        self.code.http_status()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

pub fn backend_code(e: &BackendError) -> &'static str {
    match e {
        BackendError::Timeout => "timeout",
        BackendError::AuthMissing(_) => "auth_missing",
        BackendError::Transport(_) => "transport",
        BackendError::CassetteMiss(_) => "cassette_miss",
        BackendError::Rejected(_) => "rejected",
        BackendError::InvalidResponse(_) => "invalid_response",
        BackendError::Config(_) => "config",
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        let code = match &e {
            BackendError::AuthMissing(_) => ErrorCode::BackendAuthMissing,
            BackendError::CassetteMiss(_) => ErrorCode::CassetteMiss,
            BackendError::Rejected(_) => ErrorCode::BackendRejected,
            BackendError::InvalidResponse(_) => ErrorCode::BackendInvalidResponse,
            BackendError::Timeout | BackendError::Transport(_) | BackendError::Config(_) => {
                ErrorCode::BackendUnavailable
            }
        };
        let mut details = json!({ "backend_code": backend_code(&e) });
        if let BackendError::CassetteMiss(digest) = &e {
            details["request_digest"] = json!(digest);
        }
        ApiError::new(code, e.to_string()).with_details(details)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::BackendUnavailable(b) => b.into(),
            PipelineError::InterpretationInvalid {
                ref raw,
                ref violations,
                attempts,
            } => ApiError::new(ErrorCode::InterpretationInvalid, e.to_string()).with_details(json!({
                "raw": raw,
                "violations": violations,
                "attempts": attempts,
            })),
            PipelineError::DecompositionInvalid(_) => ApiError::new(ErrorCode::DecompositionInvalid, e.to_string()),
            PipelineError::Raster(_) => ApiError::new(ErrorCode::Internal, e.to_string()),
            PipelineError::DimensionMismatch
            | PipelineError::EmptyCanvas
            | PipelineError::NothingPinned
            | PipelineError::Grid(_) => ApiError::validation(e.to_string()),
        }
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::BackendUnavailable { index, source } => {
                let mut err = ApiError::from(source);
                err.message = format!("frame {index}: {}", err.message);
                if let Some(d) = err.details.as_mut() {
                    d["frame_index"] = json!(index);
                }
                err
            }
            GenerationError::GenerationRejected { index, .. } => ApiError::new(ErrorCode::BackendRejected, e.to_string())
                .with_details(json!({ "backend_code": "rejected", "frame_index": index })),
            GenerationError::IndexOutOfRange(_) => ApiError::not_found(e.to_string()),
            GenerationError::Raster(_) => ApiError::new(ErrorCode::Internal, e.to_string()),
            GenerationError::EmptyPrompts
            | GenerationError::NotIndexOrdered { .. }
            | GenerationError::ParentNotReady(_)
            | GenerationError::FrameNotReady(_)
            | GenerationError::RampLength { .. }
            | GenerationError::Cancelled(_) => ApiError::validation(e.to_string()),
        }
    }
}

impl From<PartialGeneration> for ApiError {
    fn from(e: PartialGeneration) -> Self {
        e.error.into()
    }
}

impl From<TimelineError> for ApiError {
    fn from(e: TimelineError) -> Self {
        match e {
            TimelineError::UnknownBlock(_) | TimelineError::UnknownTrack(_) | TimelineError::UnknownMarker(_) => {
                ApiError::not_found(e.to_string())
            }
            _ => ApiError::validation(e.to_string()),
        }
    }
}

impl From<IntentError> for ApiError {
    fn from(e: IntentError) -> Self {
        match e {
            IntentError::UnknownUnit(_) | IntentError::UnknownSlider { .. } => ApiError::not_found(e.to_string()),
            _ => ApiError::validation(e.to_string()),
        }
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        ApiError::validation(e.to_string())
    }
}

impl From<RasterError> for ApiError {
    fn from(e: RasterError) -> Self {
        ApiError::validation(e.to_string())
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        ApiError::new(ErrorCode::Internal, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::Locked(_) => ApiError::new(ErrorCode::WorkspaceLocked, e.to_string()),
            StoreError::Integrity {
                ref snapshot_id,
                ref expected,
                ref actual,
            } => ApiError::new(ErrorCode::IntegrityError, e.to_string()).with_details(json!({
                "snapshot_id": snapshot_id,
                "expected": expected,
                "actual": actual,
            })),
            StoreError::Invalid(inner) => inner.into(),
            _ => ApiError::new(ErrorCode::StorageError, e.to_string()),
        }
    }
}
