//! Service layer: workspace-scoped engine operations, the HTTP API over them,
//! backend selection and offline demos.

pub mod backends;
pub mod demo;
pub mod engine;
pub mod error;
pub mod http;

pub use backends::{BackendStatus, Backends};
pub use engine::{BlockOp, CreateRequest, Engine, FrameView, GenerationTicket, Health, TimelineUpdate, WorkspaceView};
pub use error::{ApiError, ErrorCode};
pub use http::router;
