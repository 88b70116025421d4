//! Backend gateway: HTTP adapters for interpreter and image models with
//! retry, credentials from the environment, and digest-keyed record/replay
//! cassettes so that runs can be reproduced without the network.

mod cassette;
mod client;
mod config;
mod retry;
mod transport;
mod wire;

pub use cassette::{Cassette, CassetteEntry, CassetteError};
pub use client::{ImageClient, InterpreterClient};
pub use config::{BackendConfig, BackendKind, ConfigError, GatewayConfig, Protocol, RecordReplayMode};
pub use retry::{with_retries, RetryPolicy, Sleeper};
pub use transport::{HttpRequest, ReqwestTransport, Transport};
pub use wire::fit_to;
