use std::sync::OnceLock;
use std::time::Duration;

use notana_core::backend::BackendError;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
    pub timeout: Duration,
}

/// Sends one JSON POST and returns the JSON reply.
pub trait Transport: Send + Sync {
    fn post_json(&self, request: &HttpRequest) -> Result<Value, BackendError>;
}

/// Blocking reqwest transport. The client is built on first use, so a
/// transport that is never called never opens a socket.
#[derive(Default)]
pub struct ReqwestTransport {
    client: OnceLock<reqwest::blocking::Client>,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self::default()
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, BackendError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let built = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(self.client.get_or_init(|| built))
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, request: &HttpRequest) -> Result<Value, BackendError> {
        let mut builder = self.client()?.post(&request.url).timeout(request.timeout).json(&request.body);
        for (name, value) in &request.headers {
            builder = builder.header(name, value);
        }
        let response = builder.send().map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        if status.is_success() {
            return serde_json::from_str(&text)
                .map_err(|e| BackendError::InvalidResponse(format!("reply is not JSON: {e}")));
        }
        let snippet: String = text.chars().take(300).collect();
        let message = format!("HTTP {}: {snippet}", status.as_u16());
        Err(match status.as_u16() {
            408 | 429 | 500..=599 => BackendError::Transport(message),
            _ => BackendError::Rejected(message),
        })
    }
}

fn classify(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transport(e.to_string())
    }
}
