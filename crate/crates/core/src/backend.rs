//! Backend contracts plus the deterministic mocks used offline and in tests.

use std::collections::VecDeque;
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{Raster, Rgba};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("credential missing: environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no cassette entry for request {0}")]
    CassetteMiss(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("unusable backend response: {0}")]
    InvalidResponse(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    /// Worth another attempt with the same request.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Timeout | Self::Transport(_))
    }
}

/// Vision-language model: image plus prompt in, raw text out.
pub trait Interpreter: Send + Sync {
    fn interpret(&self, image: &Raster, prompt: &str) -> Result<String, BackendError>;
}

/// Image model: conditioning image plus prompt in, image out.
pub trait ImageGenerator: Send + Sync {
    fn generate_image(&self, image: &Raster, prompt: &str) -> Result<Raster, BackendError>;
}

impl<T: Interpreter + ?Sized> Interpreter for std::sync::Arc<T> {
    fn interpret(&self, image: &Raster, prompt: &str) -> Result<String, BackendError> {
        (**self).interpret(image, prompt)
    }
}

impl<T: ImageGenerator + ?Sized> ImageGenerator for std::sync::Arc<T> {
    fn generate_image(&self, image: &Raster, prompt: &str) -> Result<Raster, BackendError> {
        (**self).generate_image(image, prompt)
    }
}

/// Stable key for a request: SHA-256 over dimensions, raw RGBA and prompt.
pub fn request_digest(image: &Raster, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"notana-request-v1\0");
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.as_bytes());
    h.update((prompt.len() as u64).to_le_bytes());
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

pub fn prompt_digest_bytes(prompt: &str) -> [u8; 32] {
    Sha256::digest(prompt.as_bytes()).into()
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(prompt_digest_bytes(prompt))
}

struct Rule {
    needle: Option<String>,
    replies: VecDeque<Result<String, BackendError>>,
    last: Option<Result<String, BackendError>>,
}

/// Interpreter replaying scripted replies.
///
/// Rules are tried in insertion order; the first whose needle occurs in the
/// prompt answers (a rule without needle matches everything). Each rule hands
/// out its replies in order and then keeps repeating the final one.
#[derive(Default)]
pub struct ScriptedInterpreter {
    rules: Mutex<Vec<Rule>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedInterpreter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Answers every prompt with `replies`.
    pub fn always<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new().fallback(replies)
    }

    pub fn when<S: Into<String>>(self, needle: &str, replies: impl IntoIterator<Item = S>) -> Self {
        self.push(Some(needle.to_string()), replies.into_iter().map(|r| Ok(r.into())).collect())
    }

    pub fn fallback<S: Into<String>>(self, replies: impl IntoIterator<Item = S>) -> Self {
        self.push(None, replies.into_iter().map(|r| Ok(r.into())).collect())
    }

    pub fn failing_with(self, error: BackendError) -> Self {
        self.push(None, VecDeque::from([Err(error)]))
    }

    fn push(self, needle: Option<String>, replies: VecDeque<Result<String, BackendError>>) -> Self {
        self.rules.lock().expect("rules lock").push(Rule {
            needle,
            replies,
            last: None,
        });
        self
    }

    /// Prompts received so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("calls lock").clone()
    }
}

impl Interpreter for ScriptedInterpreter {
    fn interpret(&self, _image: &Raster, prompt: &str) -> Result<String, BackendError> {
        self.calls.lock().expect("calls lock").push(prompt.to_string());
        let mut rules = self.rules.lock().expect("rules lock");
        let rule = rules
            .iter_mut()
            .find(|r| r.needle.as_deref().is_none_or(|n| prompt.contains(n)))
            .ok_or_else(|| BackendError::Rejected("no scripted reply for this prompt".into()))?;
        if let Some(next) = rule.replies.pop_front() {
            rule.last = Some(next);
        }
        rule.last
            .clone()
            .unwrap_or_else(|| Err(BackendError::Rejected("empty script".into())))
    }
}

/// Marks a stamped row: pixel 8 holds `[N, A, N, row]`.
pub const STAMP_MAGIC: [u8; 3] = [0x4E, 0x41, 0x4E];
const STAMP_PIXELS: u32 = 8;

/// Image mock that copies its input and writes the SHA-256 of the prompt into
/// the next free top row (32 bytes over pixels 0..8, magic in pixel 8), so each
/// output carries the digests of every prompt in its conditioning chain.
#[derive(Debug, Default, Clone, Copy)]
pub struct DigestStamper;

impl ImageGenerator for DigestStamper {
    fn generate_image(&self, image: &Raster, prompt: &str) -> Result<Raster, BackendError> {
        let row = decode_stamps(image).len() as u32;
        if image.width() <= STAMP_PIXELS || row >= image.height() || row > u8::MAX as u32 {
            return Err(BackendError::Rejected(format!(
                "{}x{} image has no room for stamp row {row}",
                image.width(),
                image.height()
            )));
        }
        let mut out = image.clone();
        let digest = prompt_digest_bytes(prompt);
        for (i, chunk) in digest.chunks_exact(4).enumerate() {
            let px: Rgba = chunk.try_into().expect("4-byte chunk");
            out.set_pixel(i as u32, row, px);
        }
        out.set_pixel(STAMP_PIXELS, row, [STAMP_MAGIC[0], STAMP_MAGIC[1], STAMP_MAGIC[2], row as u8]);
        Ok(out)
    }
}

/// Digests stamped by [`DigestStamper`], oldest first.
pub fn decode_stamps(image: &Raster) -> Vec<[u8; 32]> {
    let mut out = Vec::new();
    if image.width() <= STAMP_PIXELS {
        return out;
    }
    for row in 0..image.height().min(256) {
        let magic = image.pixel(STAMP_PIXELS, row);
        if magic[..3] != STAMP_MAGIC || u32::from(magic[3]) != row {
            break;
        }
        let mut digest = [0u8; 32];
        for i in 0..STAMP_PIXELS {
            digest[i as usize * 4..i as usize * 4 + 4].copy_from_slice(&image.pixel(i, row));
        }
        out.push(digest);
    }
    out
}

/// Wraps a generator and fails chosen calls (0-based call count).
pub struct FlakyGenerator<G> {
    inner: G,
    fail_on: Vec<usize>,
    error: BackendError,
    calls: Mutex<usize>,
}

impl<G: ImageGenerator> FlakyGenerator<G> {
    pub fn new(inner: G, fail_on: impl IntoIterator<Item = usize>, error: BackendError) -> Self {
        Self {
            inner,
            fail_on: fail_on.into_iter().collect(),
            error,
            calls: Mutex::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        *self.calls.lock().expect("calls lock")
    }
}

impl<G: ImageGenerator> ImageGenerator for FlakyGenerator<G> {
    fn generate_image(&self, image: &Raster, prompt: &str) -> Result<Raster, BackendError> {
        let call = {
            let mut calls = self.calls.lock().expect("calls lock");
            *calls += 1;
            *calls - 1
        };
        if self.fail_on.contains(&call) {
            return Err(self.error.clone());
        }
        self.inner.generate_image(image, prompt)
    }
}
