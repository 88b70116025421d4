//! Progressive keyframe generation.
//!
//! Frame `i` is generated from frame `i - 1` (frame 0 from the base drawing)
//! plus its own prompt, strictly in order.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{prompt_digest, BackendError, ImageGenerator};
use crate::prompt::FramePrompt;
use crate::raster::{composite_over, Raster, RasterError};

/// Parent id of frame 0.
pub const BASE_FRAME_ID: &str = "base";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    Pending,
    Generating,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub marker_id: String,
    pub index: usize,
    pub status: FrameStatus,
    pub image: Option<Raster>,
    pub prompt: String,
    pub prompt_digest: String,
    pub parent_frame_id: Option<String>,
    /// Bumped each time the frame is (re)generated.
    #[serde(default)]
    pub revision: u32,
    /// The marker this frame was generated for no longer sits on a block end.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub orphaned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FrameRecord {
    pub fn pending(prompt: &FramePrompt) -> Self {
        Self {
            frame_id: frame_id(prompt.index),
            marker_id: prompt.marker_id.clone(),
            index: prompt.index,
            status: FrameStatus::Pending,
            image: None,
            prompt: prompt.text.clone(),
            prompt_digest: prompt_digest(&prompt.text),
            parent_frame_id: Some(parent_id(prompt.index)),
            revision: 0,
            orphaned: false,
            error: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.status == FrameStatus::Done && self.image.is_some()
    }
}

pub fn frame_id(index: usize) -> String {
    format!("f{index}")
}

fn parent_id(index: usize) -> String {
    match index {
        0 => BASE_FRAME_ID.to_string(),
        i => frame_id(i - 1),
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenerationError {
    #[error("no prompts to generate from")]
    EmptyPrompts,
    #[error("prompts must be ordered by index 0..n, found {found} at position {position}")]
    NotIndexOrdered { position: usize, found: usize },
    #[error("frame {index}: backend unavailable: {source}")]
    BackendUnavailable { index: usize, source: BackendError },
    #[error("frame {index}: generation rejected: {reason}")]
    GenerationRejected { index: usize, reason: String },
    #[error("frame {0} has no finished parent frame")]
    ParentNotReady(usize),
    #[error("frame index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("frame {0} is not finished")]
    FrameNotReady(usize),
    #[error("opacity ramp has {ramp} entries for {frames} frames")]
    RampLength { ramp: usize, frames: usize },
    #[error("generation cancelled before frame {0}")]
    Cancelled(usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Failure partway through a run; `records` holds everything finished so far.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{error}")]
pub struct PartialGeneration {
    pub error: GenerationError,
    pub records: Vec<FrameRecord>,
}

/// Cancellation flag checked at each frame boundary.
#[derive(Debug, Default)]
pub struct GenerationControl {
    cancel: AtomicBool,
}

impl GenerationControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

pub fn generate_frames(
    base: &Raster,
    prompts: &[FramePrompt],
    backend: &dyn ImageGenerator,
) -> Result<Vec<FrameRecord>, PartialGeneration> {
    generate_frames_with(base, prompts, backend, &GenerationControl::new(), &mut |_| {})
}

pub fn generate_frames_with(
    base: &Raster,
    prompts: &[FramePrompt],
    backend: &dyn ImageGenerator,
    control: &GenerationControl,
    on_frame: &mut dyn FnMut(&FrameRecord),
) -> Result<Vec<FrameRecord>, PartialGeneration> {
    let fail = |error| PartialGeneration {
        error,
        records: Vec::new(),
    };
    if prompts.is_empty() {
        return Err(fail(GenerationError::EmptyPrompts));
    }
    if let Some((position, p)) = prompts.iter().enumerate().find(|(i, p)| p.index != *i) {
        return Err(fail(GenerationError::NotIndexOrdered {
            position,
            found: p.index,
        }));
    }
    let records = prompts.iter().map(FrameRecord::pending).collect();
    generate_pending(base, records, backend, control, on_frame)
}

/// Generates every non-done frame in index order, each from its predecessor.
///
/// On failure at `i`, frame `i` is failed, later frames stay pending and
/// everything before `i` is returned untouched.
pub fn generate_pending(
    base: &Raster,
    mut records: Vec<FrameRecord>,
    backend: &dyn ImageGenerator,
    control: &GenerationControl,
    on_frame: &mut dyn FnMut(&FrameRecord),
) -> Result<Vec<FrameRecord>, PartialGeneration> {
    for i in 0..records.len() {
        if records[i].is_done() {
            continue;
        }
        if control.is_cancelled() {
            return Err(PartialGeneration {
                error: GenerationError::Cancelled(i),
                records,
            });
        }
        if let Err(error) = generate_one(base, &mut records, i, backend, on_frame) {
            return Err(PartialGeneration { error, records });
        }
    }
    Ok(records)
}

fn generate_one(
    base: &Raster,
    records: &mut [FrameRecord],
    index: usize,
    backend: &dyn ImageGenerator,
    on_frame: &mut dyn FnMut(&FrameRecord),
) -> Result<(), GenerationError> {
    let parent = match index {
        0 => base.clone(),
        i => match &records[i - 1] {
            r if r.is_done() => r.image.clone().expect("done frame has image"),
            _ => return Err(GenerationError::ParentNotReady(index)),
        },
    };
    records[index].status = FrameStatus::Generating;
    records[index].error = None;
    on_frame(&records[index]);

    let outcome = backend
        .generate_image(&parent, &records[index].prompt)
        .map_err(|source| match source {
            BackendError::Rejected(reason) => GenerationError::GenerationRejected { index, reason },
            source => GenerationError::BackendUnavailable { index, source },
        })
        .and_then(|image| {
            if image.dimensions() == parent.dimensions() {
                Ok(image)
            } else {
                Err(GenerationError::GenerationRejected {
                    index,
                    reason: format!(
                        "backend returned {:?}, expected {:?}",
                        image.dimensions(),
                        parent.dimensions()
                    ),
                })
            }
        });

    let record = &mut records[index];
    match outcome {
        Ok(image) => {
            record.image = Some(image);
            record.status = FrameStatus::Done;
            record.revision += 1;
            record.orphaned = false;
            on_frame(record);
            Ok(())
        }
        Err(e) => {
            record.status = FrameStatus::Failed;
            record.error = Some(e.to_string());
            on_frame(record);
            Err(e)
        }
    }
}

/// Regenerates frame `index` from its parent and resets every later frame to
/// pending, keeping their prompts.
pub fn regenerate_frame(
    base: &Raster,
    records: &[FrameRecord],
    index: usize,
    backend: &dyn ImageGenerator,
) -> Result<Vec<FrameRecord>, PartialGeneration> {
    let fail = |error| PartialGeneration {
        error,
        records: records.to_vec(),
    };
    if index >= records.len() {
        return Err(fail(GenerationError::IndexOutOfRange(index)));
    }
    if index > 0 && !records[index - 1].is_done() {
        return Err(fail(GenerationError::ParentNotReady(index)));
    }
    let mut out = records.to_vec();
    for later in &mut out[index + 1..] {
        later.status = FrameStatus::Pending;
        later.image = None;
        later.error = None;
    }
    match generate_one(base, &mut out, index, backend, &mut |_| {}) {
        Ok(()) => Ok(out),
        Err(error) => Err(PartialGeneration { error, records: out }),
    }
}

/// Opacities rising linearly to 1 for `n` frames, oldest faintest.
pub fn default_ramp(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

/// Composites the selected frames over `base`, oldest first, each at its ramp opacity.
pub fn onion_skin(base: &Raster, frames: &[&FrameRecord], ramp: &[f64]) -> Result<Raster, GenerationError> {
    if ramp.len() != frames.len() {
        return Err(GenerationError::RampLength {
            ramp: ramp.len(),
            frames: frames.len(),
        });
    }
    let mut out = base.clone();
    for (frame, &opacity) in frames.iter().zip(ramp) {
        let image = match (&frame.status, &frame.image) {
            (FrameStatus::Done, Some(image)) => image,
            _ => return Err(GenerationError::FrameNotReady(frame.index)),
        };
        out = composite_over(&out, image, opacity)?;
    }
    Ok(out)
}
