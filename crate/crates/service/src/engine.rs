//! Workspace-scoped operations behind both the HTTP API and the CLI.
//!
//! Everything here is blocking. Mutations of one workspace are serialized by an
//! in-process mutex and the store's lock file; backend calls run outside the
//! mutex so reads stay responsive while a model is thinking.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use notana_core::generation::{
    default_ramp, generate_pending, onion_skin, regenerate_frame, FrameRecord, FrameStatus, GenerationControl,
};
use notana_core::intent::{apply_unit_edit, set_slider, AnimationUnit, InterpretationResult, UnitEdits};
use notana_core::pipeline::{decompose, infer_motions, reinfer_with_edits, Inference, PipelineConfig};
use notana_core::prompt::{synthesize_frame_prompts_with, FramePrompt, PromptTemplate};
use notana_core::raster::Raster;
use notana_core::timeline::{build_timeline, keyframe_schedule, DecompositionEntry, Timeline, TimelineError};
use notana_core::workspace::{BrushState, Layer, Workspace};
use notana_store::{SnapshotMeta, Store};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::{BackendStatus, Backends};
use crate::error::{ApiError, ErrorCode};

pub const DEFAULT_CANVAS: (u32, u32) = (512, 512);
pub const MAX_CANVAS_SIDE: u32 = 4096;

#[derive(Default)]
struct Slot {
    edit: Mutex<()>,
    generating: AtomicBool,
    infer_seq: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
    /// Base image for the drawing layer; overrides width and height.
    #[serde(skip)]
    pub base_png: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BlockOp {
    Move {
        block_id: String,
        start: f64,
    },
    Resize {
        block_id: String,
        duration: f64,
    },
    Delete {
        block_id: String,
    },
    Add {
        track_id: String,
        label: String,
        start: f64,
        duration: f64,
        #[serde(default)]
        description: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineUpdate {
    pub timeline: Timeline,
    /// Set by `add`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_id: Option<String>,
    pub orphaned_markers: Vec<String>,
}

/// Frame metadata as served over the API; images are fetched separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameView {
    pub frame_id: String,
    pub marker_id: String,
    pub index: usize,
    pub status: FrameStatus,
    pub prompt: String,
    pub prompt_digest: String,
    pub parent_frame_id: Option<String>,
    pub revision: u32,
    pub orphaned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
}

impl FrameView {
    pub fn of(workspace_id: &str, r: &FrameRecord) -> Self {
        Self {
            frame_id: r.frame_id.clone(),
            marker_id: r.marker_id.clone(),
            index: r.index,
            status: r.status,
            prompt: r.prompt.clone(),
            prompt_digest: r.prompt_digest.clone(),
            parent_frame_id: r.parent_frame_id.clone(),
            revision: r.revision,
            orphaned: r.orphaned,
            error: r.error.clone(),
            image_url: r
                .is_done()
                .then(|| format!("/workspaces/{workspace_id}/frames/{}", r.index)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceView {
    pub id: String,
    pub created: DateTime<Utc>,
    pub modified: DateTime<Utc>,
    pub width: u32,
    pub height: u32,
    pub interpretation: Option<InterpretationResult>,
    pub decomposition: Vec<DecompositionEntry>,
    pub timeline: Option<Timeline>,
    pub frames: Vec<FrameView>,
    pub brush: BrushState,
    pub generating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub degraded: bool,
    pub interpreter: BackendStatus,
    pub image: BackendStatus,
    pub version: String,
}

/// Held while a generation or regeneration runs; frees the workspace on drop.
pub struct GenerationTicket {
    workspace_id: String,
    slot: Arc<Slot>,
}

impl GenerationTicket {
    pub fn workspace_id(&self) -> &str {
        &self.workspace_id
    }
}

impl Drop for GenerationTicket {
    fn drop(&mut self) {
        self.slot.generating.store(false, Ordering::SeqCst);
    }
}

pub struct Engine {
    store: Store,
    backends: Backends,
    config: PipelineConfig,
    frame_template: PromptTemplate,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
}

impl Engine {
    pub fn new(store: Store, backends: Backends) -> Self {
        Self {
            store,
            backends,
            config: PipelineConfig::default(),
            frame_template: PromptTemplate::frame_default(),
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_pipeline_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    fn slot(&self, id: &str) -> Arc<Slot> {
        lock(&self.slots).entry(id.to_string()).or_default().clone()
    }

    fn read(&self, id: &str) -> Result<Workspace, ApiError> {
        if !notana_core::workspace::is_valid_workspace_id(id) {
            return Err(ApiError::not_found(format!("workspace {id}")));
        }
        Ok(self.store.read(id)?)
    }

    /// Read, change and write one workspace under its edit lock.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Workspace) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let slot = self.slot(id);
        let _guard = lock(&slot.edit);
        let mut ws = self.read(id)?;
        let out = f(&mut ws)?;
        ws.modified = self.store.now();
        self.store.write(&ws)?;
        Ok(out)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            degraded: self.backends.degraded(),
            interpreter: self.backends.interpreter_status.clone(),
            image: self.backends.image_status.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn create(&self, req: CreateRequest) -> Result<WorkspaceView, ApiError> {
        let id = req
            .id
            .clone()
            .unwrap_or_else(|| format!("ws-{}", uuid::Uuid::new_v4().simple()));
        let drawing = match &req.base_png {
            Some(png) => Raster::decode_png(png)?,
            None => {
                let (w, h) = (
                    req.width.unwrap_or(DEFAULT_CANVAS.0),
                    req.height.unwrap_or(DEFAULT_CANVAS.1),
                );
                if w == 0 || h == 0 || w > MAX_CANVAS_SIDE || h > MAX_CANVAS_SIDE {
                    return Err(ApiError::validation(format!(
                        "canvas {w}x{h} outside 1..={MAX_CANVAS_SIDE} per side"
                    )));
                }
                Raster::filled(w, h, notana_core::raster::WHITE)?
            }
        };
        let ws = Workspace::with_drawing(&id, drawing, self.store.now())?;
        let slot = self.slot(&id);
        let _guard = lock(&slot.edit);
        if self.store.exists(&id) {
            return Err(ApiError::new(ErrorCode::WorkspaceExists, format!("workspace {id} already exists")));
        }
        self.store.write(&ws)?;
        Ok(self.view(&ws))
    }

    pub fn view(&self, ws: &Workspace) -> WorkspaceView {
        WorkspaceView {
            id: ws.id.clone(),
            created: ws.created,
            modified: ws.modified,
            width: ws.drawing.width(),
            height: ws.drawing.height(),
            interpretation: ws.interpretation.clone(),
            decomposition: ws.decomposition.clone(),
            timeline: ws.timeline.clone(),
            frames: ws.frames.iter().map(|f| FrameView::of(&ws.id, f)).collect(),
            brush: ws.brush.clone(),
            generating: self.slot(&ws.id).generating.load(Ordering::SeqCst),
        }
    }

    pub fn workspace(&self, id: &str) -> Result<Workspace, ApiError> {
        self.read(id)
    }

    pub fn workspace_view(&self, id: &str) -> Result<WorkspaceView, ApiError> {
        Ok(self.view(&self.read(id)?))
    }

    pub fn put_layer(&self, id: &str, layer: Layer, png: &[u8]) -> Result<(), ApiError> {
        let raster = Raster::decode_png(png)?;
        self.mutate(id, |ws| Ok(ws.set_layer(layer, raster)?))
    }

    pub fn layer_png(&self, id: &str, layer: Layer) -> Result<Vec<u8>, ApiError> {
        Ok(self.read(id)?.layer(layer).encode_png()?)
    }

    pub fn set_brush(&self, id: &str, brush: BrushState) -> Result<BrushState, ApiError> {
        brush.validate()?;
        self.mutate(id, |ws| {
            ws.brush = brush.clone();
            Ok(brush)
        })
    }

    /// Rasterizes a stroke with the workspace brush into its active layer.
    pub fn paint(&self, id: &str, points: &[(f64, f64)]) -> Result<(), ApiError> {
        self.mutate(id, |ws| Ok(ws.paint_stroke(points)?))
    }

    /// Interprets the canvas, decomposes the units and lays out a fresh timeline.
    /// When a newer inference for the same workspace started meanwhile, this
    /// one is discarded.
    pub fn infer(&self, id: &str) -> Result<InterpretationResult, ApiError> {
        let slot = self.slot(id);
        let seq = slot.infer_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let ws = self.read(id)?;
        let inference = infer_motions(&ws.drawing, &ws.notation, &*self.backends.interpreter, &self.config)?;
        self.commit_inference(id, &slot, seq, inference)
    }

    /// Re-interprets with every user-edited field pinned.
    pub fn reinfer(&self, id: &str) -> Result<InterpretationResult, ApiError> {
        let slot = self.slot(id);
        let seq = slot.infer_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let ws = self.read(id)?;
        let edited = ws
            .interpretation
            .as_ref()
            .ok_or_else(|| ApiError::validation("nothing to re-infer: run infer first"))?;
        let inference = reinfer_with_edits(&ws.drawing, &ws.notation, edited, &*self.backends.interpreter, &self.config)?;
        self.commit_inference(id, &slot, seq, inference)
    }

    fn commit_inference(
        &self,
        id: &str,
        slot: &Slot,
        seq: u64,
        inference: Inference,
    ) -> Result<InterpretationResult, ApiError> {
        let decomposition = decompose(&inference.result, &inference.image, &*self.backends.interpreter, &self.config)?;
        let timeline = build_timeline(&inference.result, &decomposition)?;
        self.mutate(id, |ws| {
            let latest = slot.infer_seq.load(Ordering::SeqCst);
            if latest != seq {
                return Err(ApiError::new(
                    ErrorCode::InferenceSuperseded,
                    "a newer inference for this workspace started; this result was discarded",
                )
                .with_details(json!({ "request": seq, "latest": latest })));
            }
            ws.interpretation = Some(inference.result.clone());
            ws.decomposition = decomposition;
            ws.timeline = Some(timeline);
            ws.frames.clear();
            Ok(inference.result)
        })
    }

    pub fn edit_unit(&self, id: &str, unit_id: &str, edits: &UnitEdits) -> Result<InterpretationResult, ApiError> {
        self.mutate(id, |ws| {
            let current = interpretation(ws)?;
            let updated = apply_unit_edit(current, unit_id, edits)?;
            ws.interpretation = Some(updated.clone());
            Ok(updated)
        })
    }

    pub fn set_slider(&self, id: &str, unit_id: &str, slider_id: &str, value: f64) -> Result<AnimationUnit, ApiError> {
        self.mutate(id, |ws| {
            let updated = set_slider(interpretation(ws)?, unit_id, slider_id, value)?;
            let unit = updated.unit(unit_id).cloned().expect("set_slider checked the unit");
            ws.interpretation = Some(updated);
            Ok(unit)
        })
    }

    pub fn edit_timeline(&self, id: &str, op: &BlockOp) -> Result<TimelineUpdate, ApiError> {
        self.mutate(id, |ws| {
            let timeline = ws
                .timeline
                .as_ref()
                .ok_or_else(|| ApiError::validation("no timeline yet: run infer first"))?;
            let (timeline, block_id) = apply_block_op(timeline, op)?;
            ws.timeline = Some(timeline);
            ws.refresh_orphans();
            let timeline = ws.timeline.clone().expect("just set");
            let orphaned_markers = timeline.orphaned_markers().iter().map(|m| m.id.clone()).collect();
            Ok(TimelineUpdate {
                timeline,
                block_id,
                orphaned_markers,
            })
        })
    }

    /// Claims the workspace's single generation slot.
    pub fn begin_generation(&self, id: &str) -> Result<GenerationTicket, ApiError> {
        if !notana_core::workspace::is_valid_workspace_id(id) || !self.store.exists(id) {
            return Err(ApiError::not_found(format!("workspace {id}")));
        }
        let slot = self.slot(id);
        slot.generating
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map_err(|_| {
                ApiError::new(
                    ErrorCode::GenerationInProgress,
                    format!("workspace {id} is already generating frames"),
                )
            })?;
        Ok(GenerationTicket {
            workspace_id: id.to_string(),
            slot,
        })
    }

    /// Frame prompts for the current timeline, in marker order.
    pub fn frame_prompts(&self, ws: &Workspace) -> Result<Vec<FramePrompt>, ApiError> {
        let (result, timeline) = match (&ws.interpretation, &ws.timeline) {
            (Some(r), Some(t)) => (r, t.reset_generated()),
            _ => return Err(ApiError::validation("no interpretation yet: run infer first")),
        };
        let schedule = keyframe_schedule(&timeline);
        Ok(synthesize_frame_prompts_with(&self.frame_template, result, &timeline, &schedule)?)
    }

    /// Checks that generation can start and returns the prompts it would use.
    pub fn plan(
        &self,
        ticket: &GenerationTicket,
        limit: Option<usize>,
    ) -> Result<(Workspace, Vec<FramePrompt>), ApiError> {
        let ws = self.read(ticket.workspace_id())?;
        let mut prompts = self.frame_prompts(&ws)?;
        if let Some(n) = limit {
            if n == 0 {
                return Err(ApiError::validation("frame limit must be at least 1"));
            }
            prompts.truncate(n);
        }
        if prompts.is_empty() {
            return Err(ApiError::validation("the timeline has no keyframe markers"));
        }
        Ok((ws, prompts))
    }

    /// Generates every keyframe still missing, each conditioned on its
    /// predecessor. Finished frames whose prompt is unchanged are kept.
    /// `limit` caps the number of frames.
    pub fn generate(
        &self,
        ticket: &GenerationTicket,
        limit: Option<usize>,
        on_frame: &mut dyn FnMut(&FrameRecord),
    ) -> Result<Vec<FrameRecord>, ApiError> {
        let id = ticket.workspace_id();
        let (ws, prompts) = self.plan(ticket, limit)?;
        let reusable = ws.frames.len() == prompts.len()
            && ws
                .frames
                .iter()
                .zip(&prompts)
                .all(|(f, p)| f.marker_id == p.marker_id && f.prompt == p.text);
        let records = if reusable {
            ws.frames.clone()
        } else {
            prompts.iter().map(FrameRecord::pending).collect()
        };

        let outcome = generate_pending(
            &ws.drawing,
            records,
            &*self.backends.image,
            &GenerationControl::new(),
            on_frame,
        );
        let (records, error) = match outcome {
            Ok(records) => (records, None),
            Err(partial) => (partial.records, Some(partial.error)),
        };
        self.commit_frames(id, &records, true)?;
        match error {
            None => Ok(records),
            Some(e) => Err(with_frames(ApiError::from(e), id, &records)),
        }
    }

    /// Regenerates frame `index` from its parent; later frames go back to pending.
    pub fn regenerate(&self, ticket: &GenerationTicket, index: usize) -> Result<Vec<FrameRecord>, ApiError> {
        let id = ticket.workspace_id();
        let ws = self.read(id)?;
        if index >= ws.frames.len() {
            return Err(ApiError::not_found(format!("frame {index} of workspace {id}")));
        }
        match regenerate_frame(&ws.drawing, &ws.frames, index, &*self.backends.image) {
            Ok(records) => {
                self.commit_frames(id, &records, false)?;
                Ok(records)
            }
            Err(partial) => {
                if partial.records != ws.frames {
                    self.commit_frames(id, &partial.records, false)?;
                }
                Err(with_frames(ApiError::from(partial.error), id, &partial.records))
            }
        }
    }

    fn commit_frames(&self, id: &str, records: &[FrameRecord], fresh: bool) -> Result<(), ApiError> {
        self.mutate(id, |ws| {
            ws.frames = records.to_vec();
            if let Some(timeline) = &ws.timeline {
                let mut t = if fresh { timeline.reset_generated() } else { timeline.clone() };
                for r in records.iter().filter(|r| r.is_done()) {
                    match t.mark_generated(&r.marker_id, &r.frame_id) {
                        Ok(next) => t = next,
                        Err(TimelineError::UnknownMarker(_)) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                ws.timeline = Some(t);
            }
            ws.refresh_orphans();
            Ok(())
        })
    }

    pub fn frame_png(&self, id: &str, index: usize) -> Result<Vec<u8>, ApiError> {
        let ws = self.read(id)?;
        let frame = ws
            .frames
            .get(index)
            .ok_or_else(|| ApiError::not_found(format!("frame {index} of workspace {id}")))?;
        match (&frame.image, frame.status) {
            (Some(image), FrameStatus::Done) => Ok(image.encode_png()?),
            _ => Err(ApiError::not_found(format!("frame {index} has no finished image"))),
        }
    }

    /// Selected frames over the drawing, oldest faintest.
    pub fn onion(&self, id: &str, indices: &[usize]) -> Result<Vec<u8>, ApiError> {
        let ws = self.read(id)?;
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let frames = sorted
            .iter()
            .map(|&i| {
                ws.frames
                    .get(i)
                    .ok_or_else(|| ApiError::not_found(format!("frame {i} of workspace {id}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let composite = onion_skin(&ws.drawing, &frames, &default_ramp(frames.len()))?;
        Ok(composite.encode_png()?)
    }

    pub fn save(&self, id: &str) -> Result<SnapshotMeta, ApiError> {
        let slot = self.slot(id);
        let _guard = lock(&slot.edit);
        let ws = self.read(id)?;
        Ok(self.store.save(&ws)?)
    }

    pub fn history(&self, id: &str) -> Result<Vec<SnapshotMeta>, ApiError> {
        self.read(id)?;
        Ok(self.store.list_history(id)?)
    }

    pub fn snapshot(&self, id: &str, snapshot_id: &str) -> Result<WorkspaceView, ApiError> {
        let snapshot = self.store.load(id, snapshot_id)?;
        Ok(self.view(&snapshot.workspace))
    }
}

fn interpretation(ws: &Workspace) -> Result<&InterpretationResult, ApiError> {
    ws.interpretation
        .as_ref()
        .ok_or_else(|| ApiError::validation("no interpretation yet: run infer first"))
}

fn with_frames(mut e: ApiError, id: &str, records: &[FrameRecord]) -> ApiError {
    let frames: Vec<FrameView> = records.iter().map(|r| FrameView::of(id, r)).collect();
    let details = e.details.get_or_insert_with(|| json!({}));
    details["frames"] = serde_json::to_value(frames).expect("frames serialize");
    e
}

pub fn apply_block_op(timeline: &Timeline, op: &BlockOp) -> Result<(Timeline, Option<String>), TimelineError> {
    Ok(match op {
        BlockOp::Move { block_id, start } => (timeline.move_block(block_id, *start)?, None),
        BlockOp::Resize { block_id, duration } => (timeline.resize_block(block_id, *duration)?, None),
        BlockOp::Delete { block_id } => (timeline.delete_block(block_id)?, None),
        BlockOp::Add {
            track_id,
            label,
            start,
            duration,
            description,
        } => {
            let (t, id) = timeline.add_block(track_id, label, *start, *duration, description)?;
            (t, Some(id))
        }
    })
}
