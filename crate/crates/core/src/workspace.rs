//! Authoring state: both raster layers, the interpretation, the timeline and
//! the generated frames.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{canonical_digest, canonical_json};
use crate::generation::FrameRecord;
use crate::intent::InterpretationResult;
use crate::raster::{Raster, RasterError, Rgba, TRANSPARENT, WHITE};
use crate::timeline::{DecompositionEntry, Timeline};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WorkspaceError {
    #[error("layers differ in size: drawing {drawing:?}, notation {notation:?}")]
    LayerMismatch { drawing: (u32, u32), notation: (u32, u32) },
    #[error("frame at position {position} has index {index}")]
    FrameIndexGap { position: usize, index: usize },
    #[error("frame {0} is marked done but has no image")]
    DoneWithoutImage(usize),
    #[error("invalid workspace id `{0}`")]
    InvalidId(String),
    #[error("invalid brush: {0}")]
    InvalidBrush(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Drawing,
    Notation,
}

impl Layer {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "drawing" => Some(Self::Drawing),
            "notation" | "notations" => Some(Self::Notation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushState {
    pub mode: Layer,
    pub size: f64,
    /// `#RRGGBB` or `#RRGGBBAA`.
    pub color: String,
}

impl Default for BrushState {
    fn default() -> Self {
        Self {
            mode: Layer::Drawing,
            size: 4.0,
            color: "#000000".to_string(),
        }
    }
}

impl BrushState {
    pub fn rgba(&self) -> Result<Rgba, WorkspaceError> {
        parse_hex_color(&self.color).ok_or_else(|| WorkspaceError::InvalidBrush(self.color.clone()))
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        if !(self.size.is_finite() && self.size > 0.0) {
            return Err(WorkspaceError::InvalidBrush(format!("size {}", self.size)));
        }
        self.rgba().map(|_| ())
    }
}

pub fn parse_hex_color(s: &str) -> Option<Rgba> {
    let hex = s.strip_prefix('#')?;
    if !hex.is_ascii() || !(hex.len() == 6 || hex.len() == 8) {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    let alpha = if hex.len() == 8 { byte(6)? } else { 255 };
    Some([byte(0)?, byte(2)?, byte(4)?, alpha])
}

pub fn is_valid_workspace_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub id: String,
    pub created: DateTime<Utc>,
    pub modified: DateTime<Utc>,
    pub drawing: Raster,
    pub notation: Raster,
    pub interpretation: Option<InterpretationResult>,
    #[serde(default)]
    pub decomposition: Vec<DecompositionEntry>,
    pub timeline: Option<Timeline>,
    #[serde(default)]
    pub frames: Vec<FrameRecord>,
    #[serde(default)]
    pub brush: BrushState,
}

impl Workspace {
    /// White drawing layer, transparent notation layer.
    pub fn blank(id: &str, width: u32, height: u32, now: DateTime<Utc>) -> Result<Self, WorkspaceError> {
        let drawing = Raster::filled(width, height, WHITE)?;
        Self::with_drawing(id, drawing, now)
    }

    /// Starts from an uploaded image as the drawing layer.
    pub fn with_drawing(id: &str, drawing: Raster, now: DateTime<Utc>) -> Result<Self, WorkspaceError> {
        if !is_valid_workspace_id(id) {
            return Err(WorkspaceError::InvalidId(id.to_string()));
        }
        let notation = Raster::filled(drawing.width(), drawing.height(), TRANSPARENT)?;
        Ok(Self {
            id: id.to_string(),
            created: now,
            modified: now,
            drawing,
            notation,
            interpretation: None,
            decomposition: Vec::new(),
            timeline: None,
            frames: Vec::new(),
            brush: BrushState::default(),
        })
    }

    pub fn layer(&self, layer: Layer) -> &Raster {
        match layer {
            Layer::Drawing => &self.drawing,
            Layer::Notation => &self.notation,
        }
    }

    /// Replaces a layer; sizes must match the other layer.
    pub fn set_layer(&mut self, layer: Layer, raster: Raster) -> Result<(), WorkspaceError> {
        let other = match layer {
            Layer::Drawing => &self.notation,
            Layer::Notation => &self.drawing,
        };
        if other.dimensions() != raster.dimensions() {
            let (drawing, notation) = match layer {
                Layer::Drawing => (raster.dimensions(), other.dimensions()),
                Layer::Notation => (other.dimensions(), raster.dimensions()),
            };
            return Err(WorkspaceError::LayerMismatch { drawing, notation });
        }
        match layer {
            Layer::Drawing => self.drawing = raster,
            Layer::Notation => self.notation = raster,
        }
        Ok(())
    }

    /// Rasterizes a polyline with the current brush into the brush's layer.
    pub fn paint_stroke(&mut self, points: &[(f64, f64)]) -> Result<(), WorkspaceError> {
        self.brush.validate()?;
        let color = self.brush.rgba()?;
        let width = self.brush.size;
        let target = match self.brush.mode {
            Layer::Drawing => &mut self.drawing,
            Layer::Notation => &mut self.notation,
        };
        match points {
            [] => {}
            [p] => crate::raster::paint::disc(target, p.0, p.1, width / 2.0, color),
            _ => {
                for pair in points.windows(2) {
                    crate::raster::paint::stroke(target, pair[0], pair[1], width, color);
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        if !is_valid_workspace_id(&self.id) {
            return Err(WorkspaceError::InvalidId(self.id.clone()));
        }
        if self.drawing.dimensions() != self.notation.dimensions() {
            return Err(WorkspaceError::LayerMismatch {
                drawing: self.drawing.dimensions(),
                notation: self.notation.dimensions(),
            });
        }
        for (position, frame) in self.frames.iter().enumerate() {
            if frame.index != position {
                return Err(WorkspaceError::FrameIndexGap {
                    position,
                    index: frame.index,
                });
            }
            if frame.status == crate::generation::FrameStatus::Done && frame.image.is_none() {
                return Err(WorkspaceError::DoneWithoutImage(position));
            }
        }
        self.brush.validate()
    }

    /// Canonical serialization: sorted keys, rasters as base64 PNG.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_json(self).expect("workspace serializes")
    }

    pub fn digest(&self) -> String {
        canonical_digest(self).expect("workspace serializes")
    }

    /// Clears everything derived from an interpretation.
    pub fn clear_downstream(&mut self) {
        self.decomposition.clear();
        self.timeline = None;
        self.frames.clear();
    }

    /// Tags frames whose generated marker no longer sits on a block end.
    pub fn refresh_orphans(&mut self) {
        let Some(timeline) = &self.timeline else { return };
        let orphaned: Vec<String> = timeline
            .orphaned_markers()
            .iter()
            .filter_map(|m| m.frame_ref.clone())
            .collect();
        for frame in &mut self.frames {
            frame.orphaned = orphaned.contains(&frame.frame_id);
        }
    }
}
