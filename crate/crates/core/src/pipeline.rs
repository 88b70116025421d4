//! Canvas to structured interpretation: composite the layers, overlay the
//! grid, ask the interpreter, parse, and (on request) re-infer with the
//! user's edits pinned.

use std::collections::BTreeSet;

use serde::Deserialize;
use thiserror::Error;

use crate::backend::{BackendError, Interpreter};
use crate::grid::{overlay_grid, GridError, GridSpec, GridStyle};
use crate::intent::{
    assign_missing_tag_colors, enforce_pins, extract_json_object, parse_interpretation_with,
    pinned_edits, InterpretationResult, IntentError, ParseOptions,
};
use crate::prompt::{decompose_prompt, interpret_prompt, with_repair_hint, PromptTemplate};
use crate::raster::{composite_over, Raster, RasterError};
use crate::timeline::DecompositionEntry;

pub const DEFAULT_MAX_RETRIES: u32 = 2;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PipelineError {
    #[error("drawing and notation layers differ in size")]
    DimensionMismatch,
    #[error("canvas is empty: both layers are fully transparent")]
    EmptyCanvas,
    #[error("no field carries a user edit; nothing to pin")]
    NothingPinned,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[from] BackendError),
    #[error("interpretation invalid after {attempts} attempts: {}", violations.join("; "))]
    InterpretationInvalid {
        raw: String,
        violations: Vec<String>,
        attempts: u32,
    },
    #[error("decomposition invalid: {0}")]
    DecompositionInvalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Raster(RasterError),
}

impl From<RasterError> for PipelineError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::DimensionMismatch { .. } => Self::DimensionMismatch,
            other => Self::Raster(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub interpret_template: PromptTemplate,
    pub decompose_template: PromptTemplate,
    pub grid_style: GridStyle,
    pub max_retries: u32,
    pub parse: ParseOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            interpret_template: PromptTemplate::interpret_default(),
            decompose_template: PromptTemplate::decompose_default(),
            grid_style: GridStyle::default(),
            max_retries: DEFAULT_MAX_RETRIES,
            parse: ParseOptions::default(),
        }
    }
}

/// A finished inference with the exchange that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub result: InterpretationResult,
    /// The image actually sent: composite plus grid.
    pub image: Raster,
    pub prompt: String,
    pub raw_reply: String,
    pub attempts: u32,
}

/// Notation layer over drawing layer.
pub fn compose_canvas(drawing: &Raster, notations: &Raster) -> Result<Raster, PipelineError> {
    Ok(composite_over(drawing, notations, 1.0)?)
}

/// Composite plus grid overlay, as sent to the interpreter.
pub fn prepare_image(drawing: &Raster, notations: &Raster, style: &GridStyle) -> Result<Raster, PipelineError> {
    if drawing.is_fully_transparent() && notations.is_fully_transparent() {
        return Err(PipelineError::EmptyCanvas);
    }
    let composite = compose_canvas(drawing, notations)?;
    let spec = GridSpec::for_image(composite.width(), composite.height())?;
    Ok(overlay_grid(&composite, &spec, style)?)
}

pub fn infer_motions(
    drawing: &Raster,
    notations: &Raster,
    interpreter: &dyn Interpreter,
    config: &PipelineConfig,
) -> Result<Inference, PipelineError> {
    let image = prepare_image(drawing, notations, &config.grid_style)?;
    let prompt = interpret_prompt(&config.interpret_template, &[]);
    let (result, raw_reply, attempts) = ask_with_retries(&image, &prompt, interpreter, config)?;
    Ok(Inference {
        result: assign_missing_tag_colors(&result),
        image,
        prompt,
        raw_reply,
        attempts,
    })
}

/// Re-runs inference with every user-edited field stated as ground truth.
///
/// Ids and tag colours of units the user already saw are kept; pinned fields the
/// reply contradicts are restored and the unit is flagged `pin_enforced`. Slider
/// positions carry over where the same slider comes back.
pub fn reinfer_with_edits(
    drawing: &Raster,
    notations: &Raster,
    edited: &InterpretationResult,
    interpreter: &dyn Interpreter,
    config: &PipelineConfig,
) -> Result<Inference, PipelineError> {
    let pins = pinned_edits(edited);
    if pins.is_empty() {
        return Err(PipelineError::NothingPinned);
    }
    let image = prepare_image(drawing, notations, &config.grid_style)?;
    let prompt = interpret_prompt(&config.interpret_template, &pins);
    let (reply, raw_reply, attempts) = ask_with_retries(&image, &prompt, interpreter, config)?;

    let mut result = enforce_pins(&reply, edited);
    let kept: BTreeSet<String> = result
        .units
        .iter()
        .filter_map(|u| edited.unit(&u.id).and_then(|e| e.color.clone()))
        .map(|c| c.to_ascii_uppercase())
        .collect();
    for unit in &mut result.units {
        match edited.unit(&unit.id) {
            Some(previous) => {
                if previous.color.is_some() {
                    unit.color = previous.color.clone();
                }
                for slider in &mut unit.sliders {
                    if let Some(old) = previous.slider(&slider.id) {
                        slider.value = slider.clamp(old.value);
                    }
                }
            }
            None => {
                if unit.color.as_ref().is_some_and(|c| kept.contains(&c.to_ascii_uppercase())) {
                    unit.color = None;
                }
            }
        }
    }
    Ok(Inference {
        result: assign_missing_tag_colors(&result),
        image,
        prompt,
        raw_reply,
        attempts,
    })
}

fn ask_with_retries(
    image: &Raster,
    prompt: &str,
    interpreter: &dyn Interpreter,
    config: &PipelineConfig,
) -> Result<(InterpretationResult, String, u32), PipelineError> {
    let mut violations = Vec::new();
    let mut raw = String::new();
    let total = config.max_retries + 1;
    for attempt in 1..=total {
        let text = if attempt == 1 {
            prompt.to_string()
        } else {
            with_repair_hint(prompt)
        };
        raw = interpreter.interpret(image, &text)?;
        match parse_interpretation_with(&raw, &config.parse) {
            Ok(result) => return Ok((result, raw, attempt)),
            Err(e) => violations.push(format!("attempt {attempt}: {e}")),
        }
    }
    Err(PipelineError::InterpretationInvalid {
        raw,
        violations,
        attempts: total,
    })
}

#[derive(Deserialize)]
struct DecompositionReply {
    decomposition: Vec<DecompositionEntry>,
}

/// Asks the interpreter to split each unit into primitive part motions.
///
/// Entries naming unknown units or blank parts are dropped. A unit left with no
/// entries gets one derived from its triplet, so every unit ends up on the
/// timeline.
pub fn decompose(
    result: &InterpretationResult,
    image: &Raster,
    interpreter: &dyn Interpreter,
    config: &PipelineConfig,
) -> Result<Vec<DecompositionEntry>, PipelineError> {
    if result.units.is_empty() {
        return Ok(Vec::new());
    }
    let prompt = decompose_prompt(&config.decompose_template, result);
    let mut last_error = String::new();
    for attempt in 0..=config.max_retries {
        let text = if attempt == 0 {
            prompt.clone()
        } else {
            with_repair_hint(&prompt)
        };
        let raw = interpreter.interpret(image, &text)?;
        match parse_decomposition(&raw) {
            Ok(entries) => return Ok(complete_decomposition(result, entries)),
            Err(e) => last_error = e,
        }
    }
    Err(PipelineError::DecompositionInvalid(last_error))
}

pub fn parse_decomposition(raw: &str) -> Result<Vec<DecompositionEntry>, String> {
    let value = extract_json_object(raw).map_err(|e: IntentError| e.to_string())?;
    serde_json::from_value::<DecompositionReply>(serde_json::Value::Object(value))
        .map(|r| r.decomposition)
        .map_err(|e| e.to_string())
}

fn complete_decomposition(
    result: &InterpretationResult,
    entries: Vec<DecompositionEntry>,
) -> Vec<DecompositionEntry> {
    let mut kept: Vec<DecompositionEntry> = entries
        .into_iter()
        .filter(|e| result.unit(&e.unit_id).is_some() && !e.part_name.trim().is_empty())
        .map(|mut e| {
            e.part_name = e.part_name.trim().to_string();
            e.verb = e.verb.trim().to_string();
            e
        })
        .collect();
    for unit in &result.units {
        if kept.iter().all(|e| e.unit_id != unit.id) {
            kept.push(DecompositionEntry {
                unit_id: unit.id.clone(),
                part_name: unit.primary.source.clone().unwrap_or_else(|| unit.label()),
                verb: unit.primary.path.clone().unwrap_or_else(|| "move".to_string()),
                description: unit.summary.clone(),
            });
        }
    }
    kept
}

/// Optional rewrite of a frame prompt by the interpreter model. Falls back to
/// the template text when the model returns nothing usable.
pub fn polish_prompt(
    interpreter: &dyn Interpreter,
    image: &Raster,
    prompt: &str,
) -> Result<String, BackendError> {
    let request = format!(
        "Rewrite the following keyframe instructions as one fluent paragraph for an image model. Keep every fact, number and part name; add nothing.\n\n{prompt}"
    );
    let reply = interpreter.interpret(image, &request)?;
    let reply = reply.trim();
    Ok(if reply.is_empty() { prompt.to_string() } else { reply.to_string() })
}
