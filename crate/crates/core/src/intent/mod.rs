//! Structured animation-intent model.
//!
//! An [`InterpretationResult`] is what the interpreter backend reports for a
//! sketch: a list of [`AnimationUnit`]s, each carrying a primary
//! source/path/target triplet, optional secondary modifiers, a grid-space
//! region of interest, confidence and 1-3 neutral dimension sliders.
//!
//! Values are immutable; edits return new results.

mod edit;
mod parse;
mod types;

pub use edit::{
    apply_unit_edit, enforce_pins, pinned_edits, set_slider, FieldEdit, PinnedEdit, UnitEdits,
};
pub use parse::{
    extract_json_object, parse_interpretation, parse_interpretation_with, ParseOptions,
};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntentError {
    #[error("no JSON object found in reply")]
    NoJsonFound,
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("duplicate unit id `{0}`")]
    DuplicateUnitId(String),
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("unknown slider `{slider}` on unit `{unit}`")]
    UnknownSlider { unit: String, slider: String },
    #[error("edit would clear source, path and target together")]
    EmptyTriplet,
    #[error("summary cannot be empty")]
    EmptySummary,
    #[error("slider value must be finite, got {0}")]
    NonFiniteValue(f64),
    #[error("{0} is not a half-step grid value in [0, 30]")]
    InvalidGridValue(f64),
}

impl IntentError {
    pub(crate) fn violation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        IntentError::SchemaViolation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Three-level confidence badge shown on motion tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceBucket {
    Low,
    Medium,
    High,
}

pub const MEDIUM_CONFIDENCE_FROM: f64 = 0.4;
pub const HIGH_CONFIDENCE_FROM: f64 = 0.75;

pub fn bucket_confidence(c: f64) -> Result<ConfidenceBucket, IntentError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(IntentError::OutOfRange(c));
    }
    Ok(if c < MEDIUM_CONFIDENCE_FROM {
        ConfidenceBucket::Low
    } else if c < HIGH_CONFIDENCE_FROM {
        ConfidenceBucket::Medium
    } else {
        ConfidenceBucket::High
    })
}

/// 12-colour categorical palette for tag colours the backend left out.
pub const TAG_PALETTE: [&str; 12] = [
    "#E4572E", "#29335C", "#F3A712", "#669BBC", "#A8C686", "#8E44AD", "#17BEBB", "#D81159",
    "#6B4226", "#2E8B57", "#FF7F50", "#4B5563",
];

fn fallback_color(n: usize) -> String {
    // golden-angle hue walk, fixed saturation/lightness
    let hue = (n as f64 * 137.507_764) % 360.0;
    let (s, l) = (0.65, 0.45);
    let c = (1.0 - (2.0 * l - 1.0_f64).abs()) * s;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02X}{:02X}{:02X}", to(r), to(g), to(b))
}

/// Fills in missing tag colours from the palette cycle, keyed by unit index,
/// skipping colours already taken so that all colours end up distinct.
pub fn assign_missing_tag_colors(result: &InterpretationResult) -> InterpretationResult {
    let mut out = result.clone();
    let mut taken: std::collections::BTreeSet<String> = out
        .units
        .iter()
        .filter_map(|u| u.color.as_ref().map(|c| c.to_ascii_uppercase()))
        .collect();
    for (index, unit) in out.units.iter_mut().enumerate() {
        if unit.color.is_some() {
            continue;
        }
        let candidates = (0..TAG_PALETTE.len())
            .map(|k| TAG_PALETTE[(index + k) % TAG_PALETTE.len()].to_string())
            .chain((0..).map(|k| fallback_color(index + k)));
        for candidate in candidates {
            if taken.insert(candidate.to_ascii_uppercase()) {
                unit.color = Some(candidate);
                break;
            }
        }
    }
    out
}
