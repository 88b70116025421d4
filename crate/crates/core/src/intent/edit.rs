use super::types::{EditableField, InterpretationResult};
use super::IntentError;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "value")]
pub enum FieldEdit {
    Set(String),
    Clear,
}

/// Partial edit from the tag detail panel. `None` leaves a field alone.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnitEdits {
    #[serde(default)]
    pub source: Option<FieldEdit>,
    #[serde(default)]
    pub path: Option<FieldEdit>,
    #[serde(default)]
    pub target: Option<FieldEdit>,
    #[serde(default)]
    pub summary: Option<String>,
}

impl UnitEdits {
    pub fn set(field: EditableField, value: impl Into<String>) -> Self {
        let value = value.into();
        let mut e = Self::default();
        match field {
            EditableField::Source => e.source = Some(FieldEdit::Set(value)),
            EditableField::Path => e.path = Some(FieldEdit::Set(value)),
            EditableField::Target => e.target = Some(FieldEdit::Set(value)),
            EditableField::Summary => e.summary = Some(value),
        }
        e
    }
}

/// Applies user edits to one unit and records which fields the user asserted.
pub fn apply_unit_edit(
    result: &InterpretationResult,
    unit_id: &str,
    edits: &UnitEdits,
) -> Result<InterpretationResult, IntentError> {
    let index = result.unit_index(unit_id)?;
    let mut out = result.clone();
    let unit = &mut out.units[index];

    let triplet_edits = [
        (EditableField::Source, &edits.source, &mut unit.primary.source),
        (EditableField::Path, &edits.path, &mut unit.primary.path),
        (EditableField::Target, &edits.target, &mut unit.primary.target),
    ];
    for (field, edit, slot) in triplet_edits {
        let Some(edit) = edit else { continue };
        *slot = match edit {
            FieldEdit::Set(v) if !v.trim().is_empty() => Some(v.clone()),
            _ => None,
        };
        unit.user_edits.insert(field);
    }
    if unit.primary.present_count() == 0 {
        return Err(IntentError::EmptyTriplet);
    }

    if let Some(summary) = &edits.summary {
        if summary.trim().is_empty() {
            return Err(IntentError::EmptySummary);
        }
        unit.summary = summary.clone();
        unit.user_edits.insert(EditableField::Summary);
    }
    Ok(out)
}

/// Sets a slider, clamped into its `[min, max]`.
pub fn set_slider(
    result: &InterpretationResult,
    unit_id: &str,
    slider_id: &str,
    value: f64,
) -> Result<InterpretationResult, IntentError> {
    if !value.is_finite() {
        return Err(IntentError::NonFiniteValue(value));
    }
    let index = result.unit_index(unit_id)?;
    let mut out = result.clone();
    let slider = out.units[index]
        .sliders
        .iter_mut()
        .find(|s| s.id == slider_id)
        .ok_or_else(|| IntentError::UnknownSlider {
            unit: unit_id.to_string(),
            slider: slider_id.to_string(),
        })?;
    slider.value = slider.clamp(value);
    Ok(out)
}

/// A field the user asserted, sent to the interpreter as ground truth.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PinnedEdit {
    pub unit_id: String,
    pub field: EditableField,
    /// `None` when the user cleared the field.
    pub value: Option<String>,
}

impl PinnedEdit {
    pub fn assertion(&self) -> String {
        format!(
            "The user asserts: unit {} {} = {}; do not contradict",
            self.unit_id,
            self.field.as_str(),
            self.value.as_deref().unwrap_or("(none)")
        )
    }
}

/// Every user-asserted field, in unit then field order.
pub fn pinned_edits(result: &InterpretationResult) -> Vec<PinnedEdit> {
    result
        .units
        .iter()
        .flat_map(|u| {
            u.user_edits.iter().map(move |&field| PinnedEdit {
                unit_id: u.id.clone(),
                field,
                value: u.field(field).map(str::to_string),
            })
        })
        .collect()
}

/// Restores pinned values the backend contradicted.
///
/// Units the reply dropped are carried over from `edited` whole. Restored units
/// keep their edit flags and are marked `pin_enforced` when anything had to change.
pub fn enforce_pins(reply: &InterpretationResult, edited: &InterpretationResult) -> InterpretationResult {
    let mut out = reply.clone();
    for source in edited.units.iter().filter(|u| !u.user_edits.is_empty()) {
        let Some(unit) = out.units.iter_mut().find(|u| u.id == source.id) else {
            let mut carried = source.clone();
            carried.pin_enforced = true;
            out.units.push(carried);
            continue;
        };
        let mut changed = false;
        for &field in &source.user_edits {
            let pinned = source.field(field).map(str::to_string);
            if unit.field(field).map(str::to_string) == pinned {
                continue;
            }
            changed = true;
            match field {
                EditableField::Source => unit.primary.source = pinned,
                EditableField::Path => unit.primary.path = pinned,
                EditableField::Target => unit.primary.target = pinned,
                EditableField::Summary => unit.summary = pinned.unwrap_or_default(),
            }
        }
        unit.user_edits = source.user_edits.clone();
        unit.pin_enforced = changed;
    }
    out
}
