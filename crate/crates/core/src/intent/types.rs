use std::collections::BTreeSet;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::{Map, Value};

use super::IntentError;

/// Grid extent in cells along each axis.
pub const GRID_CELLS: u32 = 30;

/// Unknown JSON keys kept verbatim for round-tripping.
pub type Extras = Map<String, Value>;

pub(crate) fn is_grid_value(v: f64) -> bool {
    v.is_finite() && (0.0..=GRID_CELLS as f64).contains(&v) && (v * 2.0).fract() == 0.0
}

/// Rounds to the nearest half step; exact ties go toward zero.
pub fn snap_half(v: f64) -> f64 {
    let doubled = v * 2.0;
    let snapped = if doubled.fract().abs() == 0.5 {
        doubled.trunc()
    } else {
        doubled.round()
    };
    snapped / 2.0 + 0.0
}

/// Point on the 30x30 grounding grid. Origin bottom-left, x right, y up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCoord {
    x: f64,
    y: f64,
}

impl GridCoord {
    pub fn new(x: f64, y: f64) -> Result<Self, IntentError> {
        for v in [x, y] {
            if !is_grid_value(v) {
                return Err(IntentError::InvalidGridValue(v));
            }
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Every half-step intersection, 61x61 of them.
    pub fn all_half_steps() -> impl Iterator<Item = GridCoord> {
        let n = GRID_CELLS * 2;
        (0..=n).flat_map(move |i| {
            (0..=n).map(move |j| GridCoord {
                x: f64::from(i) / 2.0,
                y: f64::from(j) / 2.0,
            })
        })
    }
}

/// Axis-aligned region in grid units, serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiBBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl RoiBBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, IntentError> {
        for v in [x_min, y_min, x_max, y_max] {
            if !is_grid_value(v) {
                return Err(IntentError::InvalidGridValue(v));
            }
        }
        if x_min > x_max || y_min > y_max {
            return Err(IntentError::violation(
                "roi_bbox",
                format!("inverted box [{x_min}, {y_min}, {x_max}, {y_max}]"),
            ));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn full() -> Self {
        let n = GRID_CELLS as f64;
        Self {
            x_min: 0.0,
            y_min: 0.0,
            x_max: n,
            y_max: n,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn contains(&self, p: GridCoord) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn contains_box(&self, other: &RoiBBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl Serialize for RoiBBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(4))?;
        for v in self.as_array() {
            seq.serialize_element(&v)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for RoiBBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [a, b, c, d] = <[f64; 4]>::deserialize(deserializer)?;
        RoiBBox::new(a, b, c, d).map_err(serde::de::Error::custom)
    }
}

/// What moves, how it moves, where it ends up. Any one may be omitted, not all three.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrimaryTriplet {
    pub source: Option<String>,
    pub path: Option<String>,
    pub target: Option<String>,
    #[serde(flatten)]
    pub extras: Extras,
}

impl PrimaryTriplet {
    pub fn present_count(&self) -> usize {
        [&self.source, &self.path, &self.target]
            .iter()
            .filter(|f| f.as_deref().is_some_and(|s| !s.trim().is_empty()))
            .count()
    }

    pub fn get(&self, field: EditableField) -> Option<&str> {
        match field {
            EditableField::Source => self.source.as_deref(),
            EditableField::Path => self.path.as_deref(),
            EditableField::Target => self.target.as_deref(),
            EditableField::Summary => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModifierProperty {
    Color,
    Thickness,
    Text,
    Number,
    Letter,
    Style,
    Other,
}

impl ModifierProperty {
    pub const ALL: [ModifierProperty; 7] = [
        Self::Color,
        Self::Thickness,
        Self::Text,
        Self::Number,
        Self::Letter,
        Self::Style,
        Self::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Color => "color",
            Self::Thickness => "thickness",
            Self::Text => "text",
            Self::Number => "number",
            Self::Letter => "letter",
            Self::Style => "style",
            Self::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModifierScope {
    Source,
    Path,
    Target,
    Unit,
}

impl ModifierScope {
    pub const ALL: [ModifierScope; 4] = [Self::Source, Self::Path, Self::Target, Self::Unit];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Source => "source",
            Self::Path => "path",
            Self::Target => "target",
            Self::Unit => "unit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryModifier {
    pub property: ModifierProperty,
    pub value: String,
    pub intended_meaning: String,
    pub scope: ModifierScope,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliderKind {
    Amplitude,
    DirectionalBias,
    Timing,
}

impl SliderKind {
    pub const ALL: [SliderKind; 3] = [Self::Amplitude, Self::DirectionalBias, Self::Timing];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Amplitude => "amplitude",
            Self::DirectionalBias => "directional_bias",
            Self::Timing => "timing",
        }
    }
}

pub const SLIDER_DEFAULT: f64 = 1.0;
pub const DIRECTIONAL_BIAS_MIN: f64 = 0.5;
pub const DIRECTIONAL_BIAS_MAX: f64 = 1.5;
pub const MAX_SLIDERS_PER_UNIT: usize = 3;

/// Neutral multiplier slider; 1.0 means "as drawn".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSlider {
    pub id: String,
    pub label: String,
    pub kind: SliderKind,
    pub min: f64,
    pub max: f64,
    pub default: f64,
    pub value: f64,
    /// Semantic anchor shown at the low end, e.g. "shoulder level".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_label: Option<String>,
    #[serde(flatten)]
    pub extras: Extras,
}

impl DimensionSlider {
    pub fn is_neutral(&self) -> bool {
        self.value == self.default
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// Triplet fields (plus the summary) a user can overwrite from the tag panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditableField {
    Source,
    Path,
    Target,
    Summary,
}

impl EditableField {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Source => "source",
            Self::Path => "path",
            Self::Target => "target",
            Self::Summary => "summary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "source" => Some(Self::Source),
            "path" => Some(Self::Path),
            "target" => Some(Self::Target),
            "summary" => Some(Self::Summary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationUnit {
    pub id: String,
    /// Tag colour, unique among sibling units. `None` until assigned.
    pub color: Option<String>,
    #[serde(rename = "roi_bbox")]
    pub roi: RoiBBox,
    pub primary: PrimaryTriplet,
    #[serde(rename = "secondary_modifiers")]
    pub modifiers: Vec<SecondaryModifier>,
    pub temporal_order: Option<u32>,
    pub confidence: f64,
    #[serde(rename = "natural_language_summary")]
    pub summary: String,
    pub sliders: Vec<DimensionSlider>,
    /// Fields the user asserted; re-inference pins these.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub user_edits: BTreeSet<EditableField>,
    /// Set when re-inference contradicted a pin and the pinned value was restored.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pin_enforced: bool,
    #[serde(flatten)]
    pub extras: Extras,
}

impl AnimationUnit {
    /// Human label for tags: the id with underscores as spaces (`body_run` -> `body run`).
    pub fn label(&self) -> String {
        self.id.replace('_', " ")
    }

    pub fn field(&self, field: EditableField) -> Option<&str> {
        match field {
            EditableField::Summary => Some(self.summary.as_str()),
            other => self.primary.get(other),
        }
    }

    pub fn slider(&self, id: &str) -> Option<&DimensionSlider> {
        self.sliders.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnassignedMark {
    pub note: String,
    pub bbox: RoiBBox,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub cue: String,
    pub meaning: String,
    #[serde(flatten)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InterpretationResult {
    pub units: Vec<AnimationUnit>,
    pub unassigned_marks: Vec<UnassignedMark>,
    pub global_timeline: Vec<String>,
    pub legend_inferred: Vec<LegendEntry>,
    #[serde(flatten)]
    pub extras: Extras,
}

impl InterpretationResult {
    pub fn unit(&self, id: &str) -> Option<&AnimationUnit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub(crate) fn unit_index(&self, id: &str) -> Result<usize, IntentError> {
        self.units
            .iter()
            .position(|u| u.id == id)
            .ok_or_else(|| IntentError::UnknownUnit(id.to_string()))
    }

    /// Canonical JSON (sorted keys), the form stored and sent over the wire.
    pub fn to_json(&self) -> String {
        let bytes = crate::digest::canonical_json(self).expect("interpretation serializes");
        String::from_utf8(bytes).expect("serde_json emits UTF-8")
    }

    pub fn to_pretty_json(&self) -> String {
        let value = serde_json::to_value(self).expect("interpretation serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    pub fn has_user_edits(&self) -> bool {
        self.units.iter().any(|u| !u.user_edits.is_empty())
    }
}
