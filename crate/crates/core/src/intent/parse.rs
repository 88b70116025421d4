//! Tolerant extraction, strict validation.
//!
//! Replies are scanned for the first balanced `{...}` that parses as JSON
//! (code fences and surrounding prose are ignored), then walked key by key.
//! Every rejection names the JSON path that failed.

use std::collections::{BTreeSet, HashSet};

use serde_json::{Map, Value};

use super::types::*;
use super::IntentError;

/// Knobs for values the reply may leave out.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    /// Bounds used when a slider omits `min`/`max`.
    pub default_slider_range: (f64, f64),
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            default_slider_range: (DIRECTIONAL_BIAS_MIN, DIRECTIONAL_BIAS_MAX),
        }
    }
}

pub fn parse_interpretation(raw: &str) -> Result<InterpretationResult, IntentError> {
    parse_interpretation_with(raw, &ParseOptions::default())
}

pub fn parse_interpretation_with(
    raw: &str,
    options: &ParseOptions,
) -> Result<InterpretationResult, IntentError> {
    let object = extract_json_object(raw)?;
    Walker { options }.result(object)
}

/// Finds the first balanced JSON object in `raw` that actually parses.
pub fn extract_json_object(raw: &str) -> Result<Map<String, Value>, IntentError> {
    let text = strip_fences(raw.trim());
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(text) {
        return Ok(map);
    }
    let mut from = 0;
    while let Some(rel) = text[from..].find('{') {
        let start = from + rel;
        if let Some(end) = balanced_end(&text[start..]) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&text[start..start + end])
            {
                return Ok(map);
            }
        }
        from = start + 1;
    }
    Err(IntentError::NoJsonFound)
}

fn strip_fences(s: &str) -> &str {
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Byte length of the balanced object starting at `s[0] == '{'`, string-aware.
fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if in_str {
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

struct Walker<'a> {
    options: &'a ParseOptions,
}

type Obj = Map<String, Value>;

fn err(path: &str, reason: impl Into<String>) -> IntentError {
    IntentError::violation(path, reason)
}

fn as_object<'v>(v: &'v Value, path: &str) -> Result<&'v Obj, IntentError> {
    v.as_object().ok_or_else(|| err(path, "expected an object"))
}

fn as_array<'v>(v: &'v Value, path: &str) -> Result<&'v Vec<Value>, IntentError> {
    v.as_array().ok_or_else(|| err(path, "expected an array"))
}

fn optional_array<'v>(obj: &'v Obj, key: &str, path: &str) -> Result<&'v [Value], IntentError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(&[]),
        Some(v) => as_array(v, &format!("{path}.{key}")).map(Vec::as_slice),
    }
}

fn required<'v>(obj: &'v Obj, key: &str, path: &str) -> Result<&'v Value, IntentError> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(err(&format!("{path}.{key}"), "missing required key")),
        Some(v) => Ok(v),
    }
}

fn string_at(v: &Value, path: &str) -> Result<String, IntentError> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| err(path, "expected a string"))
}

fn non_empty_string(obj: &Obj, key: &str, path: &str) -> Result<String, IntentError> {
    let p = format!("{path}.{key}");
    let s = string_at(required(obj, key, path)?, &p)?;
    if s.trim().is_empty() {
        return Err(err(&p, "must be non-empty"));
    }
    Ok(s)
}

fn optional_string(obj: &Obj, key: &str, path: &str) -> Result<Option<String>, IntentError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => {
            let s = string_at(v, &format!("{path}.{key}"))?;
            Ok((!s.trim().is_empty()).then_some(s))
        }
    }
}

fn number_at(v: &Value, path: &str) -> Result<f64, IntentError> {
    v.as_f64()
        .filter(|f| f.is_finite())
        .ok_or_else(|| err(path, "expected a finite number"))
}

fn extras(obj: &Obj, known: &[&str]) -> Extras {
    obj.iter()
        .filter(|(k, _)| !known.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

fn enum_value<T: Copy>(
    v: &Value,
    path: &str,
    all: &[T],
    name: impl Fn(&T) -> &'static str,
) -> Result<T, IntentError> {
    let s = string_at(v, path)?;
    let wanted = s.trim().to_ascii_lowercase();
    all.iter().copied().find(|t| name(t) == wanted).ok_or_else(|| {
        let allowed: Vec<_> = all.iter().map(&name).collect();
        err(path, format!("`{s}` not one of {}", allowed.join("|")))
    })
}

/// Grid value in [0, 30]; off-lattice values are snapped to the nearest half step.
fn grid_value(v: &Value, path: &str) -> Result<f64, IntentError> {
    let f = number_at(v, path)?;
    if !(0.0..=GRID_CELLS as f64).contains(&f) {
        return Err(err(path, format!("{f} outside grid range [0, {GRID_CELLS}]")));
    }
    Ok(snap_half(f))
}

fn roi_at(v: &Value, path: &str) -> Result<RoiBBox, IntentError> {
    let items = as_array(v, path)?;
    if items.len() != 4 {
        return Err(err(path, format!("expected 4 numbers, got {}", items.len())));
    }
    let mut vals = [0.0; 4];
    for (i, item) in items.iter().enumerate() {
        vals[i] = grid_value(item, &format!("{path}[{i}]"))?;
    }
    RoiBBox::new(vals[0], vals[1], vals[2], vals[3])
        .map_err(|_| err(path, "expected x_min <= x_max and y_min <= y_max"))
}

const RESULT_KEYS: [&str; 4] = ["units", "unassigned_marks", "global_timeline", "legend_inferred"];
const UNIT_KEYS: [&str; 11] = [
    "id",
    "color",
    "roi_bbox",
    "primary",
    "secondary_modifiers",
    "temporal_order",
    "confidence",
    "natural_language_summary",
    "sliders",
    "user_edits",
    "pin_enforced",
];
const MODIFIER_KEYS: [&str; 4] = ["property", "value", "intended_meaning", "scope"];
const SLIDER_KEYS: [&str; 9] = [
    "id",
    "label",
    "kind",
    "min",
    "max",
    "default",
    "value",
    "min_label",
    "max_label",
];

impl Walker<'_> {
    fn result(&self, root: Obj) -> Result<InterpretationResult, IntentError> {
        let path = "$";
        let units_value = required(&root, "units", path)?;
        let units_raw = as_array(units_value, "$.units")?;
        let mut units = Vec::with_capacity(units_raw.len());
        let mut ids = HashSet::new();
        let mut colors = HashSet::new();
        for (i, raw) in units_raw.iter().enumerate() {
            let unit = self.unit(raw, i)?;
            if !ids.insert(unit.id.clone()) {
                return Err(IntentError::DuplicateUnitId(unit.id));
            }
            if let Some(color) = &unit.color {
                if !colors.insert(color.to_ascii_uppercase()) {
                    return Err(err(
                        &format!("$.units[{i}].color"),
                        format!("tag color `{color}` already used by another unit"),
                    ));
                }
            }
            units.push(unit);
        }

        let unassigned_marks = optional_array(&root, "unassigned_marks", path)?
            .iter()
            .enumerate()
            .map(|(i, v)| self.mark(v, &format!("$.unassigned_marks[{i}]")))
            .collect::<Result<_, _>>()?;

        let mut global_timeline = Vec::new();
        let mut seen = HashSet::new();
        for (i, v) in optional_array(&root, "global_timeline", path)?.iter().enumerate() {
            let p = format!("$.global_timeline[{i}]");
            let id = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) if n.as_u64().is_some() => {
                    let n = n.as_u64().unwrap_or_default();
                    if ids.contains(&n.to_string()) {
                        n.to_string()
                    } else {
                        format!("u{n}")
                    }
                }
                _ => return Err(err(&p, "expected a unit id")),
            };
            if !ids.contains(&id) {
                return Err(err(&p, format!("references unknown unit `{id}`")));
            }
            if !seen.insert(id.clone()) {
                return Err(err(&p, format!("unit `{id}` listed more than once")));
            }
            global_timeline.push(id);
        }

        let legend_inferred = optional_array(&root, "legend_inferred", path)?
            .iter()
            .enumerate()
            .map(|(i, v)| legend(v, &format!("$.legend_inferred[{i}]")))
            .collect::<Result<_, _>>()?;

        Ok(InterpretationResult {
            units,
            unassigned_marks,
            global_timeline,
            legend_inferred,
            extras: extras(&root, &RESULT_KEYS),
        })
    }

    fn unit(&self, raw: &Value, index: usize) -> Result<AnimationUnit, IntentError> {
        let path = format!("$.units[{index}]");
        let obj = as_object(raw, &path)?;

        let id = match obj.get("id") {
            None | Some(Value::Null) => format!("u{}", index + 1),
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            Some(Value::Number(n)) if n.as_u64().is_some() => n.to_string(),
            Some(_) => return Err(err(&format!("{path}.id"), "expected a non-empty string")),
        };

        let color = optional_string(obj, "color", &path)?;
        let roi = roi_at(required(obj, "roi_bbox", &path)?, &format!("{path}.roi_bbox"))?;

        let primary_path = format!("{path}.primary");
        let primary_obj = as_object(required(obj, "primary", &path)?, &primary_path)?;
        let primary = PrimaryTriplet {
            source: optional_string(primary_obj, "source", &primary_path)?,
            path: optional_string(primary_obj, "path", &primary_path)?,
            target: optional_string(primary_obj, "target", &primary_path)?,
            extras: extras(primary_obj, &["source", "path", "target"]),
        };
        if primary.present_count() == 0 {
            return Err(err(
                &primary_path,
                "at least one of source, path, target must be present",
            ));
        }

        let modifiers = optional_array(obj, "secondary_modifiers", &path)?
            .iter()
            .enumerate()
            .map(|(i, v)| modifier(v, &format!("{path}.secondary_modifiers[{i}]")))
            .collect::<Result<_, _>>()?;

        let temporal_order = match obj.get("temporal_order") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let p = format!("{path}.temporal_order");
                let f = number_at(v, &p)?;
                if f < 0.0 || f.fract() != 0.0 || f > u32::MAX as f64 {
                    return Err(err(&p, format!("{f} is not a non-negative integer")));
                }
                Some(f as u32)
            }
        };

        let confidence_path = format!("{path}.confidence");
        let confidence = number_at(required(obj, "confidence", &path)?, &confidence_path)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(&confidence_path, format!("{confidence} outside [0, 1]")));
        }

        let summary = non_empty_string(obj, "natural_language_summary", &path)?;

        let sliders_path = format!("{path}.sliders");
        let sliders_raw = as_array(required(obj, "sliders", &path)?, &sliders_path)?;
        if sliders_raw.is_empty() || sliders_raw.len() > MAX_SLIDERS_PER_UNIT {
            return Err(err(
                &sliders_path,
                format!("expected 1-{MAX_SLIDERS_PER_UNIT} sliders, got {}", sliders_raw.len()),
            ));
        }
        let mut sliders = Vec::with_capacity(sliders_raw.len());
        let mut slider_ids = HashSet::new();
        for (i, v) in sliders_raw.iter().enumerate() {
            let slider = self.slider(v, i, &format!("{sliders_path}[{i}]"))?;
            if !slider_ids.insert(slider.id.clone()) {
                return Err(err(
                    &format!("{sliders_path}[{i}].id"),
                    format!("duplicate slider id `{}`", slider.id),
                ));
            }
            sliders.push(slider);
        }

        let user_edits = match obj.get("user_edits") {
            None | Some(Value::Null) => BTreeSet::new(),
            Some(v) => {
                let p = format!("{path}.user_edits");
                as_array(v, &p)?
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let fp = format!("{p}[{i}]");
                        let s = string_at(f, &fp)?;
                        EditableField::parse(&s).ok_or_else(|| err(&fp, format!("unknown field `{s}`")))
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        let pin_enforced = match obj.get("pin_enforced") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(err(&format!("{path}.pin_enforced"), "expected a boolean")),
        };

        Ok(AnimationUnit {
            id,
            color,
            roi,
            primary,
            modifiers,
            temporal_order,
            confidence,
            summary,
            sliders,
            user_edits,
            pin_enforced,
            extras: extras(obj, &UNIT_KEYS),
        })
    }

    fn slider(&self, raw: &Value, index: usize, path: &str) -> Result<DimensionSlider, IntentError> {
        let obj = as_object(raw, path)?;
        let id = match obj.get("id") {
            None | Some(Value::Null) => format!("s{}", index + 1),
            Some(v) => {
                let s = string_at(v, &format!("{path}.id"))?;
                if s.trim().is_empty() {
                    return Err(err(&format!("{path}.id"), "must be non-empty"));
                }
                s
            }
        };
        let label = non_empty_string(obj, "label", path)?;
        let kind = enum_value(
            required(obj, "kind", path)?,
            &format!("{path}.kind"),
            &SliderKind::ALL,
            SliderKind::as_str,
        )?;
        let bound = |key: &str, fallback: f64| -> Result<f64, IntentError> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(fallback),
                Some(v) => number_at(v, &format!("{path}.{key}")),
            }
        };
        let (lo, hi) = self.options.default_slider_range;
        let min = bound("min", lo)?;
        let max = bound("max", hi)?;
        let default = bound("default", SLIDER_DEFAULT)?;
        let value = bound("value", default)?;
        if min > max {
            return Err(err(path, format!("min {min} exceeds max {max}")));
        }
        if default != SLIDER_DEFAULT {
            return Err(err(
                &format!("{path}.default"),
                format!("sliders start neutral at {SLIDER_DEFAULT}, got {default}"),
            ));
        }
        if !(min..=max).contains(&default) {
            return Err(err(
                &format!("{path}.default"),
                format!("{default} outside [{min}, {max}]"),
            ));
        }
        if !(min..=max).contains(&value) {
            return Err(err(&format!("{path}.value"), format!("{value} outside [{min}, {max}]")));
        }
        if kind == SliderKind::DirectionalBias
            && (min < DIRECTIONAL_BIAS_MIN || max > DIRECTIONAL_BIAS_MAX)
        {
            return Err(err(
                path,
                format!(
                    "directional bias range [{min}, {max}] exceeds [{DIRECTIONAL_BIAS_MIN}, {DIRECTIONAL_BIAS_MAX}]"
                ),
            ));
        }
        Ok(DimensionSlider {
            id,
            label,
            kind,
            min,
            max,
            default,
            value,
            min_label: optional_string(obj, "min_label", path)?,
            max_label: optional_string(obj, "max_label", path)?,
            extras: extras(obj, &SLIDER_KEYS),
        })
    }

    fn mark(&self, raw: &Value, path: &str) -> Result<UnassignedMark, IntentError> {
        let obj = as_object(raw, path)?;
        let note = string_at(required(obj, "note", path)?, &format!("{path}.note"))?;
        let bbox = roi_at(required(obj, "bbox", path)?, &format!("{path}.bbox"))?;
        Ok(UnassignedMark {
            note,
            bbox,
            extras: extras(obj, &["note", "bbox"]),
        })
    }
}

fn modifier(raw: &Value, path: &str) -> Result<SecondaryModifier, IntentError> {
    let obj = as_object(raw, path)?;
    let property = enum_value(
        required(obj, "property", path)?,
        &format!("{path}.property"),
        &ModifierProperty::ALL,
        ModifierProperty::as_str,
    )?;
    let value = non_empty_string(obj, "value", path)?;
    let intended_meaning = match obj.get("intended_meaning") {
        None | Some(Value::Null) => String::new(),
        Some(v) => string_at(v, &format!("{path}.intended_meaning"))?,
    };
    let scope = enum_value(
        required(obj, "scope", path)?,
        &format!("{path}.scope"),
        &ModifierScope::ALL,
        ModifierScope::as_str,
    )?;
    Ok(SecondaryModifier {
        property,
        value,
        intended_meaning,
        scope,
        extras: extras(obj, &MODIFIER_KEYS),
    })
}

/// Accepts `{cue, meaning}` objects or `"red = paths"` strings.
fn legend(raw: &Value, path: &str) -> Result<LegendEntry, IntentError> {
    match raw {
        Value::String(s) => {
            let (cue, meaning) = s.split_once('=').unwrap_or((s.as_str(), ""));
            Ok(LegendEntry {
                cue: cue.trim().to_string(),
                meaning: meaning.trim().to_string(),
                extras: Extras::new(),
            })
        }
        Value::Object(obj) => Ok(LegendEntry {
            cue: string_at(required(obj, "cue", path)?, &format!("{path}.cue"))?,
            meaning: string_at(required(obj, "meaning", path)?, &format!("{path}.meaning"))?,
            extras: extras(obj, &["cue", "meaning"]),
        }),
        _ => Err(err(path, "expected an object or a string")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPTY: &str =
        r#"{"units": [], "unassigned_marks": [], "global_timeline": [], "legend_inferred": []}"#;

    fn unit_json(id: &str, confidence: f64) -> String {
        format!(
            r#"{{"id": "{id}", "roi_bbox": [1, 2, 3, 4], "primary": {{"source": "arm"}},
                "secondary_modifiers": [], "temporal_order": null, "confidence": {confidence},
                "natural_language_summary": "The arm lifts.",
                "sliders": [{{"label": "lift height", "kind": "amplitude"}}]}}"#
        )
    }

    fn with_units(units: &[String]) -> String {
        format!(r#"{{"units": [{}]}}"#, units.join(","))
    }

    fn violation_path(e: IntentError) -> String {
        match e {
            IntentError::SchemaViolation { path, .. } => path,
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn empty_result_is_valid() {
        let r = parse_interpretation(EMPTY).unwrap();
        assert!(r.units.is_empty());
        assert!(r.global_timeline.is_empty());
    }

    #[test]
    fn confidence_out_of_range() {
        let e = parse_interpretation(&with_units(&[unit_json("a", 1.2)])).unwrap_err();
        assert_eq!(violation_path(e), "$.units[0].confidence");
    }

    #[test]
    fn prose_and_fences_are_stripped() {
        let raw = format!("Sure! Here you go:\n```json\n{}\n```\nHope that helps.", EMPTY);
        assert!(parse_interpretation(&raw).is_ok());
        let raw = format!("Result follows {} trailing {{ junk", EMPTY);
        assert!(parse_interpretation(&raw).is_ok());
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_extraction() {
        let raw = format!(
            r#"note: {{not json}} then {{"units": [{}], "legend_inferred": ["red = }} paths"]}}"#,
            unit_json("a", 0.5)
        );
        let r = parse_interpretation(&raw).unwrap();
        assert_eq!(r.legend_inferred[0].cue, "red");
        assert_eq!(r.legend_inferred[0].meaning, "} paths");
    }

    #[test]
    fn no_object_means_no_json_found() {
        assert_eq!(
            parse_interpretation("The dog snaps its head to the right."),
            Err(IntentError::NoJsonFound)
        );
        assert_eq!(parse_interpretation("[1, 2, 3]"), Err(IntentError::NoJsonFound));
        assert_eq!(parse_interpretation("{ unterminated"), Err(IntentError::NoJsonFound));
    }

    #[test]
    fn missing_units_key() {
        let e = parse_interpretation(r#"{"global_timeline": []}"#).unwrap_err();
        assert_eq!(violation_path(e), "$.units");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = parse_interpretation(&with_units(&[unit_json("a", 0.5), unit_json("a", 0.6)]))
            .unwrap_err();
        assert_eq!(e, IntentError::DuplicateUnitId("a".into()));
    }

    #[test]
    fn ids_synthesized_in_listing_order() {
        let raw = with_units(&[
            unit_json("x", 0.5).replace(r#""id": "x","#, ""),
            unit_json("y", 0.5).replace(r#""id": "y","#, ""),
        ]);
        let r = parse_interpretation(&raw).unwrap();
        assert_eq!(r.units[0].id, "u1");
        assert_eq!(r.units[1].id, "u2");
    }

    #[test]
    fn numeric_timeline_entries_resolve_to_synthesized_ids() {
        let raw = format!(
            r#"{{"units": [{}, {}], "global_timeline": [2, 1]}}"#,
            unit_json("x", 0.5).replace(r#""id": "x","#, ""),
            unit_json("y", 0.5).replace(r#""id": "y","#, "")
        );
        let r = parse_interpretation(&raw).unwrap();
        assert_eq!(r.global_timeline, vec!["u2", "u1"]);
    }

    #[test]
    fn timeline_reference_checks() {
        let raw = format!(r#"{{"units": [{}], "global_timeline": ["zz"]}}"#, unit_json("a", 0.5));
        assert_eq!(violation_path(parse_interpretation(&raw).unwrap_err()), "$.global_timeline[0]");
        let raw = format!(
            r#"{{"units": [{}], "global_timeline": ["a", "a"]}}"#,
            unit_json("a", 0.5)
        );
        assert_eq!(violation_path(parse_interpretation(&raw).unwrap_err()), "$.global_timeline[1]");
    }

    #[test]
    fn all_triplet_fields_empty_rejected() {
        let raw = with_units(&[unit_json("a", 0.5)
            .replace(r#"{"source": "arm"}"#, r#"{"source": "", "path": null}"#)]);
        assert_eq!(violation_path(parse_interpretation(&raw).unwrap_err()), "$.units[0].primary");
    }

    #[test]
    fn bad_modifier_enum() {
        let raw = with_units(&[unit_json("a", 0.5).replace(
            r#""secondary_modifiers": []"#,
            r#""secondary_modifiers": [{"property": "symbol", "value": "star", "scope": "target"}]"#,
        )]);
        assert_eq!(
            violation_path(parse_interpretation(&raw).unwrap_err()),
            "$.units[0].secondary_modifiers[0].property"
        );
    }

    #[test]
    fn slider_rules() {
        let with_slider = |s: &str| {
            with_units(&[unit_json("a", 0.5).replace(
                r#"[{"label": "lift height", "kind": "amplitude"}]"#,
                s,
            )])
        };
        let ok = parse_interpretation(&with_slider(
            r#"[{"label": "forward bias", "kind": "directional_bias", "min": 0.5, "max": 1.5}]"#,
        ))
        .unwrap();
        let s = &ok.units[0].sliders[0];
        assert_eq!((s.id.as_str(), s.default, s.value), ("s1", 1.0, 1.0));

        for bad in [
            r#"[{"label": "b", "kind": "directional_bias", "min": 0.2, "max": 1.5}]"#,
            r#"[{"label": "b", "kind": "amplitude", "default": 2.0, "min": 0, "max": 3}]"#,
            r#"[{"label": "b", "kind": "amplitude", "value": 9}]"#,
            r#"[{"label": "b", "kind": "loudness"}]"#,
            r#"[]"#,
            r#"[{"label": "a", "kind": "timing"}, {"label": "b", "kind": "timing"},
                {"label": "c", "kind": "timing"}, {"label": "d", "kind": "timing"}]"#,
        ] {
            assert!(
                matches!(
                    parse_interpretation(&with_slider(bad)),
                    Err(IntentError::SchemaViolation { .. })
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn roi_is_snapped_and_bounded() {
        let raw = with_units(&[unit_json("a", 0.5).replace("[1, 2, 3, 4]", "[1.2, 2.25, 3.8, 4]")]);
        let r = parse_interpretation(&raw).unwrap();
        assert_eq!(r.units[0].roi.as_array(), [1.0, 2.0, 4.0, 4.0]);
        let raw = with_units(&[unit_json("a", 0.5).replace("[1, 2, 3, 4]", "[1, 2, 31, 4]")]);
        assert_eq!(
            violation_path(parse_interpretation(&raw).unwrap_err()),
            "$.units[0].roi_bbox[2]"
        );
    }

    #[test]
    fn duplicate_tag_colors_rejected() {
        let a = unit_json("a", 0.5).replace(r#""id": "a","#, r##""id": "a", "color": "#ff0000","##);
        let b = unit_json("b", 0.5).replace(r#""id": "b","#, r##""id": "b", "color": "#FF0000","##);
        assert_eq!(
            violation_path(parse_interpretation(&with_units(&[a, b])).unwrap_err()),
            "$.units[1].color"
        );
    }

    #[test]
    fn unknown_keys_survive_round_trip() {
        let raw = format!(
            r#"{{"units": [{}], "model_notes": {{"x": 1}}}}"#,
            unit_json("a", 0.5).replace(r#""id": "a","#, r#""id": "a", "label": "arm lift","#)
        );
        let r = parse_interpretation(&raw).unwrap();
        assert_eq!(r.extras["model_notes"]["x"], 1);
        assert_eq!(r.units[0].extras["label"], "arm lift");
        assert_eq!(parse_interpretation(&r.to_json()).unwrap(), r);
    }
}
