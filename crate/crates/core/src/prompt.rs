//! Prompt templates and frame-prompt synthesis.
//!
//! Templates are versioned text assets with named `{slot}` placeholders. Only
//! the declared slots are substituted, so literal braces in a template (the
//! interpreter prompt has several) survive rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::digest::canonical_digest;
use crate::intent::{InterpretationResult, PinnedEdit};
use crate::timeline::{ScheduleEntry, Timeline};

pub const INTERPRET_TEMPLATE_ID: &str = "interpret_v1";
pub const DECOMPOSE_TEMPLATE_ID: &str = "decompose_v1";
pub const FRAME_TEMPLATE_ID: &str = "frame_prompt_v1";

pub const PINNED_EDITS_SLOT: &str = "pinned_edits_block";
pub const UNITS_SLOT: &str = "units_block";
pub const GLOBAL_STATE_SLOT: &str = "global_state";
pub const LOCAL_MOVEMENTS_SLOT: &str = "local_movements";
pub const SLIDER_CLAUSES_SLOT: &str = "slider_clauses";

/// Appended to the prompt when the previous reply could not be parsed.
pub const REPAIR_HINT: &str =
    "Your previous reply was not a single valid JSON object; return only the JSON";

const INTERPRET_V1: &str = include_str!("../assets/interpret_v1.txt");
const DECOMPOSE_V1: &str = include_str!("../assets/decompose_v1.txt");
const FRAME_V1: &str = include_str!("../assets/frame_prompt_v1.txt");

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PromptError {
    #[error("template `{id}` lacks slot {{{slot}}}")]
    MissingSlot { id: String, slot: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub text: String,
    pub slots: Vec<String>,
}

impl PromptTemplate {
    /// Builds a template, checking every slot occurs in the text.
    pub fn new(id: &str, text: &str, slots: &[&str]) -> Result<Self, PromptError> {
        if let Some(slot) = slots.iter().find(|s| !text.contains(&format!("{{{s}}}"))) {
            return Err(PromptError::MissingSlot {
                id: id.to_string(),
                slot: slot.to_string(),
            });
        }
        Ok(Self {
            id: id.to_string(),
            text: text.to_string(),
            slots: slots.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn interpret_default() -> Self {
        Self::new(INTERPRET_TEMPLATE_ID, INTERPRET_V1, &[PINNED_EDITS_SLOT]).expect("bundled asset")
    }

    pub fn decompose_default() -> Self {
        Self::new(DECOMPOSE_TEMPLATE_ID, DECOMPOSE_V1, &[UNITS_SLOT]).expect("bundled asset")
    }

    pub fn frame_default() -> Self {
        Self::new(
            FRAME_TEMPLATE_ID,
            FRAME_V1,
            &[GLOBAL_STATE_SLOT, LOCAL_MOVEMENTS_SLOT, SLIDER_CLAUSES_SLOT],
        )
        .expect("bundled asset")
    }

    /// Substitutes declared slots; unknown names in `values` are ignored and
    /// slots without a value render empty.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for slot in &self.slots {
            let value = values
                .iter()
                .find(|(name, _)| name == slot)
                .map_or("", |(_, v)| *v);
            out = out.replace(&format!("{{{slot}}}"), value);
        }
        out
    }
}

/// Pinned-edit section; empty when nothing is pinned so the rendered prompt
/// equals the bare template text.
pub fn pinned_edits_block(pins: &[PinnedEdit]) -> String {
    if pins.is_empty() {
        return String::new();
    }
    let lines: Vec<String> = pins.iter().map(PinnedEdit::assertion).collect();
    format!("\n\n{}", lines.join("\n"))
}

pub fn interpret_prompt(template: &PromptTemplate, pins: &[PinnedEdit]) -> String {
    template.render(&[(PINNED_EDITS_SLOT, &pinned_edits_block(pins))])
}

pub fn with_repair_hint(prompt: &str) -> String {
    format!("{prompt}\n\n{REPAIR_HINT}")
}

pub fn decompose_prompt(template: &PromptTemplate, result: &InterpretationResult) -> String {
    let lines: Vec<String> = result
        .units
        .iter()
        .map(|u| {
            let part = |name: &str, v: &Option<String>| {
                v.as_deref().map(|v| format!("{name}: {v}"))
            };
            let triplet: Vec<String> = [
                part("source", &u.primary.source),
                part("path", &u.primary.path),
                part("target", &u.primary.target),
            ]
            .into_iter()
            .flatten()
            .collect();
            format!("- {} ({}): {}", u.id, triplet.join("; "), u.summary)
        })
        .collect();
    template.render(&[(UNITS_SLOT, &lines.join("\n"))])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrompt {
    pub marker_id: String,
    pub index: usize,
    pub time: f64,
    pub text: String,
    pub inputs_digest: String,
}

/// Fraction of the unit's span elapsed at `t`, clamped to `[0, 1]`.
pub fn progress_fraction(t: f64, span: (f64, f64)) -> f64 {
    let (start, end) = span;
    if end <= start {
        return if t >= end { 1.0 } else { 0.0 };
    }
    ((t - start) / (end - start)).clamp(0.0, 1.0)
}

pub fn synthesize_frame_prompts(
    result: &InterpretationResult,
    timeline: &Timeline,
    schedule: &[ScheduleEntry],
) -> Result<Vec<FramePrompt>, PromptError> {
    synthesize_frame_prompts_with(&PromptTemplate::frame_default(), result, timeline, schedule)
}

pub fn synthesize_frame_prompts_with(
    template: &PromptTemplate,
    result: &InterpretationResult,
    timeline: &Timeline,
    schedule: &[ScheduleEntry],
) -> Result<Vec<FramePrompt>, PromptError> {
    let spans: BTreeMap<&str, Option<(f64, f64)>> = result
        .units
        .iter()
        .map(|u| (u.id.as_str(), timeline.unit_span(&u.id)))
        .collect();
    let slider_block = slider_clauses(result);

    let mut entries: Vec<&ScheduleEntry> = schedule.iter().collect();
    entries.sort_by(|a, b| a.time.total_cmp(&b.time));
    entries
        .into_iter()
        .enumerate()
        .map(|(index, entry)| {
            if timeline.marker(&entry.marker_id).is_none() {
                return Err(PromptError::DanglingReference(format!("marker {}", entry.marker_id)));
            }
            let mut active = Vec::new();
            for id in &entry.active_blocks {
                let block = timeline
                    .block(id)
                    .ok_or_else(|| PromptError::DanglingReference(format!("block {id}")))?;
                let unit = timeline
                    .unit_of_block(id)
                    .ok_or_else(|| PromptError::DanglingReference(format!("track {}", block.track_id)))?;
                if result.unit(unit).is_none() {
                    return Err(PromptError::DanglingReference(format!("unit {unit}")));
                }
                active.push(block);
            }

            let global: Vec<String> = result
                .units
                .iter()
                .map(|u| match spans[u.id.as_str()] {
                    Some(span) => format!(
                        "- {}: {} (progress {:.2})",
                        u.label(),
                        u.summary,
                        progress_fraction(entry.time, span)
                    ),
                    None => format!("- {}: {} (not on the timeline)", u.label(), u.summary),
                })
                .collect();
            let local: Vec<String> = if active.is_empty() {
                vec!["- none".to_string()]
            } else {
                active
                    .iter()
                    .map(|b| {
                        if b.description.trim().is_empty() {
                            format!("- {}", b.label)
                        } else {
                            format!("- {}: {}", b.label, b.description)
                        }
                    })
                    .collect()
            };

            let text = template.render(&[
                (GLOBAL_STATE_SLOT, &global.join("\n")),
                (LOCAL_MOVEMENTS_SLOT, &local.join("\n")),
                (SLIDER_CLAUSES_SLOT, &slider_block),
            ]);
            let inputs = json!({
                "template": template.id,
                "time": entry.time,
                "units": result.units,
                "active_blocks": active,
                "spans": spans,
            });
            Ok(FramePrompt {
                marker_id: entry.marker_id.clone(),
                index,
                time: entry.time,
                text,
                inputs_digest: canonical_digest(&inputs).expect("prompt inputs serialize"),
            })
        })
        .collect()
}

/// One magnitude clause per non-default slider; empty when all are neutral.
fn slider_clauses(result: &InterpretationResult) -> String {
    let clauses: Vec<String> = result
        .units
        .iter()
        .flat_map(|u| {
            u.sliders.iter().filter(|s| !s.is_neutral()).map(move |s| {
                format!(
                    "- exaggerate {} {} to {:.2}× of the default extent",
                    u.label(),
                    s.label,
                    s.value
                )
            })
        })
        .collect();
    if clauses.is_empty() {
        String::new()
    } else {
        format!("\n\nEmphasis:\n{}", clauses.join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{apply_unit_edit, parse_interpretation, pinned_edits, set_slider, EditableField, UnitEdits};
    use crate::timeline::{build_timeline, keyframe_schedule, DecompositionEntry};
    use proptest::prelude::*;

    fn run_hair() -> InterpretationResult {
        parse_interpretation(
            r##"{"units": [
              {"id": "body_run", "color": "#E4572E", "roi_bbox": [8, 2, 20, 26],
               "primary": {"source": "body", "path": "runs forward", "target": "mid-stride"},
               "temporal_order": 1, "confidence": 0.9,
               "natural_language_summary": "The character runs forward.",
               "sliders": [{"id": "stride", "label": "stride length", "kind": "amplitude"}]},
              {"id": "hair_drag", "color": "#29335C", "roi_bbox": [14, 20, 22, 27],
               "primary": {"source": "ponytail", "path": "drags behind"},
               "temporal_order": 1, "confidence": 0.8,
               "natural_language_summary": "The ponytail drags behind.",
               "sliders": [{"id": "lag", "label": "drag lag", "kind": "timing"}]}]}"##,
        )
        .unwrap()
    }

    fn entry(unit: &str, part: &str, verb: &str) -> DecompositionEntry {
        DecompositionEntry {
            unit_id: unit.into(),
            part_name: part.into(),
            verb: verb.into(),
            description: String::new(),
        }
    }

    fn run_hair_timeline(r: &InterpretationResult) -> Timeline {
        let t = build_timeline(
            r,
            &[
                entry("body_run", "torso", "lean forward"),
                entry("body_run", "left leg", "stride"),
                entry("hair_drag", "ponytail", "trail"),
            ],
        )
        .unwrap();
        let pony = t.blocks.iter().find(|b| b.label.starts_with("ponytail")).unwrap().id.clone();
        let t = t.resize_block(&pony, 1.5).unwrap();
        let torso = t.blocks[0].id.clone();
        t.resize_block(&torso, 0.5).unwrap()
    }

    #[test]
    fn bundled_templates_have_their_slots() {
        assert_eq!(PromptTemplate::interpret_default().slots, vec![PINNED_EDITS_SLOT]);
        assert_eq!(PromptTemplate::frame_default().slots.len(), 3);
        assert!(matches!(
            PromptTemplate::new("x", "no slots", &["a"]),
            Err(PromptError::MissingSlot { .. })
        ));
    }

    #[test]
    fn render_keeps_literal_braces() {
        let t = PromptTemplate::new("x", "{ a } {name} {other}", &["name"]).unwrap();
        assert_eq!(t.render(&[("name", "v"), ("other", "w")]), "{ a } v {other}");
    }

    #[test]
    fn interpret_prompt_without_pins_is_bare_text() {
        let t = PromptTemplate::interpret_default();
        let bare = t.text.replace("{pinned_edits_block}", "");
        assert_eq!(interpret_prompt(&t, &[]), bare);
        assert!(bare.ends_with("containing the above keys."));
        assert!(bare.contains("primary: { source, path, target }"));
    }

    #[test]
    fn interpret_prompt_lists_pins() {
        let r = apply_unit_edit(
            &run_hair(),
            "hair_drag",
            &UnitEdits::set(EditableField::Target, "hair settles behind head"),
        )
        .unwrap();
        let p = interpret_prompt(&PromptTemplate::interpret_default(), &pinned_edits(&r));
        assert!(p.ends_with(
            "keys.\n\nThe user asserts: unit hair_drag target = hair settles behind head; do not contradict"
        ));
    }

    #[test]
    fn repair_hint_is_appended() {
        assert_eq!(with_repair_hint("p"), format!("p\n\n{REPAIR_HINT}"));
    }

    #[test]
    fn decompose_prompt_lists_units() {
        let p = decompose_prompt(&PromptTemplate::decompose_default(), &run_hair());
        assert!(p.contains("- body_run (source: body; path: runs forward; target: mid-stride): The character runs forward."));
        assert!(p.contains("- hair_drag (source: ponytail; path: drags behind): The ponytail drags behind."));
        assert!(!p.contains("{units_block}"));
    }

    #[test]
    fn progress_fraction_examples() {
        assert_eq!(progress_fraction(0.5, (0.0, 1.0)), 0.5);
        assert_eq!(progress_fraction(-1.0, (0.0, 1.0)), 0.0);
        assert_eq!(progress_fraction(3.0, (1.0, 2.0)), 1.0);
    }

    #[test]
    fn one_prompt_per_schedule_entry_mentioning_both_units() {
        let r = run_hair();
        let t = run_hair_timeline(&r);
        let s = keyframe_schedule(&t);
        assert_eq!(s.len(), 3);
        let prompts = synthesize_frame_prompts(&r, &t, &s).unwrap();
        assert_eq!(prompts.len(), 3);
        for (i, p) in prompts.iter().enumerate() {
            assert_eq!(p.index, i);
            assert!(p.text.contains("run") && p.text.contains("drag"));
            assert!(!p.text.contains("Emphasis"));
        }
        // body_run spans [0, 1], hair_drag spans [0, 1.5]; markers at 0.5, 1, 1.5
        assert!(prompts[0].text.contains("- body run: The character runs forward. (progress 0.50)"));
        assert!(prompts[0].text.contains("- hair drag: The ponytail drags behind. (progress 0.33)"));
        assert!(prompts[2].text.contains("(progress 1.00)"));
        let distinct: std::collections::BTreeSet<_> = prompts.iter().map(|p| &p.text).collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn identical_inputs_identical_prompts() {
        let r = run_hair();
        let t = run_hair_timeline(&r);
        let s = keyframe_schedule(&t);
        assert_eq!(
            synthesize_frame_prompts(&r, &t, &s).unwrap(),
            synthesize_frame_prompts(&r, &t, &s).unwrap()
        );
    }

    #[test]
    fn non_default_slider_adds_clause() {
        let r = set_slider(&run_hair(), "hair_drag", "lag", 1.3).unwrap();
        let t = run_hair_timeline(&r);
        let s = keyframe_schedule(&t);
        let p = synthesize_frame_prompts(&r, &t, &s).unwrap();
        assert!(p[0]
            .text
            .ends_with("\n\nEmphasis:\n- exaggerate hair drag drag lag to 1.30× of the default extent"));
        let base = synthesize_frame_prompts(&run_hair(), &t, &s).unwrap();
        assert_ne!(p[0].inputs_digest, base[0].inputs_digest);
    }

    #[test]
    fn unknown_references_are_reported() {
        let r = run_hair();
        let t = run_hair_timeline(&r);
        let mut s = keyframe_schedule(&t);
        s[0].active_blocks.push("b999".into());
        assert!(matches!(
            synthesize_frame_prompts(&r, &t, &s),
            Err(PromptError::DanglingReference(_))
        ));
        let mut stripped = r.clone();
        stripped.units.truncate(1);
        assert!(matches!(
            synthesize_frame_prompts(&stripped, &t, &keyframe_schedule(&t)),
            Err(PromptError::DanglingReference(_))
        ));
    }

    proptest! {
        #[test]
        fn neutral_sliders_match_slider_free_prompts(
            values in proptest::collection::vec(prop_oneof![Just(1.0), 0.5f64..1.5], 2)
        ) {
            let mut r = run_hair();
            r = set_slider(&r, "body_run", "stride", values[0]).unwrap();
            r = set_slider(&r, "hair_drag", "lag", values[1]).unwrap();
            let t = run_hair_timeline(&r);
            let s = keyframe_schedule(&t);
            let with = synthesize_frame_prompts(&r, &t, &s).unwrap();
            let mut bare = r.clone();
            for u in &mut bare.units {
                u.sliders.retain(|s| !s.is_neutral());
            }
            let without = synthesize_frame_prompts(&bare, &t, &s).unwrap();
            for (a, b) in with.iter().zip(&without) {
                prop_assert_eq!(&a.text, &b.text);
            }
            let neutral = values.iter().all(|v| *v == 1.0);
            prop_assert_eq!(with[0].text.contains("Emphasis"), !neutral);
        }

        #[test]
        fn progress_is_monotone(starts in proptest::collection::vec(0u8..8, 3), durs in proptest::collection::vec(1u8..8, 3)) {
            let r = run_hair();
            let mut t = run_hair_timeline(&r);
            for i in 0..3 {
                let id = t.blocks[i].id.clone();
                t = t.move_block(&id, f64::from(starts[i]) * 0.5).unwrap();
                t = t.resize_block(&id, f64::from(durs[i]) * 0.5).unwrap();
            }
            let s = keyframe_schedule(&t);
            for u in &r.units {
                let span = t.unit_span(&u.id).unwrap();
                let fractions: Vec<f64> = s.iter().map(|e| progress_fraction(e.time, span)).collect();
                prop_assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
