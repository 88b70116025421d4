//! Randomized workspaces covering every persisted field.

use chrono::{TimeZone, Utc};
use notana_core::backend::DigestStamper;
use notana_core::generation::generate_frames;
use notana_core::intent::parse_interpretation;
use notana_core::prompt::synthesize_frame_prompts;
use notana_core::raster::Raster;
use notana_core::timeline::{build_timeline, keyframe_schedule, DecompositionEntry};
use notana_core::workspace::{BrushState, Layer, Workspace};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_raster(rng: &mut StdRng, w: u32, h: u32) -> Raster {
    let pixels: Vec<u8> = (0..w * h * 4).map(|_| rng.gen()).collect();
    Raster::from_rgba(w, h, pixels).unwrap()
}

pub fn random_workspace(seed: u64) -> Workspace {
    let mut rng = StdRng::seed_from_u64(seed);
    let (w, h) = (rng.gen_range(10..40), rng.gen_range(10..40));
    let created = Utc.timestamp_opt(1_700_000_000 + rng.gen_range(0..1_000_000), 0).unwrap();
    let mut ws = Workspace::with_drawing(&format!("ws-{seed}"), random_raster(&mut rng, w, h), created).unwrap();
    ws.set_layer(Layer::Notation, random_raster(&mut rng, w, h)).unwrap();
    ws.brush = BrushState {
        mode: if rng.gen() { Layer::Drawing } else { Layer::Notation },
        size: f64::from(rng.gen_range(1..40)) / 2.0,
        color: format!("#{:06X}", rng.gen_range(0..0xFFFFFFu32)),
    };
    if rng.gen_bool(0.2) {
        return ws;
    }

    let n_units = rng.gen_range(0..4);
    let units: Vec<String> = (0..n_units)
        .map(|i| {
            let order = if rng.gen() { rng.gen_range(1..4).to_string() } else { "null".into() };
            format!(
                r#"{{"id": "unit_{i}", "roi_bbox": [{}, {}, 20, 20.5], "primary": {{"source": "part {i}", "path": "moves {}"}},
                "temporal_order": {order}, "confidence": {}, "natural_language_summary": "Unit {i} moves.",
                "sliders": [{{"label": "reach", "kind": "amplitude", "min": 0.5, "max": 2.0}}]}}"#,
                rng.gen_range(0..20),
                f64::from(rng.gen_range(0..20)) / 2.0,
                rng.gen_range(0..100),
                rng.gen_range(0..=100) as f64 / 100.0,
            )
        })
        .collect();
    let result = notana_core::intent::assign_missing_tag_colors(
        &parse_interpretation(&format!(r#"{{"units": [{}]}}"#, units.join(","))).unwrap(),
    );
    let decomposition: Vec<DecompositionEntry> = result
        .units
        .iter()
        .flat_map(|u| {
            (0..rng.gen_range(1..4)).map(|k| DecompositionEntry {
                unit_id: u.id.clone(),
                part_name: format!("part{k}"),
                verb: "swing".into(),
                description: String::new(),
            })
        })
        .collect();
    let mut timeline = build_timeline(&result, &decomposition).unwrap();
    if let Some(b) = timeline.blocks.first().map(|b| b.id.clone()) {
        timeline = timeline.resize_block(&b, f64::from(rng.gen_range(1..8)) * 0.25).unwrap();
    }
    let schedule = keyframe_schedule(&timeline);
    let prompts = synthesize_frame_prompts(&result, &timeline, &schedule).unwrap();
    if !prompts.is_empty() && rng.gen() {
        ws.frames = generate_frames(&ws.drawing, &prompts, &DigestStamper).unwrap();
    }
    ws.interpretation = Some(result);
    ws.decomposition = decomposition;
    ws.timeline = Some(timeline);
    ws
}
