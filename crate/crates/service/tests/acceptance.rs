//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion failed.

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use notana_core::backend::{BackendError, DigestStamper, ImageGenerator};
use notana_core::generation::{generate_frames, regenerate_frame, FrameRecord, FrameStatus};
use notana_core::grid::{grid_to_pixel, pixel_to_grid, GridSpec};
use notana_core::intent::{
    assign_missing_tag_colors, parse_interpretation, set_slider, GridCoord, IntentError, InterpretationResult,
    ModifierProperty, SliderKind,
};
use notana_core::pipeline::{decompose, infer_motions, PipelineConfig};
use notana_core::prompt::{interpret_prompt, synthesize_frame_prompts, FramePrompt, PromptTemplate};
use notana_core::raster::{Raster, WHITE};
use notana_core::timeline::{build_timeline, keyframe_schedule, DecompositionEntry, MarkerStatus, Timeline};
use notana_service::demo::{run_example, Example};
use notana_service::{router, Backends, Engine};
use notana_store::{SteppingClock, Store, StoreError};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

#[path = "../../core/tests/support/delatex.rs"]
mod delatex;
#[path = "../../store/tests/support/random_workspace.rs"]
mod random_workspace;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion(name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:?}, budget {b:?}")),
        (o, _) => o,
    };
    let ms = elapsed.as_millis();
    match &outcome {
        Ok(detail) => println!("PASS {name} ({ms} ms): {detail}"),
        Err(why) => println!("FAIL {name} ({ms} ms): {why}"),
    }
    outcome.is_ok()
}

// ---------------------------------------------------------------- schema

fn schema_fidelity() -> Check {
    let expected = delatex::delatex(include_str!("../../core/tests/fixtures/interpret_prompt.tex"));
    let rendered = interpret_prompt(&PromptTemplate::interpret_default(), &[]);
    ensure(rendered.as_bytes() == expected.as_bytes(), || {
        let line = rendered.lines().zip(expected.lines()).position(|(a, b)| a != b);
        format!("default prompt differs from the LaTeX fixture (first differing line {line:?})")
    })?;

    let structured = parse_interpretation(include_str!("../../../fixtures/bulldog/structured_reply.json"))
        .map_err(|e| format!("structured reply rejected: {e}"))?;
    ensure(structured.units.len() == 2, || format!("{} units", structured.units.len()))?;
    let orders: Vec<_> = structured.units.iter().map(|u| u.temporal_order).collect();
    ensure(orders == [Some(1), Some(2)], || format!("temporal orders {orders:?}"))?;
    let has_text = structured
        .units
        .iter()
        .flat_map(|u| &u.modifiers)
        .any(|m| m.property == ModifierProperty::Text && m.value == "Follow Through!");
    ensure(has_text, || "no \"Follow Through!\" text modifier".into())?;

    let prose = parse_interpretation(include_str!("../../../fixtures/bulldog/prose_reply.txt"));
    ensure(prose == Err(IntentError::NoJsonFound), || format!("prose reply gave {prose:?}"))?;
    Ok(format!("prompt {} bytes identical, structured accepted, prose rejected", rendered.len()))
}

// ---------------------------------------------------------------- grid

/// Nearest integer to `num / den`, halves rounded up; inputs non-negative.
fn round_div(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

fn grid_oracle() -> Check {
    let mut checked = 0;
    for (w, h) in [(300u32, 300u32), (900, 900), (640, 480)] {
        let spec = GridSpec::for_image(w, h).map_err(|e| e.to_string())?;
        for hx in 0..=60u64 {
            for hy in 0..=60u64 {
                let g = GridCoord::new(hx as f64 / 2.0, hy as f64 / 2.0).map_err(|e| e.to_string())?;
                // pixel = half_steps * extent / 60, y measured from the bottom
                let ex = round_div(hx * u64::from(w), 60).min(u64::from(w) - 1) as u32;
                let ey = round_div((60 - hy) * u64::from(h), 60).min(u64::from(h) - 1) as u32;
                let (px, py) = grid_to_pixel(g, &spec);
                ensure((px, py) == (ex, ey), || {
                    format!("{w}x{h}: ({}, {}) -> ({px}, {py}), expected ({ex}, {ey})", g.x(), g.y())
                })?;
                let back = pixel_to_grid(f64::from(px), f64::from(py), &spec).map_err(|e| e.to_string())?;
                ensure(back == g, || {
                    format!("{w}x{h}: ({}, {}) came back as ({}, {})", g.x(), g.y(), back.x(), back.y())
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} intersections, 0 failures"))
}

// ---------------------------------------------------------------- run + hair

/// Reads the digest rows stamped into `img` without the library decoder.
fn stamped_rows(img: &Raster, rows: u32) -> Vec<[u8; 32]> {
    (0..rows)
        .map(|row| {
            let mut d = [0u8; 32];
            for i in 0..8u32 {
                d[i as usize * 4..i as usize * 4 + 4].copy_from_slice(&img.pixel(i, row));
            }
            d
        })
        .collect()
}

fn run_hair_fixture() -> Check {
    let example = Example::Run;
    let interpreter = example.mock_interpreter();
    let config = PipelineConfig::default();
    let drawing = example.drawing();
    let inference = infer_motions(&drawing, &example.notation(), &interpreter, &config).map_err(|e| e.to_string())?;
    let labels: Vec<String> = inference.result.units.iter().map(|u| u.label()).collect();
    ensure(labels == ["body run", "hair drag"], || format!("units {labels:?}"))?;
    let decomposition = decompose(&inference.result, &inference.image, &interpreter, &config).map_err(|e| e.to_string())?;
    ensure(decomposition.len() == 7, || format!("{} decomposition entries", decomposition.len()))?;
    let timeline = build_timeline(&inference.result, &decomposition).map_err(|e| e.to_string())?;
    ensure(timeline.blocks.len() == 7 && timeline.tracks.len() == 7, || {
        format!("{} blocks on {} tracks", timeline.blocks.len(), timeline.tracks.len())
    })?;
    let ponytail = timeline.blocks.iter().find(|b| b.label == "ponytail drag").ok_or("no ponytail block")?;
    let timeline = timeline.resize_block(&ponytail.id.clone(), 1.5).map_err(|e| e.to_string())?;

    let schedule = keyframe_schedule(&timeline);
    let prompts = synthesize_frame_prompts(&inference.result, &timeline, &schedule).map_err(|e| e.to_string())?;
    let frames = generate_frames(&drawing, &prompts, &DigestStamper).map_err(|e| e.error.to_string())?;
    ensure(frames.len() == 3, || format!("{} frames", frames.len()))?;

    // Frame i = base with rows 0..=i replaced by sha256 of prompts 0..=i.
    for (i, f) in frames.iter().enumerate() {
        let img = f.image.as_ref().ok_or_else(|| format!("frame {i} has no image"))?;
        let expected: Vec<[u8; 32]> = prompts[..=i].iter().map(|p| Sha256::digest(p.text.as_bytes()).into()).collect();
        ensure(stamped_rows(img, i as u32 + 1) == expected, || format!("frame {i} breaks the digest chain"))?;
        for y in i as u32 + 1..img.height() {
            for x in 0..img.width() {
                ensure(img.pixel(x, y) == drawing.pixel(x, y), || {
                    format!("frame {i} differs from the base at ({x}, {y})")
                })?;
            }
        }
        let parent = if i == 0 { "base".to_string() } else { frames[i - 1].frame_id.clone() };
        ensure(f.parent_frame_id.as_ref() == Some(&parent), || format!("frame {i} parent {:?}", f.parent_frame_id))?;
    }

    // Full loop through the service, ten times.
    let mut manifests = Vec::new();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for run in 0..10 {
        let out = dir.path().join(format!("run{run}"));
        let report = run_example(example, &out).map_err(|e| e.to_string())?;
        ensure(report.chain_verified && report.frames.len() == 3, || format!("run {run}: chain broken"))?;
        let ws = out.join("workspaces/run");
        let mut bytes = fs::read(ws.join("manifest.json")).map_err(|e| e.to_string())?;
        for i in 0..3 {
            bytes.extend(fs::read(out.join(format!("frame_{i}.png"))).map_err(|e| e.to_string())?);
        }
        manifests.push(bytes);
    }
    ensure(manifests.windows(2).all(|p| p[0] == p[1]), || "manifests differ across runs".into())?;
    Ok("7 blocks / 7 tracks, 3 frames chained base->f0->f1->f2, 10 identical runs".into())
}

// ---------------------------------------------------------------- sliders

#[derive(Debug, Clone)]
struct SliderSpec {
    kind: usize,
    bounds: Option<(f64, f64)>,
    set_to: f64,
}

fn slider_spec() -> impl Strategy<Value = SliderSpec> {
    (0usize..3, any::<bool>(), 0.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0).prop_map(|(kind, explicit, a, b, set_to)| {
        let bounds = explicit.then_some(match kind {
            1 => (0.5 + a * 0.5, 1.0 + b * 0.5),
            _ => (0.1 + a * 0.9, 1.0 + b * 2.0),
        });
        SliderSpec { kind, bounds, set_to }
    })
}

fn slider_result(units: &[Vec<SliderSpec>]) -> Result<InterpretationResult, IntentError> {
    let kinds = ["amplitude", "directional_bias", "timing"];
    let body: Vec<String> = units
        .iter()
        .enumerate()
        .map(|(i, sliders)| {
            let sliders: Vec<String> = sliders
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let bounds = s.bounds.map_or(String::new(), |(lo, hi)| format!(r#", "min": {lo}, "max": {hi}"#));
                    format!(r#"{{"id": "s{k}", "label": "dim {k}", "kind": "{}"{bounds}}}"#, kinds[s.kind])
                })
                .collect();
            format!(
                r#"{{"id": "unit_{i}", "roi_bbox": [1, 1, 9, 9], "primary": {{"source": "part {i}", "path": "arcs", "target": "rest"}},
                "temporal_order": {}, "confidence": 0.8, "natural_language_summary": "moves", "sliders": [{}]}}"#,
                i + 1,
                sliders.join(",")
            )
        })
        .collect();
    parse_interpretation(&format!(r#"{{"units": [{}]}}"#, body.join(","))).map(|r| assign_missing_tag_colors(&r))
}

fn prompts_for(result: &InterpretationResult) -> Vec<FramePrompt> {
    let decomposition: Vec<DecompositionEntry> = result
        .units
        .iter()
        .map(|u| DecompositionEntry {
            unit_id: u.id.clone(),
            part_name: "body".into(),
            verb: "moves".into(),
            description: String::new(),
        })
        .collect();
    let timeline = build_timeline(result, &decomposition).expect("timeline");
    synthesize_frame_prompts(result, &timeline, &keyframe_schedule(&timeline)).expect("prompts")
}

fn slider_contract() -> Check {
    let bad = slider_result(&[vec![SliderSpec {
        kind: 1,
        bounds: Some((0.2, 1.5)),
        set_to: 1.0,
    }]]);
    ensure(bad.is_err(), || "directional bias bounds below 0.5 were accepted".into())?;

    let strategy = proptest::collection::vec(proptest::collection::vec(slider_spec(), 1..=3), 1..=3);
    let mut runner = TestRunner::new(Config {
        cases: 500,
        failure_persistence: None,
        ..Config::default()
    });
    let cases = AtomicUsize::new(0);
    runner
        .run(&strategy, |units| {
            cases.fetch_add(1, Ordering::Relaxed);
            let parsed = slider_result(&units).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let mut moved = parsed.clone();
            for (u, specs) in parsed.units.iter().zip(&units) {
                for (s, spec) in u.sliders.iter().zip(specs) {
                    prop_assert_eq!(s.default, 1.0);
                    prop_assert_eq!(s.value, 1.0);
                    if s.kind == SliderKind::DirectionalBias {
                        prop_assert!(s.min >= 0.5 && s.max <= 1.5, "bias bounds [{}, {}]", s.min, s.max);
                    }
                    moved = set_slider(&moved, &u.id, &s.id, spec.set_to).map_err(|e| TestCaseError::fail(e.to_string()))?;
                    let v = moved.unit(&u.id).unwrap().slider(&s.id).unwrap().value;
                    prop_assert_eq!(v, spec.set_to.max(s.min).min(s.max));
                    if s.kind == SliderKind::DirectionalBias {
                        prop_assert!((0.5..=1.5).contains(&v));
                    }
                }
            }
            let mut neutral = moved.clone();
            for u in &parsed.units {
                for s in &u.sliders {
                    neutral = set_slider(&neutral, &u.id, &s.id, 1.0).unwrap();
                }
            }
            let mut bare = parsed.clone();
            for u in &mut bare.units {
                u.sliders.clear();
            }
            let reference: Vec<String> = prompts_for(&bare).into_iter().map(|p| p.text).collect();
            let neutral_prompts: Vec<String> = prompts_for(&neutral).into_iter().map(|p| p.text).collect();
            prop_assert_eq!(&neutral_prompts, &reference);
            let any_moved = moved.units.iter().flat_map(|u| &u.sliders).any(|s| s.value != 1.0);
            if any_moved {
                let moved_prompts: Vec<String> = prompts_for(&moved).into_iter().map(|p| p.text).collect();
                prop_assert_ne!(&moved_prompts, &reference);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} random configurations", cases.into_inner()))
}

// ---------------------------------------------------------------- timeline

fn run_fixture() -> (InterpretationResult, Timeline) {
    let result = assign_missing_tag_colors(&parse_interpretation(Example::Run.interpretation_reply()).unwrap());
    let decomposition = notana_core::pipeline::parse_decomposition(Example::Run.decomposition_reply()).unwrap();
    let timeline = build_timeline(&result, &decomposition).unwrap();
    (result, timeline)
}

/// Independent statement of the timeline invariants.
fn invariant_breaks(t: &Timeline) -> Vec<String> {
    let mut out = Vec::new();
    let unique = |ids: Vec<&str>| ids.iter().collect::<HashSet<_>>().len() == ids.len();
    if !unique(t.tracks.iter().map(|x| x.id.as_str()).collect())
        || !unique(t.blocks.iter().map(|x| x.id.as_str()).collect())
        || !unique(t.markers.iter().map(|x| x.id.as_str()).collect())
    {
        out.push("duplicate ids".to_string());
    }
    for b in &t.blocks {
        if !t.tracks.iter().any(|tr| tr.id == b.track_id) {
            out.push(format!("{} on missing track", b.id));
        }
        if !(b.start.is_finite() && b.start >= 0.0 && b.duration.is_finite() && b.duration > 0.0) {
            out.push(format!("{} has start {} duration {}", b.id, b.start, b.duration));
        }
        if !t.markers.iter().any(|m| m.time == b.start + b.duration) {
            out.push(format!("{} end has no marker", b.id));
        }
    }
    for i in 1..t.markers.len() {
        if t.markers[i - 1].time >= t.markers[i].time {
            out.push("markers out of order".to_string());
        }
    }
    for m in &t.markers {
        let ok = match m.status {
            MarkerStatus::Generated => m.frame_ref.is_some(),
            MarkerStatus::Placeholder => t.blocks.iter().any(|b| b.start + b.duration == m.time),
        };
        if !ok {
            out.push(format!("marker {} is dangling", m.id));
        }
    }
    out
}

fn pick(rng: &mut StdRng, ids: &[String]) -> String {
    if ids.is_empty() || rng.gen_bool(0.08) {
        "missing".to_string()
    } else {
        ids[rng.gen_range(0..ids.len())].clone()
    }
}

fn random_time(rng: &mut StdRng) -> f64 {
    match rng.gen_range(0..20) {
        0 => f64::NAN,
        1 => rng.gen_range(-3.0..0.0),
        2 => rng.gen_range(0.0..6.0),
        _ => f64::from(rng.gen_range(0..24)) * 0.25,
    }
}

fn generated(t: &Timeline) -> Vec<(String, f64, Option<String>)> {
    t.markers
        .iter()
        .filter(|m| m.status == MarkerStatus::Generated)
        .map(|m| (m.id.clone(), m.time, m.frame_ref.clone()))
        .collect()
}

/// Applies one random edit; returns the description on an invariant break.
fn random_step(rng: &mut StdRng, t: &Timeline, step: usize) -> Result<Timeline, String> {
    let blocks: Vec<String> = t.blocks.iter().map(|b| b.id.clone()).collect();
    let tracks: Vec<String> = t.tracks.iter().map(|x| x.id.clone()).collect();
    let markers: Vec<String> = t.markers.iter().map(|m| m.id.clone()).collect();
    let known = |id: &str, ids: &[String]| ids.iter().any(|x| x == id);
    let valid_start = |s: f64| s.is_finite() && s >= 0.0;
    let valid_duration = |d: f64| d.is_finite() && d > 0.0;
    let before_generated = generated(t);
    let (label, outcome, expect_ok, reset, remarked) = match rng.gen_range(0..12) {
        0..=2 => {
            let (id, s) = (pick(rng, &blocks), random_time(rng));
            let r = t.move_block(&id, s);
            if let Ok(n) = &r {
                let (old, new) = (t.block(&id).unwrap(), n.block(&id).unwrap());
                if new.start != s || new.duration != old.duration {
                    return Err(format!("step {step}: move left {new:?}"));
                }
            }
            (format!("move {id} to {s}"), r, known(&id, &blocks) && valid_start(s), false, None)
        }
        3..=5 => {
            let (id, d) = (pick(rng, &blocks), random_time(rng));
            let r = t.resize_block(&id, d);
            if let Ok(n) = &r {
                let (old, new) = (t.block(&id).unwrap(), n.block(&id).unwrap());
                if new.duration != d || new.start != old.start {
                    return Err(format!("step {step}: resize left {new:?}"));
                }
            }
            (format!("resize {id} to {d}"), r, known(&id, &blocks) && valid_duration(d), false, None)
        }
        6 => {
            let id = pick(rng, &blocks);
            let r = t.delete_block(&id);
            if let Ok(n) = &r {
                if n.block(&id).is_some() || n.blocks.len() + 1 != t.blocks.len() {
                    return Err(format!("step {step}: delete kept {id}"));
                }
            }
            (format!("delete {id}"), r, known(&id, &blocks), false, None)
        }
        7 | 8 => {
            let (track, s, d) = (pick(rng, &tracks), random_time(rng), random_time(rng));
            let r = t.add_block(&track, "extra", s, d, "");
            let ok = known(&track, &tracks) && valid_start(s) && valid_duration(d);
            let r = match r {
                Ok((n, id)) => {
                    let b = n.block(&id).ok_or(format!("step {step}: added block missing"))?;
                    if b.start != s || b.duration != d || b.track_id != track || n.blocks.len() != t.blocks.len() + 1 {
                        return Err(format!("step {step}: add produced {b:?}"));
                    }
                    Ok(n)
                }
                Err(e) => Err(e),
            };
            (format!("add on {track} at {s} for {d}"), r, ok, false, None)
        }
        9 | 10 => {
            let m = pick(rng, &markers);
            let r = t.mark_generated(&m, &format!("f{step}"));
            let ok = known(&m, &markers);
            (format!("mark {m}"), r, ok, false, Some(m))
        }
        _ => ("reset".to_string(), Ok(t.reset_generated()), true, true, None),
    };
    match outcome {
        Ok(next) => {
            if !expect_ok {
                return Err(format!("step {step}: {label} succeeded but should fail"));
            }
            let breaks = invariant_breaks(&next);
            if !breaks.is_empty() || !next.is_valid() {
                return Err(format!("step {step}: {label} broke {breaks:?} / {:?}", next.violations()));
            }
            let after = generated(&next);
            let kept = if reset {
                after.is_empty()
            } else {
                // re-marking a marker may swap its frame, nothing else moves
                before_generated
                    .iter()
                    .filter(|g| remarked.as_ref() != Some(&g.0))
                    .all(|g| after.contains(g))
            };
            if !kept {
                return Err(format!("step {step}: {label} disturbed generated markers"));
            }
            Ok(next)
        }
        Err(e) if expect_ok && !label.starts_with("mark") => Err(format!("step {step}: {label} failed: {e}")),
        Err(_) => Ok(t.clone()),
    }
}

fn frames_equal(a: &[FrameRecord], b: &[FrameRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            serde_json::to_vec(x).unwrap() == serde_json::to_vec(y).unwrap() && x.image == y.image
        })
}

fn timeline_robustness() -> Check {
    let (result, start) = run_fixture();
    let scripts = 10;
    for seed in 0..scripts {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut t = start.clone();
        for step in 0..1000 {
            t = random_step(&mut rng, &t, step).map_err(|e| format!("script {seed}, {e}"))?;
        }
    }

    let base = Raster::filled(48, 40, WHITE).map_err(|e| e.to_string())?;
    let mut schedules = 0;
    let mut seed = 1000;
    let mut frames_checked = 0;
    while schedules < 200 {
        seed += 1;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut t = start.clone();
        for step in 0..rng.gen_range(0..40) {
            t = random_step(&mut rng, &t, step)?;
        }
        let t = t.reset_generated();
        let prompts = synthesize_frame_prompts(&result, &t, &keyframe_schedule(&t)).map_err(|e| e.to_string())?;
        if prompts.is_empty() || prompts.len() > 30 {
            continue;
        }
        schedules += 1;
        let records = generate_frames(&base, &prompts, &DigestStamper).map_err(|e| e.error.to_string())?;
        let i = rng.gen_range(0..records.len());
        let out = regenerate_frame(&base, &records, i, &DigestStamper).map_err(|e| e.error.to_string())?;
        ensure(frames_equal(&out[..i], &records[..i]), || format!("seed {seed}: regenerate({i}) touched earlier frames"))?;
        ensure(out[i].status == FrameStatus::Done, || format!("seed {seed}: frame {i} not done"))?;
        ensure(out[i + 1..].iter().all(|f| f.status == FrameStatus::Pending), || {
            format!("seed {seed}: later frames not reset")
        })?;
        frames_checked += records.len();
    }
    Ok(format!("{scripts} scripts x 1000 steps; 200 schedules ({frames_checked} frames)"))
}

// ---------------------------------------------------------------- persistence

fn persistence() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clock = Arc::new(SteppingClock::new(Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap()));
    let store = Store::with_clock(dir.path(), clock).map_err(|e| e.to_string())?;
    for seed in 0..100 {
        let ws = random_workspace::random_workspace(5000 + seed);
        let meta = store.save(&ws).map_err(|e| e.to_string())?;
        let loaded = store.load(&ws.id, &meta.snapshot_id).map_err(|e| e.to_string())?.workspace;
        ensure(loaded.canonical_bytes() == ws.canonical_bytes(), || format!("seed {seed}: snapshot differs"))?;
        let current = store.read(&ws.id).map_err(|e| e.to_string())?;
        ensure(current.canonical_bytes() == ws.canonical_bytes(), || format!("seed {seed}: current state differs"))?;
        let blob = dir.path().join(&ws.id).join("history").join(format!("{}.snap", meta.digest));
        ensure(fs::read(&blob).is_ok(), || format!("seed {seed}: no snapshot blob"))?;
        let again = store.save(&loaded).map_err(|e| e.to_string())?;
        ensure(again.digest == meta.digest, || format!("seed {seed}: resave changed the digest"))?;
    }

    let mut rng = StdRng::seed_from_u64(7);
    let (mut detected, trials) = (0, 100);
    for seed in 0..trials {
        let ws = random_workspace::random_workspace(9000 + seed);
        let meta = store.save(&ws).map_err(|e| e.to_string())?;
        let blob = dir.path().join(&ws.id).join("history").join(format!("{}.snap", meta.digest));
        let mut bytes = fs::read(&blob).map_err(|e| e.to_string())?;
        match rng.gen_range(0..3) {
            0 => {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            1 => bytes.truncate(rng.gen_range(0..bytes.len())),
            _ => bytes.extend_from_slice(b"\n"),
        }
        fs::write(&blob, &bytes).map_err(|e| e.to_string())?;
        if matches!(store.load(&ws.id, &meta.snapshot_id), Err(StoreError::Integrity { .. })) {
            detected += 1;
        }
    }
    ensure(detected == trials, || format!("detected {detected}/{trials} corruptions"))?;
    Ok(format!("100 round-trips identical, {detected}/{trials} corruptions detected"))
}

// ---------------------------------------------------------------- service

struct SlowStamper;

impl ImageGenerator for SlowStamper {
    fn generate_image(&self, image: &Raster, prompt: &str) -> Result<Raster, BackendError> {
        std::thread::sleep(Duration::from_millis(100));
        DigestStamper.generate_image(image, prompt)
    }
}

fn concurrent_generate_statuses() -> Result<Vec<u16>, String> {
    use axum::body::{to_bytes, Body};
    use axum::http::{header, Request};
    use tower::ServiceExt;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let backends = Backends::new(Arc::new(Example::Run.mock_interpreter()), Arc::new(SlowStamper), "mock");
    let engine = Arc::new(Engine::new(store, backends));
    let app = router(engine);
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let send = |method: &str, uri: &str, body: Vec<u8>| {
            let req = Request::builder()
                .method(method)
                .uri(uri)
                .header(header::ACCEPT, "application/json")
                .header(header::CONTENT_TYPE, "image/png")
                .body(Body::from(body))
                .unwrap();
            let app = app.clone();
            async move {
                let resp = app.oneshot(req).await.unwrap();
                let status = resp.status().as_u16();
                let _ = to_bytes(resp.into_body(), usize::MAX).await;
                status
            }
        };
        let drawing = Example::Run.drawing().encode_png().unwrap();
        let notation = Example::Run.notation().encode_png().unwrap();
        let setup = [
            send("POST", "/workspaces?id=c", drawing).await,
            send("PUT", "/workspaces/c/layers/notation", notation).await,
            send("POST", "/workspaces/c/infer", Vec::new()).await,
        ];
        if setup != [201, 204, 200] {
            return Err(format!("setup statuses {setup:?}"));
        }
        let (a, b, c) = tokio::join!(
            send("POST", "/workspaces/c/generate", Vec::new()),
            send("POST", "/workspaces/c/generate", Vec::new()),
            send("POST", "/workspaces/c/generate", Vec::new()),
        );
        let mut statuses = vec![a, b, c];
        statuses.sort();
        Ok(statuses)
    })
}

fn service_contract() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for example in Example::ALL {
        let out = dir.path().join(example.name());
        let status = Command::new(env!("CARGO_BIN_EXE_notana"))
            .args(["demo", "--example", example.name(), "--out"])
            .arg(&out)
            // any attempt to reach the network would go nowhere
            .env("HTTP_PROXY", "http://127.0.0.1:9")
            .env("HTTPS_PROXY", "http://127.0.0.1:9")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("demo {} failed: {}", example.name(), String::from_utf8_lossy(&status.stderr))
        })?;
        let report: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("result.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let frames = report["frames"].as_array().map_or(0, Vec::len);
        ensure(frames > 0 && report["chain_verified"] == true, || format!("{}: {frames} frames", example.name()))?;
        for i in 0..frames {
            let png = fs::read(out.join(format!("frame_{i}.png"))).map_err(|e| e.to_string())?;
            Raster::decode_png(&png).map_err(|e| format!("{}: frame {i}: {e}", example.name()))?;
        }
    }
    let statuses = concurrent_generate_statuses()?;
    ensure(statuses == [200, 409, 409], || format!("concurrent /generate statuses {statuses:?}"))?;
    Ok(format!("3 demos offline, concurrent /generate -> {statuses:?}"))
}

fn main() -> std::process::ExitCode {
    let results = [
        criterion("schema fidelity", Some(Duration::from_secs(1)), schema_fidelity),
        criterion("grid oracle", Some(Duration::from_secs(1)), grid_oracle),
        criterion("run+hair fixture", Some(Duration::from_secs(5)), run_hair_fixture),
        criterion("slider contract", None, slider_contract),
        criterion("timeline robustness", None, timeline_robustness),
        criterion("persistence", None, persistence),
        criterion("service contract", None, service_contract),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
