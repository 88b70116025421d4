//! Offline end-to-end examples: a running child with dragging hair, a stack of
//! squashing cubes, and a water splash. Each runs the full loop against a
//! scripted interpreter and the digest-stamping image mock.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use notana_core::backend::{decode_stamps, prompt_digest_bytes, ScriptedInterpreter};
use notana_core::generation::FrameRecord;
use notana_core::intent::InterpretationResult;
use notana_core::raster::paint::{disc, rect, stroke};
use notana_core::raster::{Raster, Rgba, TRANSPARENT, WHITE};
use notana_core::timeline::Timeline;
use notana_core::workspace::Layer;
use notana_store::{SnapshotMeta, SteppingClock, Store};
use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::engine::{BlockOp, CreateRequest, Engine};
use crate::error::ApiError;

/// Text that only the decomposition prompt contains.
pub const DECOMPOSE_NEEDLE: &str = "break its motion into primitive per-part motions";

pub const CANVAS: (u32, u32) = (192, 144);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    Run,
    Cubes,
    Splash,
}

impl Example {
    pub const ALL: [Example; 3] = [Example::Run, Example::Cubes, Example::Splash];

    pub fn name(&self) -> &'static str {
        match self {
            Example::Run => "run",
            Example::Cubes => "cubes",
            Example::Splash => "splash",
        }
    }

    pub fn interpretation_reply(&self) -> &'static str {
        match self {
            Example::Run => include_str!("../../../fixtures/run/interpretation.json"),
            Example::Cubes => include_str!("../../../fixtures/cubes/interpretation.json"),
            Example::Splash => include_str!("../../../fixtures/splash/interpretation.json"),
        }
    }

    pub fn decomposition_reply(&self) -> &'static str {
        match self {
            Example::Run => include_str!("../../../fixtures/run/decomposition.json"),
            Example::Cubes => include_str!("../../../fixtures/cubes/decomposition.json"),
            Example::Splash => include_str!("../../../fixtures/splash/decomposition.json"),
        }
    }

    /// Interpreter mock answering decomposition prompts and everything else.
    pub fn mock_interpreter(&self) -> ScriptedInterpreter {
        ScriptedInterpreter::new()
            .when(DECOMPOSE_NEEDLE, [self.decomposition_reply()])
            .fallback([self.interpretation_reply()])
    }

    pub fn drawing(&self) -> Raster {
        let (w, h) = CANVAS;
        let mut r = Raster::filled(w, h, WHITE).expect("fixed canvas");
        let ink: Rgba = [40, 40, 40, 255];
        match self {
            Example::Run => {
                disc(&mut r, 84.0, 34.0, 11.0, ink);
                stroke(&mut r, (70.0, 36.0), (58.0, 46.0), 4.0, ink);
                stroke(&mut r, (84.0, 45.0), (88.0, 85.0), 5.0, ink);
                stroke(&mut r, (86.0, 55.0), (70.0, 72.0), 3.0, ink);
                stroke(&mut r, (86.0, 55.0), (104.0, 66.0), 3.0, ink);
                stroke(&mut r, (88.0, 85.0), (76.0, 118.0), 4.0, ink);
                stroke(&mut r, (88.0, 85.0), (100.0, 116.0), 4.0, ink);
            }
            Example::Cubes => {
                rect(&mut r, 74, 100, 118, 130, [70, 90, 160, 255]);
                rect(&mut r, 78, 68, 114, 98, [90, 120, 190, 255]);
                rect(&mut r, 82, 40, 110, 66, [120, 150, 210, 255]);
            }
            Example::Splash => {
                rect(&mut r, 0, 100, w as i64 - 1, h as i64 - 1, [120, 170, 220, 255]);
                disc(&mut r, 96.0, 92.0, 9.0, [60, 60, 60, 255]);
            }
        }
        r
    }

    pub fn notation(&self) -> Raster {
        let (w, h) = CANVAS;
        let mut r = Raster::filled(w, h, TRANSPARENT).expect("fixed canvas");
        let orange: Rgba = [245, 130, 30, 255];
        let green: Rgba = [40, 170, 80, 255];
        let blue: Rgba = [30, 90, 230, 255];
        match self {
            Example::Run => {
                arrow(&mut r, (60.0, 128.0), (170.0, 128.0), 4.0, orange);
                arrow(&mut r, (62.0, 26.0), (36.0, 34.0), 3.0, green);
            }
            Example::Cubes => {
                arrow(&mut r, (96.0, 20.0), (96.0, 36.0), 3.0, blue);
                arrow(&mut r, (130.0, 110.0), (130.0, 40.0), 3.0, blue);
                stroke(&mut r, (60.0, 130.0), (70.0, 30.0), 10.0, [30, 90, 230, 120]);
            }
            Example::Splash => {
                arrow(&mut r, (84.0, 100.0), (40.0, 96.0), 3.0, blue);
                arrow(&mut r, (108.0, 100.0), (152.0, 96.0), 3.0, blue);
                arrow(&mut r, (90.0, 84.0), (82.0, 30.0), 3.0, blue);
                arrow(&mut r, (102.0, 84.0), (110.0, 30.0), 3.0, blue);
            }
        }
        r
    }

    /// Timeline and slider adjustments made before generating.
    pub fn adjustments(&self) -> Vec<Adjustment> {
        match self {
            // Lengthen the hair drag so it overlaps past the body's last pose.
            Example::Run => vec![Adjustment::ResizeBlock {
                label: "ponytail drag",
                duration: 1.5,
            }],
            Example::Cubes => vec![],
            Example::Splash => vec![Adjustment::Slider {
                unit: "crown_rise",
                slider: "height",
                value: 1.4,
            }],
        }
    }
}

fn arrow(r: &mut Raster, from: (f64, f64), to: (f64, f64), width: f64, color: Rgba) {
    stroke(r, from, to, width, color);
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = (dx * dx + dy * dy).sqrt().max(1.0);
    let (ux, uy) = (dx / len, dy / len);
    let head = 8.0;
    for side in [-1.0, 1.0] {
        let back = (to.0 - ux * head - side * uy * head * 0.6, to.1 - uy * head + side * ux * head * 0.6);
        stroke(r, to, back, width, color);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Adjustment {
    ResizeBlock { label: &'static str, duration: f64 },
    Slider { unit: &'static str, slider: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoFrame {
    pub index: usize,
    pub frame_id: String,
    pub marker_id: String,
    pub time: f64,
    pub parent_frame_id: Option<String>,
    pub prompt: String,
    pub prompt_digest: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub example: Example,
    pub workspace_id: String,
    pub interpretation: InterpretationResult,
    pub timeline: Timeline,
    pub frames: Vec<DemoFrame>,
    /// Every frame carries the prompt digests of itself and all its ancestors.
    pub chain_verified: bool,
    pub snapshot: SnapshotMeta,
    pub workspace_dir: PathBuf,
}

/// True when frame `i` carries the digests of prompts `0..=i` in order.
pub fn chain_holds(frames: &[FrameRecord]) -> bool {
    frames.iter().enumerate().all(|(i, f)| {
        let expected: Vec<[u8; 32]> = frames[..=i].iter().map(|p| prompt_digest_bytes(&p.prompt)).collect();
        f.image.as_ref().is_some_and(|img| decode_stamps(img) == expected)
    })
}

/// Runs an example end to end and writes `result.json` and `frame_<i>.png`
/// into `out_dir`. The workspace itself lives under `out_dir/workspaces`.
pub fn run_example(example: Example, out_dir: &Path) -> Result<DemoReport, ApiError> {
    fs::create_dir_all(out_dir).map_err(io)?;
    let root = out_dir.join("workspaces");
    let id = example.name();
    if root.join(id).exists() {
        fs::remove_dir_all(root.join(id)).map_err(io)?;
    }
    let clock = Arc::new(SteppingClock::new(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()));
    let store = Store::with_clock(&root, clock)?;
    let engine = Engine::new(store, Backends::mock(example.mock_interpreter()));

    engine.create(CreateRequest {
        id: Some(id.to_string()),
        base_png: Some(example.drawing().encode_png()?),
        ..CreateRequest::default()
    })?;
    engine.put_layer(id, Layer::Notation, &example.notation().encode_png()?)?;
    engine.infer(id)?;
    for adjustment in example.adjustments() {
        match adjustment {
            Adjustment::ResizeBlock { label, duration } => {
                let ws = engine.workspace(id)?;
                let block = ws
                    .timeline
                    .as_ref()
                    .and_then(|t| t.blocks.iter().find(|b| b.label == label))
                    .ok_or_else(|| ApiError::not_found(format!("block labelled {label}")))?;
                engine.edit_timeline(
                    id,
                    &BlockOp::Resize {
                        block_id: block.id.clone(),
                        duration,
                    },
                )?;
            }
            Adjustment::Slider { unit, slider, value } => {
                engine.set_slider(id, unit, slider, value)?;
            }
        }
    }
    let ticket = engine.begin_generation(id)?;
    let records = engine.generate(&ticket, None, &mut |_| {})?;
    drop(ticket);
    let snapshot = engine.save(id)?;

    let ws = engine.workspace(id)?;
    let timeline = ws.timeline.clone().expect("inferred workspace has a timeline");
    let mut frames = Vec::new();
    for r in &records {
        let file = format!("frame_{}.png", r.index);
        fs::write(out_dir.join(&file), engine.frame_png(id, r.index)?).map_err(io)?;
        frames.push(DemoFrame {
            index: r.index,
            frame_id: r.frame_id.clone(),
            marker_id: r.marker_id.clone(),
            time: timeline.marker(&r.marker_id).map_or(f64::NAN, |m| m.time),
            parent_frame_id: r.parent_frame_id.clone(),
            prompt: r.prompt.clone(),
            prompt_digest: r.prompt_digest.clone(),
            file,
        });
    }
    let report = DemoReport {
        example,
        workspace_id: id.to_string(),
        interpretation: ws.interpretation.clone().expect("inferred"),
        timeline,
        frames,
        chain_verified: chain_holds(&records),
        snapshot,
        workspace_dir: root.join(id),
    };
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    fs::write(out_dir.join("result.json"), json).map_err(io)?;
    Ok(report)
}

fn io(e: std::io::Error) -> ApiError {
    ApiError::new(crate::error::ErrorCode::StorageError, e.to_string())
}
