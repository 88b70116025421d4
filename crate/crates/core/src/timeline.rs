//! Per-part timeline.
//!
//! Each animation unit is decomposed into primitive part motions; every part
//! gets a track, every primitive motion a block, and every block end a
//! keyframe marker. Time is measured in abstract beats.
//!
//! Layout rule used by [`build_timeline`]:
//! * units are ordered by `global_timeline` when present, otherwise by
//!   `temporal_order` ascending (units without an order come after, in
//!   listing order); units sharing an order share a slot;
//! * slot `k` starts at `k` beats, all blocks of a unit start together and
//!   last [`DEFAULT_BLOCK_BEATS`];
//! * one placeholder marker per distinct block end time.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::InterpretationResult;

pub const DEFAULT_BLOCK_BEATS: f64 = 1.0;
pub const SLOT_OFFSET_BEATS: f64 = 1.0;
pub const DEFAULT_SECONDS_PER_BEAT: f64 = 0.5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TimelineError {
    #[error("decomposition references unknown unit `{0}`")]
    UnknownUnitInDecomposition(String),
    #[error("unknown block `{0}`")]
    UnknownBlock(String),
    #[error("unknown track `{0}`")]
    UnknownTrack(String),
    #[error("unknown marker `{0}`")]
    UnknownMarker(String),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("start must be non-negative, got {0}")]
    NegativeStart(f64),
}

/// One primitive motion of one unit, as reported by the decomposition pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionEntry {
    pub unit_id: String,
    pub part_name: String,
    pub verb: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub part_name: String,
    pub unit_id: String,
    pub color: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub track_id: String,
    /// "part verb", e.g. "head tilt up".
    pub label: String,
    pub start: f64,
    pub duration: f64,
    pub description: String,
}

impl Block {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// Closed interval: a marker on either edge counts.
    pub fn is_active_at(&self, t: f64) -> bool {
        self.start <= t && t <= self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerStatus {
    Placeholder,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeMarker {
    pub id: String,
    pub time: f64,
    pub status: MarkerStatus,
    pub frame_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub tracks: Vec<Track>,
    pub blocks: Vec<Block>,
    pub markers: Vec<KeyframeMarker>,
    /// Display only.
    pub beat_duration_hint: f64,
    next_seq: u64,
}

impl Default for Timeline {
    fn default() -> Self {
        Self {
            tracks: Vec::new(),
            blocks: Vec::new(),
            markers: Vec::new(),
            beat_duration_hint: DEFAULT_SECONDS_PER_BEAT,
            next_seq: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub time: f64,
    pub active_blocks: Vec<String>,
    pub marker_id: String,
}

/// Start beat of each unit under the layout rule.
pub fn unit_start_beats(result: &InterpretationResult) -> BTreeMap<String, f64> {
    let mut starts = BTreeMap::new();
    let mut slot = 0usize;
    let listed: HashSet<&str> = result.global_timeline.iter().map(String::as_str).collect();
    for id in &result.global_timeline {
        starts.insert(id.clone(), slot as f64 * SLOT_OFFSET_BEATS);
        slot += 1;
    }
    let rest: Vec<_> = result
        .units
        .iter()
        .filter(|u| !listed.contains(u.id.as_str()))
        .collect();
    let mut ordered: Vec<_> = rest.iter().filter(|u| u.temporal_order.is_some()).collect();
    ordered.sort_by_key(|u| u.temporal_order);
    let mut previous = None;
    for unit in ordered {
        if previous.is_some() && previous != unit.temporal_order {
            slot += 1;
        }
        previous = unit.temporal_order;
        starts.insert(unit.id.clone(), slot as f64 * SLOT_OFFSET_BEATS);
    }
    if previous.is_some() {
        slot += 1;
    }
    for unit in rest.iter().filter(|u| u.temporal_order.is_none()) {
        starts.insert(unit.id.clone(), slot as f64 * SLOT_OFFSET_BEATS);
        slot += 1;
    }
    starts
}

pub fn build_timeline(
    result: &InterpretationResult,
    decomposition: &[DecompositionEntry],
) -> Result<Timeline, TimelineError> {
    if let Some(bad) = decomposition.iter().find(|e| result.unit(&e.unit_id).is_none()) {
        return Err(TimelineError::UnknownUnitInDecomposition(bad.unit_id.clone()));
    }
    let starts = unit_start_beats(result);
    let mut unit_order: Vec<_> = result.units.iter().map(|u| (starts[&u.id], u)).collect();
    unit_order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut timeline = Timeline::default();
    let mut track_index: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut block_seq = 0;
    for (start, unit) in unit_order {
        for entry in decomposition.iter().filter(|e| e.unit_id == unit.id) {
            let key = (unit.id.clone(), entry.part_name.clone());
            let track_id = match track_index.get(&key) {
                Some(id) => id.clone(),
                None => {
                    let id = format!("t{}", timeline.tracks.len() + 1);
                    timeline.tracks.push(Track {
                        id: id.clone(),
                        part_name: entry.part_name.clone(),
                        unit_id: unit.id.clone(),
                        color: unit.color.clone(),
                    });
                    track_index.insert(key, id.clone());
                    id
                }
            };
            block_seq += 1;
            timeline.blocks.push(Block {
                id: format!("b{block_seq}"),
                track_id,
                label: format!("{} {}", entry.part_name.trim(), entry.verb.trim()),
                start,
                duration: DEFAULT_BLOCK_BEATS,
                description: entry.description.clone(),
            });
        }
    }

    let mut ends: Vec<f64> = timeline.blocks.iter().map(Block::end).collect();
    ends.sort_by(f64::total_cmp);
    ends.dedup();
    for (i, time) in ends.into_iter().enumerate() {
        timeline.markers.push(KeyframeMarker {
            id: format!("k{}", i + 1),
            time,
            status: MarkerStatus::Placeholder,
            frame_ref: None,
        });
    }
    timeline.next_seq = 1 + [
        timeline.tracks.len(),
        timeline.blocks.len(),
        timeline.markers.len(),
    ]
    .into_iter()
    .max()
    .unwrap_or(0) as u64;
    Ok(timeline)
}

fn check_start(start: f64) -> Result<(), TimelineError> {
    if start.is_finite() && start >= 0.0 {
        Ok(())
    } else {
        Err(TimelineError::NegativeStart(start))
    }
}

fn check_duration(duration: f64) -> Result<(), TimelineError> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(TimelineError::NonPositiveDuration(duration))
    }
}

impl Timeline {
    pub fn track(&self, id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn marker(&self, id: &str) -> Option<&KeyframeMarker> {
        self.markers.iter().find(|m| m.id == id)
    }

    /// Unit owning a block, through its track.
    pub fn unit_of_block(&self, block_id: &str) -> Option<&str> {
        let block = self.block(block_id)?;
        self.track(&block.track_id).map(|t| t.unit_id.as_str())
    }

    /// `(first start, last end)` over the unit's blocks.
    pub fn unit_span(&self, unit_id: &str) -> Option<(f64, f64)> {
        let track_ids: HashSet<&str> = self
            .tracks
            .iter()
            .filter(|t| t.unit_id == unit_id)
            .map(|t| t.id.as_str())
            .collect();
        self.blocks
            .iter()
            .filter(|b| track_ids.contains(b.track_id.as_str()))
            .fold(None, |acc, b| match acc {
                None => Some((b.start, b.end())),
                Some((s, e)) => Some((f64::min(s, b.start), f64::max(e, b.end()))),
            })
    }

    fn block_index(&self, id: &str) -> Result<usize, TimelineError> {
        self.blocks
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| TimelineError::UnknownBlock(id.to_string()))
    }

    fn fresh_id(&mut self, prefix: char) -> String {
        let id = format!("{prefix}{}", self.next_seq);
        self.next_seq += 1;
        id
    }

    fn ends_at(&self, t: f64, except: Option<usize>) -> bool {
        self.blocks
            .iter()
            .enumerate()
            .any(|(i, b)| Some(i) != except && b.end() == t)
    }

    fn ensure_marker_at(&mut self, t: f64) {
        if !self.markers.iter().any(|m| m.time == t) {
            let id = self.fresh_id('k');
            self.markers.push(KeyframeMarker {
                id,
                time: t,
                status: MarkerStatus::Placeholder,
                frame_ref: None,
            });
        }
    }

    fn sort_markers(&mut self) {
        self.markers.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    /// Carries the block's exclusive placeholder marker from `old_end` to its new end.
    fn follow_end(&mut self, index: usize, old_end: f64) {
        let new_end = self.blocks[index].end();
        if new_end == old_end {
            return;
        }
        let shared = self.ends_at(old_end, Some(index));
        let movable = self
            .markers
            .iter()
            .position(|m| m.time == old_end && m.status == MarkerStatus::Placeholder);
        match movable {
            Some(m) if !shared => {
                if self.markers.iter().any(|k| k.time == new_end) {
                    self.markers.remove(m);
                } else {
                    self.markers[m].time = new_end;
                }
            }
            _ => self.ensure_marker_at(new_end),
        }
        self.sort_markers();
    }

    pub fn move_block(&self, block_id: &str, new_start: f64) -> Result<Timeline, TimelineError> {
        check_start(new_start)?;
        let index = self.block_index(block_id)?;
        let mut out = self.clone();
        let old_end = out.blocks[index].end();
        out.blocks[index].start = new_start;
        out.follow_end(index, old_end);
        Ok(out)
    }

    pub fn resize_block(&self, block_id: &str, new_duration: f64) -> Result<Timeline, TimelineError> {
        check_duration(new_duration)?;
        let index = self.block_index(block_id)?;
        let mut out = self.clone();
        let old_end = out.blocks[index].end();
        out.blocks[index].duration = new_duration;
        out.follow_end(index, old_end);
        Ok(out)
    }

    /// Removes a block; its track stays. An exclusive placeholder marker goes with it.
    pub fn delete_block(&self, block_id: &str) -> Result<Timeline, TimelineError> {
        let index = self.block_index(block_id)?;
        let mut out = self.clone();
        let end = out.blocks[index].end();
        out.blocks.remove(index);
        if !out.ends_at(end, None) {
            out.markers
                .retain(|m| !(m.time == end && m.status == MarkerStatus::Placeholder));
        }
        Ok(out)
    }

    pub fn add_block(
        &self,
        track_id: &str,
        label: &str,
        start: f64,
        duration: f64,
        description: &str,
    ) -> Result<(Timeline, String), TimelineError> {
        if self.track(track_id).is_none() {
            return Err(TimelineError::UnknownTrack(track_id.to_string()));
        }
        check_start(start)?;
        check_duration(duration)?;
        let mut out = self.clone();
        let id = out.fresh_id('b');
        out.blocks.push(Block {
            id: id.clone(),
            track_id: track_id.to_string(),
            label: label.to_string(),
            start,
            duration,
            description: description.to_string(),
        });
        out.ensure_marker_at(start + duration);
        out.sort_markers();
        Ok((out, id))
    }

    pub fn mark_generated(&self, marker_id: &str, frame_ref: &str) -> Result<Timeline, TimelineError> {
        let mut out = self.clone();
        let marker = out
            .markers
            .iter_mut()
            .find(|m| m.id == marker_id)
            .ok_or_else(|| TimelineError::UnknownMarker(marker_id.to_string()))?;
        marker.status = MarkerStatus::Generated;
        marker.frame_ref = Some(frame_ref.to_string());
        Ok(out)
    }

    /// Generated markers no longer sitting on any block end.
    pub fn orphaned_markers(&self) -> Vec<&KeyframeMarker> {
        self.markers
            .iter()
            .filter(|m| m.status == MarkerStatus::Generated && !self.ends_at(m.time, None))
            .collect()
    }

    /// Drops orphaned markers and turns the rest back into placeholders, ready for a
    /// fresh generation pass over the whole sequence.
    pub fn reset_generated(&self) -> Timeline {
        let mut out = self.clone();
        let orphaned: HashSet<String> = self.orphaned_markers().iter().map(|m| m.id.clone()).collect();
        out.markers.retain(|m| !orphaned.contains(&m.id));
        for m in &mut out.markers {
            m.status = MarkerStatus::Placeholder;
            m.frame_ref = None;
        }
        out
    }

    /// Every violated invariant, as readable messages. Empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let track_ids: HashSet<&str> = self.tracks.iter().map(|t| t.id.as_str()).collect();
        if track_ids.len() != self.tracks.len() {
            out.push("duplicate track ids".to_string());
        }
        let block_ids: HashSet<&str> = self.blocks.iter().map(|b| b.id.as_str()).collect();
        if block_ids.len() != self.blocks.len() {
            out.push("duplicate block ids".to_string());
        }
        let marker_ids: HashSet<&str> = self.markers.iter().map(|m| m.id.as_str()).collect();
        if marker_ids.len() != self.markers.len() {
            out.push("duplicate marker ids".to_string());
        }
        for b in &self.blocks {
            if !track_ids.contains(b.track_id.as_str()) {
                out.push(format!("block {} references missing track {}", b.id, b.track_id));
            }
            if !(b.start >= 0.0 && b.start.is_finite()) {
                out.push(format!("block {} starts at {}", b.id, b.start));
            }
            if !(b.duration > 0.0 && b.duration.is_finite()) {
                out.push(format!("block {} has duration {}", b.id, b.duration));
            }
            if !self.markers.iter().any(|m| m.time == b.end()) {
                out.push(format!("block {} has no marker at its end {}", b.id, b.end()));
            }
        }
        for pair in self.markers.windows(2) {
            if pair[0].time >= pair[1].time {
                out.push(format!(
                    "markers {} and {} not strictly ascending ({} >= {})",
                    pair[0].id, pair[1].id, pair[0].time, pair[1].time
                ));
            }
        }
        for m in &self.markers {
            match m.status {
                MarkerStatus::Generated if m.frame_ref.is_none() => {
                    out.push(format!("generated marker {} lacks a frame", m.id));
                }
                MarkerStatus::Placeholder if !self.ends_at(m.time, None) => {
                    out.push(format!("placeholder marker {} at {} matches no block end", m.id, m.time));
                }
                _ => {}
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

/// One entry per placeholder marker, ascending in time.
pub fn keyframe_schedule(timeline: &Timeline) -> Vec<ScheduleEntry> {
    let mut entries: Vec<_> = timeline
        .markers
        .iter()
        .filter(|m| m.status == MarkerStatus::Placeholder)
        .map(|m| ScheduleEntry {
            time: m.time,
            active_blocks: timeline
                .blocks
                .iter()
                .filter(|b| b.is_active_at(m.time))
                .map(|b| b.id.clone())
                .collect(),
            marker_id: m.id.clone(),
        })
        .collect();
    entries.sort_by(|a, b| a.time.total_cmp(&b.time));
    entries
}
