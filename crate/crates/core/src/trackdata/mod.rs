//! Domain data model: boxes, detections, tracks, scenes, labeled clips.
//!
//! Also hosts the clip file formats ([`format`]), stratified dataset
//! splitting ([`split`]) and the safety-field labeling rule ([`label`]).

pub mod format;
pub mod geometry;
pub mod label;
pub mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    parse_clip, parse_observation_row, parse_observations, serialize_manifest,
    serialize_observations, serialize_rows, ObservationRow, OBSERVATION_HEADER,
};
pub use label::{label_candidate, LabelOutcome};
pub use split::{split_dataset, DatasetSplit};

/// Minimum number of observations a labeled clip must carry.
pub const MIN_CLIP_OBSERVATIONS: usize = 15;

/// Length of the labeled action window.
pub const ACTION_WINDOW_MS: f64 = 2000.0;

/// Axis-aligned box in center format, image pixels (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.cx, self.cy, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::validation("bounding box has non-finite values"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::validation(format!(
                "bounding box must have positive size, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Clips the box to `[0, width] x [0, height]`, keeping center format.
    /// Returns `None` when nothing of the box is left inside the image.
    pub fn clamped_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let l = self.left().max(0.0);
        let r = self.right().min(width);
        let t = self.top().max(0.0);
        let b = self.bottom().min(height);
        if r <= l || b <= t {
            return None;
        }
        Some(BoundingBox {
            cx: (l + r) / 2.0,
            cy: (t + b) / 2.0,
            w: r - l,
            h: b - t,
        })
    }

    pub fn is_within(&self, width: f64, height: f64, tol: f64) -> bool {
        self.left() >= -tol
            && self.top() >= -tol
            && self.right() <= width + tol
            && self.bottom() <= height + tol
    }
}

/// One vehicle observation at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_idx: u64,
    pub timestamp_ms: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Time-ordered observations of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub target_id: u64,
    pub observations: Vec<Detection>,
}

impl Track {
    /// Builds a track after checking it is non-empty with strictly increasing
    /// frame indices and timestamps.
    pub fn new(target_id: u64, observations: Vec<Detection>) -> Result<Self> {
        let t = Track {
            target_id,
            observations,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::validation("track has no observations"));
        }
        for pair in self.observations.windows(2) {
            if pair[1].frame_idx <= pair[0].frame_idx {
                return Err(Error::validation(format!(
                    "non-monotonic frame index: {} follows {}",
                    pair[1].frame_idx, pair[0].frame_idx
                )));
            }
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(Error::validation(format!(
                    "non-monotonic timestamp at frame {}",
                    pair[1].frame_idx
                )));
            }
        }
        for obs in &self.observations {
            obs.bbox.validate()?;
            if !(0.0..=1.0).contains(&obs.confidence) {
                return Err(Error::validation(format!(
                    "confidence {} outside [0,1] at frame {}",
                    obs.confidence, obs.frame_idx
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Camera image geometry plus the labeling regions of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub image_width: f64,
    pub image_height: f64,
    pub fps: f64,
    /// Safety-field polygon, ordered vertices in pixels.
    pub safety_field: Vec<(f64, f64)>,
    /// Horizontal pixel extent of the ego lane, `(x_min, x_max)`.
    pub ego_lane_x_range: (f64, f64),
}

impl SceneMeta {
    /// Scene with the default safety field for the given lane range.
    pub fn new(width: f64, height: f64, fps: f64, ego_lane_x_range: (f64, f64)) -> Result<Self> {
        let scene = SceneMeta {
            image_width: width,
            image_height: height,
            fps,
            safety_field: default_safety_field(height, ego_lane_x_range),
            ego_lane_x_range,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::config(format!(
                "image dimensions must be positive, got {}x{}",
                self.image_width, self.image_height
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::config(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if self.safety_field.len() < 3 {
            return Err(Error::validation("safety field needs at least 3 vertices"));
        }
        for &(x, y) in &self.safety_field {
            if !(0.0..=self.image_width).contains(&x) || !(0.0..=self.image_height).contains(&y) {
                return Err(Error::validation(format!(
                    "safety field vertex ({x}, {y}) outside the image"
                )));
            }
        }
        let (lo, hi) = self.ego_lane_x_range;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::validation(format!(
                "ego lane range requires x_min < x_max, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.fps
    }
}

/// Default safety field: an isosceles trapezoid standing on the bottom image
/// edge between the ego-lane bounds, with its top edge at 55% of the image
/// height, centered on the lane midline and half as wide as the base.
pub fn default_safety_field(height: f64, lane: (f64, f64)) -> Vec<(f64, f64)> {
    let mid = (lane.0 + lane.1) / 2.0;
    let top_half = (lane.1 - lane.0) / 4.0;
    let top_y = height * 55.0 / 100.0;
    vec![
        (lane.0, height),
        (lane.1, height),
        (mid + top_half, top_y),
        (mid - top_half, top_y),
    ]
}

/// Maneuver labels across the three supported class sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ManeuverClass {
    CutIn,
    LanePass,
    LeftCutIn,
    RightCutIn,
    LeftLaneChange,
    RightLaneChange,
    NoLaneChange,
}

impl ManeuverClass {
    pub fn name(&self) -> &'static str {
        match self {
            ManeuverClass::CutIn => "CutIn",
            ManeuverClass::LanePass => "LanePass",
            ManeuverClass::LeftCutIn => "LeftCutIn",
            ManeuverClass::RightCutIn => "RightCutIn",
            ManeuverClass::LeftLaneChange => "LeftLaneChange",
            ManeuverClass::RightLaneChange => "RightLaneChange",
            ManeuverClass::NoLaneChange => "NoLaneChange",
        }
    }

    /// Maps sided cut-ins onto the plain two-class labels; identity otherwise.
    pub fn collapse_side(self) -> ManeuverClass {
        match self {
            ManeuverClass::LeftCutIn | ManeuverClass::RightCutIn => ManeuverClass::CutIn,
            other => other,
        }
    }
}

impl fmt::Display for ManeuverClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ManeuverClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "CutIn" => ManeuverClass::CutIn,
            "LanePass" => ManeuverClass::LanePass,
            "LeftCutIn" => ManeuverClass::LeftCutIn,
            "RightCutIn" => ManeuverClass::RightCutIn,
            "LeftLaneChange" => ManeuverClass::LeftLaneChange,
            "RightLaneChange" => ManeuverClass::RightLaneChange,
            "NoLaneChange" => ManeuverClass::NoLaneChange,
            other => {
                return Err(Error::validation(format!(
                    "unknown maneuver class {other:?}"
                )))
            }
        })
    }
}

/// Declared label vocabulary of a clip or model. Class indices follow
/// [`ClassSet::classes`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassSet {
    /// `{CutIn, LanePass}`
    CutInLanePass,
    /// `{LeftCutIn, RightCutIn, LanePass}`
    SidedCutIn,
    /// `{LeftLaneChange, RightLaneChange, NoLaneChange}`
    LaneChange,
}

impl ClassSet {
    pub fn classes(&self) -> &'static [ManeuverClass] {
        use ManeuverClass::*;
        match self {
            ClassSet::CutInLanePass => &[CutIn, LanePass],
            ClassSet::SidedCutIn => &[LeftCutIn, RightCutIn, LanePass],
            ClassSet::LaneChange => &[LeftLaneChange, RightLaneChange, NoLaneChange],
        }
    }

    pub fn len(&self) -> usize {
        self.classes().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, class: ManeuverClass) -> Option<usize> {
        self.classes().iter().position(|&c| c == class)
    }

    pub fn contains(&self, class: ManeuverClass) -> bool {
        self.index_of(class).is_some()
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassSet::CutInLanePass => "cutin-lanepass",
            ClassSet::SidedCutIn => "sided-cutin",
            ClassSet::LaneChange => "lane-change",
        }
    }

    /// Whether clips of this set cover the fixed two-second action window.
    pub fn is_action_window(&self) -> bool {
        !matches!(self, ClassSet::LaneChange)
    }
}

impl fmt::Display for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cutin-lanepass" => Ok(ClassSet::CutInLanePass),
            "sided-cutin" => Ok(ClassSet::SidedCutIn),
            "lane-change" => Ok(ClassSet::LaneChange),
            other => Err(Error::validation(format!("unknown class set {other:?}"))),
        }
    }
}

/// A target vehicle's track with its maneuver label and scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClip {
    pub clip_id: String,
    pub scene: SceneMeta,
    pub track: Track,
    pub class_set: ClassSet,
    pub label: ManeuverClass,
}

impl LabeledClip {
    pub fn new(
        clip_id: impl Into<String>,
        scene: SceneMeta,
        track: Track,
        class_set: ClassSet,
        label: ManeuverClass,
    ) -> Result<Self> {
        let clip = LabeledClip {
            clip_id: clip_id.into(),
            scene,
            track,
            class_set,
            label,
        };
        clip.validate()?;
        Ok(clip)
    }

    /// Span covered by the observations, counting the last frame's period.
    pub fn duration_ms(&self) -> u64 {
        let obs = &self.track.observations;
        let first = obs.first().map_or(0, |o| o.timestamp_ms);
        let last = obs.last().map_or(0, |o| o.timestamp_ms);
        last - first + self.scene.frame_period_ms().round() as u64
    }

    pub fn label_index(&self) -> usize {
        self.class_set
            .index_of(self.label)
            .expect("label validated against class set")
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_id.is_empty() || self.clip_id.chars().any(|c| c.is_whitespace() || c == ',') {
            return Err(Error::validation(format!(
                "invalid clip id {:?}",
                self.clip_id
            )));
        }
        self.scene.validate()?;
        if !self.class_set.contains(self.label) {
            return Err(Error::validation(format!(
                "label {} outside declared class set {}",
                self.label, self.class_set
            )));
        }
        self.track.validate()?;
        if self.track.len() < MIN_CLIP_OBSERVATIONS {
            return Err(Error::validation(format!(
                "fewer than {MIN_CLIP_OBSERVATIONS} observations ({})",
                self.track.len()
            )));
        }
        for obs in &self.track.observations {
            if !obs
                .bbox
                .is_within(self.scene.image_width, self.scene.image_height, 0.01)
            {
                return Err(Error::validation(format!(
                    "box at frame {} extends outside the {}x{} image",
                    obs.frame_idx, self.scene.image_width, self.scene.image_height
                )));
            }
        }
        if self.class_set.is_action_window() {
            let period = self.scene.frame_period_ms();
            let dur = self.duration_ms() as f64;
            // +1 absorbs millisecond rounding of the timestamps.
            if (dur - ACTION_WINDOW_MS).abs() > period + 1.0 {
                return Err(Error::validation(format!(
                    "clip covers {dur} ms, expected {ACTION_WINDOW_MS} ms within one frame period"
                )));
            }
        }
        Ok(())
    }
}

/// Timestamp of frame `k` at a fixed rate, rounded to whole milliseconds.
pub fn frame_timestamp_ms(frame_idx: u64, fps: f64) -> u64 {
    (frame_idx as f64 * 1000.0 / fps).round() as u64
}

/// Rounds a pixel value to the two fraction digits the file formats carry.
pub fn quantize_px(v: f64) -> f64 {
    format!("{v:.2}").parse().expect("formatted float parses")
}
