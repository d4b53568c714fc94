//! Synthetic labeled clips from a pinhole camera and simple lateral motion.
//!
//! The target drives ahead of the ego camera at depth `z` (meters) with
//! lateral offset `x` (meters, positive right). Its box is
//! `cx = c_x + f·x/z`, `w = f·W/z`, `h = f·H/z`, resting on the road plane
//! `camera_height` below the camera. Cut-ins move laterally along a logistic
//! profile into the ego lane; lane-passes keep a constant offset in the
//! neighboring lane. Every clip is labeled by the safety-field rule before
//! noise is added and must agree with the requested class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Side;
use crate::lstm::sigmoid;
use crate::trackdata::{
    frame_timestamp_ms, label_candidate, quantize_px, BoundingBox, ClassSet, Detection,
    LabeledClip, ManeuverClass, SceneMeta, Track,
};

/// Retries after the first attempt before giving up on a clip.
pub const MAX_RETRIES: usize = 10;
/// Target id written for generated target tracks.
pub const TARGET_ID: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Camera {
    pub focal_px: f64,
    pub camera_height_m: f64,
    pub vehicle_width_m: f64,
    pub vehicle_height_m: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            focal_px: 1000.0,
            camera_height_m: 1.3,
            vehicle_width_m: 1.8,
            vehicle_height_m: 1.5,
        }
    }
}

impl Camera {
    /// Box of a vehicle at lateral offset `x` and depth `z`; principal point
    /// at the image center.
    pub fn project(&self, scene: &SceneMeta, x: f64, z: f64) -> BoundingBox {
        let f = self.focal_px;
        let h = f * self.vehicle_height_m / z;
        let bottom = scene.image_height / 2.0 + f * self.camera_height_m / z;
        BoundingBox {
            cx: scene.image_width / 2.0 + f * x / z,
            cy: bottom - h / 2.0,
            w: f * self.vehicle_width_m / z,
            h,
        }
    }
}

/// Concrete parameters of one clip. Lateral offsets are magnitudes; the side
/// decides the sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub scene: SceneMeta,
    pub camera: Camera,
    pub clip_seconds: f64,
    /// Depth at the first and last frame, meters; interpolated linearly.
    pub depth_m: (f64, f64),
    pub lateral_start_m: f64,
    /// Final offset of a cut-in; lane-passes stay at `lateral_start_m`.
    pub lateral_end_m: f64,
    /// Time of the logistic transition midpoint, seconds from clip start.
    pub midpoint_s: f64,
    /// Logistic steepness, 1/s.
    pub steepness: f64,
    /// Gaussian pixel noise on all four box values.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Class set written into clip manifests.
    pub class_set: ClassSet,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            scene: default_scene(),
            camera: Camera::default(),
            clip_seconds: 2.0,
            depth_m: (13.0, 11.0),
            lateral_start_m: 3.0,
            lateral_end_m: 0.1,
            midpoint_s: 0.9,
            steepness: 5.5,
            noise_sigma: 1.0,
            seed: 0,
            class_set: ClassSet::CutInLanePass,
        }
    }
}

/// 1280 x 720 at 30 fps, ego lane 500..780 px, default safety field.
pub fn default_scene() -> SceneMeta {
    SceneMeta::new(1280.0, 720.0, 30.0, (500.0, 780.0)).expect("default scene is valid")
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        let c = &self.camera;
        for (name, v) in [
            ("focal_px", c.focal_px),
            ("camera_height_m", c.camera_height_m),
            ("vehicle_width_m", c.vehicle_width_m),
            ("vehicle_height_m", c.vehicle_height_m),
            ("clip_seconds", self.clip_seconds),
            ("depth_m[0]", self.depth_m.0),
            ("depth_m[1]", self.depth_m.1),
            ("steepness", self.steepness),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.lateral_start_m.is_finite()
            && self.lateral_end_m.is_finite()
            && self.midpoint_s.is_finite())
        {
            return Err(Error::config("lateral offsets and midpoint must be finite"));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.clip_seconds * self.scene.fps).round() as usize
    }

    /// Lateral offset at time `t` for the given class and side.
    pub fn lateral_at(&self, class: ManeuverClass, side: Side, t: f64) -> f64 {
        let sign = match side {
            Side::Left => -1.0,
            Side::Right => 1.0,
        };
        let x = match class.collapse_side() {
            ManeuverClass::CutIn => {
                let s = sigmoid(self.steepness * (t - self.midpoint_s));
                self.lateral_end_m + (self.lateral_start_m - self.lateral_end_m) * (1.0 - s)
            }
            _ => self.lateral_start_m,
        };
        sign * x
    }

    /// Noiseless boxes, quantized to the file precision.
    pub fn noiseless_boxes(&self, class: ManeuverClass, side: Side) -> Vec<BoundingBox> {
        let n = self.frame_count();
        (0..n)
            .map(|k| {
                let t = k as f64 / self.scene.fps;
                let a = if n > 1 {
                    k as f64 / (n - 1) as f64
                } else {
                    0.0
                };
                let z = self.depth_m.0 + (self.depth_m.1 - self.depth_m.0) * a;
                let b = self
                    .camera
                    .project(&self.scene, self.lateral_at(class, side, t), z);
                quantize_box(&b)
            })
            .collect()
    }
}

fn quantize_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        cx: quantize_px(b.cx),
        cy: quantize_px(b.cy),
        w: quantize_px(b.w),
        h: quantize_px(b.h),
    }
}

fn track_of(boxes: &[BoundingBox], fps: f64, target_id: u64) -> Result<Track> {
    let observations = boxes
        .iter()
        .enumerate()
        .map(|(k, b)| Detection {
            frame_idx: k as u64,
            timestamp_ms: frame_timestamp_ms(k as u64, fps),
            bbox: *b,
            confidence: 1.0,
        })
        .collect();
    Track::new(target_id, observations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Ok,
    OutOfImage,
    MissesField,
    WrongClass,
}

fn verify(boxes: &[BoundingBox], gp: &GenParams, want: ManeuverClass) -> Verdict {
    let (w, h) = (gp.scene.image_width, gp.scene.image_height);
    if boxes.iter().any(|b| !b.is_within(w, h, 0.0)) {
        return Verdict::OutOfImage;
    }
    let Ok(track) = track_of(boxes, gp.scene.fps, TARGET_ID) else {
        return Verdict::OutOfImage;
    };
    match label_candidate(&track, &gp.scene) {
        Err(_) => Verdict::MissesField,
        Ok(o) if o.class != want.collapse_side() => Verdict::WrongClass,
        Ok(_) if want.collapse_side() == ManeuverClass::CutIn => {
            // The clip must also end with the whole box in the lane.
            let last = boxes.last().expect("non-empty");
            if crate::trackdata::label::fully_inside_lane(last, gp.scene.ego_lane_x_range) {
                Verdict::Ok
            } else {
                Verdict::WrongClass
            }
        }
        Ok(_) => Verdict::Ok,
    }
}

/// Moves the parameters towards satisfying the requested class.
fn adjust(gp: &mut GenParams, class: ManeuverClass, verdict: Verdict) {
    match (class.collapse_side(), verdict) {
        (ManeuverClass::CutIn, Verdict::OutOfImage) => gp.lateral_start_m *= 0.85,
        (ManeuverClass::CutIn, _) => {
            gp.steepness *= 1.25;
            gp.midpoint_s = (gp.midpoint_s - 0.1).max(0.2);
            gp.lateral_end_m *= 0.5;
        }
        (_, Verdict::OutOfImage) | (_, Verdict::MissesField) => gp.lateral_start_m -= 0.1,
        _ => gp.lateral_start_m += 0.1,
    }
}

fn class_and_label(
    class: ManeuverClass,
    side: Side,
    set: ClassSet,
) -> Result<(ClassSet, ManeuverClass)> {
    let sided = match (class, side) {
        (ManeuverClass::LeftCutIn, Side::Right) | (ManeuverClass::RightCutIn, Side::Left) => {
            return Err(Error::config(format!(
                "class {class} contradicts side {side}"
            )));
        }
        (ManeuverClass::LeftCutIn | ManeuverClass::RightCutIn, _) => {
            return Ok((ClassSet::SidedCutIn, class))
        }
        (ManeuverClass::CutIn, Side::Left) => ManeuverClass::LeftCutIn,
        (ManeuverClass::CutIn, Side::Right) => ManeuverClass::RightCutIn,
        (ManeuverClass::LanePass, _) => ManeuverClass::LanePass,
        _ => return Err(Error::config(format!("cannot generate class {class}"))),
    };
    match set {
        ClassSet::SidedCutIn => Ok((set, sided)),
        ClassSet::CutInLanePass => Ok((set, class)),
        ClassSet::LaneChange => Err(Error::config("cannot generate lane-change clips")),
    }
}

/// Generates one clip. The noiseless track is labeled with the safety-field
/// rule; on disagreement the motion is adjusted and retried up to
/// [`MAX_RETRIES`] times.
pub fn generate_clip(
    clip_id: &str,
    class: ManeuverClass,
    side: Side,
    gp: &GenParams,
) -> Result<LabeledClip> {
    gp.validate()?;
    let (set, label) = class_and_label(class, side, gp.class_set)?;
    let mut params = gp.clone();
    let mut boxes = params.noiseless_boxes(class, side);
    let mut verdict = verify(&boxes, &params, class);
    let mut retries = 0;
    while verdict != Verdict::Ok {
        if retries == MAX_RETRIES {
            return Err(Error::Generation(format!(
                "clip {clip_id}: could not produce a {class} track after {MAX_RETRIES} retries ({verdict:?})"
            )));
        }
        adjust(&mut params, class, verdict);
        boxes = params.noiseless_boxes(class, side);
        verdict = verify(&boxes, &params, class);
        retries += 1;
    }
    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let noise =
            Normal::new(0.0, params.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
        let (w, h) = (params.scene.image_width, params.scene.image_height);
        for b in boxes.iter_mut() {
            let noisy = BoundingBox {
                cx: b.cx + noise.sample(&mut rng),
                cy: b.cy + noise.sample(&mut rng),
                w: (b.w + noise.sample(&mut rng)).max(1.0),
                h: (b.h + noise.sample(&mut rng)).max(1.0),
            };
            if let Some(c) = noisy.clamped_to(w, h) {
                *b = quantize_box(&c);
            }
        }
    }
    let track = track_of(&boxes, params.scene.fps, TARGET_ID)?;
    LabeledClip::new(clip_id, params.scene.clone(), track, set, label)
}

/// Ranges that [`generate_dataset`] draws per-clip parameters from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterRanges {
    pub cutin_end_depth_m: (f64, f64),
    /// Extra depth at the first frame over the last one.
    pub cutin_approach_m: (f64, f64),
    pub cutin_start_offset_m: (f64, f64),
    pub cutin_end_offset_m: (f64, f64),
    pub cutin_midpoint_s: (f64, f64),
    pub cutin_steepness: (f64, f64),
    pub lanepass_offset_m: (f64, f64),
    pub lanepass_depth_m: (f64, f64),
    /// Depth change over a lane-pass clip, signed.
    pub lanepass_depth_change_m: (f64, f64),
}

impl Default for JitterRanges {
    fn default() -> Self {
        JitterRanges {
            cutin_end_depth_m: (9.0, 13.0),
            cutin_approach_m: (0.0, 4.0),
            cutin_start_offset_m: (2.6, 3.4),
            cutin_end_offset_m: (0.0, 0.3),
            cutin_midpoint_s: (0.7, 1.1),
            cutin_steepness: (4.0, 7.0),
            lanepass_offset_m: (1.2, 1.7),
            lanepass_depth_m: (8.0, 14.0),
            lanepass_depth_change_m: (-2.0, 2.0),
        }
    }
}

impl JitterRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("cutin_end_depth_m", self.cutin_end_depth_m),
            ("cutin_approach_m", self.cutin_approach_m),
            ("cutin_start_offset_m", self.cutin_start_offset_m),
            ("cutin_end_offset_m", self.cutin_end_offset_m),
            ("cutin_midpoint_s", self.cutin_midpoint_s),
            ("cutin_steepness", self.cutin_steepness),
            ("lanepass_offset_m", self.lanepass_offset_m),
            ("lanepass_depth_m", self.lanepass_depth_m),
            ("lanepass_depth_change_m", self.lanepass_depth_change_m),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!(
                    "{name} must be a finite range with lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.cutin_end_depth_m.0 <= 0.0
            || self.lanepass_depth_m.0 + self.lanepass_depth_change_m.0.min(0.0) <= 0.0
        {
            return Err(Error::config("depth ranges must stay positive"));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Parameters for clip `index` of a dataset, drawn from the clip's own
/// random stream so clips can be generated independently.
pub fn clip_params(
    base: &GenParams,
    ranges: &JitterRanges,
    class: ManeuverClass,
    index: u64,
) -> GenParams {
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    rng.set_stream(index + 1);
    let mut gp = base.clone();
    if class.collapse_side() == ManeuverClass::CutIn {
        let end = draw(&mut rng, ranges.cutin_end_depth_m);
        gp.depth_m = (end + draw(&mut rng, ranges.cutin_approach_m), end);
        gp.lateral_start_m = draw(&mut rng, ranges.cutin_start_offset_m);
        gp.lateral_end_m = draw(&mut rng, ranges.cutin_end_offset_m);
        gp.midpoint_s = draw(&mut rng, ranges.cutin_midpoint_s);
        gp.steepness = draw(&mut rng, ranges.cutin_steepness);
    } else {
        let z0 = draw(&mut rng, ranges.lanepass_depth_m);
        gp.depth_m = (z0, z0 + draw(&mut rng, ranges.lanepass_depth_change_m));
        gp.lateral_start_m = draw(&mut rng, ranges.lanepass_offset_m);
    }
    gp.seed = rng.random();
    gp
}

/// Classes generated for a class set, each paired with the sides it occurs on.
fn plan(set: ClassSet) -> Result<Vec<(ManeuverClass, Side)>> {
    use ManeuverClass::*;
    match set {
        ClassSet::CutInLanePass => Ok(vec![
            (CutIn, Side::Left),
            (CutIn, Side::Right),
            (LanePass, Side::Left),
            (LanePass, Side::Right),
        ]),
        ClassSet::SidedCutIn => Ok(vec![
            (LeftCutIn, Side::Left),
            (RightCutIn, Side::Right),
            (LanePass, Side::Left),
            (LanePass, Side::Right),
        ]),
        ClassSet::LaneChange => Err(Error::config("cannot generate lane-change datasets")),
    }
}

/// `n` clips for every (class, side) pair of `base.class_set`, in the order
/// cut-in left, cut-in right, lane-pass left, lane-pass right. Clip ids are
/// `clip_00000`, `clip_00001`, ...
pub fn generate_dataset(
    n: usize,
    base: &GenParams,
    ranges: &JitterRanges,
) -> Result<Vec<LabeledClip>> {
    if n == 0 {
        return Err(Error::config("clips per class and side must be >= 1"));
    }
    base.validate()?;
    ranges.validate()?;
    let mut out = Vec::with_capacity(4 * n);
    for (class, side) in plan(base.class_set)? {
        for _ in 0..n {
            let index = out.len() as u64;
            let gp = clip_params(base, ranges, class, index);
            let clip = generate_clip(&format!("clip_{index:05}"), class, side, &gp)
                .map_err(|e| Error::Generation(format!("clip index {index}: {e}")))?;
            out.push(clip);
        }
    }
    Ok(out)
}

/// Per-frame detections for a clip: the target (id 1) plus `distractors`
/// slow vehicles in far lanes on the opposite side, ids 2 onwards.
/// Rows are ordered by frame, then id.
pub fn clip_detections(
    clip: &LabeledClip,
    distractors: usize,
    camera: &Camera,
    seed: u64,
) -> Result<Vec<(u64, Detection)>> {
    let scene = &clip.scene;
    let target_side = crate::features::side_of(&clip.track, scene);
    let sign = match target_side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let others: Vec<(f64, f64, f64)> = (0..distractors)
        .map(|i| {
            // Spread distractors over separate lanes so they never overlap.
            let x = sign * (5.0 + 3.5 * i as f64 + rng.random_range(0.0..1.0));
            let z0 = rng.random_range(20.0..30.0);
            (x, z0, rng.random_range(-1.0..1.0))
        })
        .collect();
    let n = clip.track.len();
    let mut rows = Vec::with_capacity(n * (1 + distractors));
    for (k, obs) in clip.track.observations.iter().enumerate() {
        rows.push((TARGET_ID, *obs));
        let a = if n > 1 {
            k as f64 / (n - 1) as f64
        } else {
            0.0
        };
        for (i, &(x, z0, dz)) in others.iter().enumerate() {
            let b = camera.project(scene, x, z0 + dz * a);
            let Some(b) = b.clamped_to(scene.image_width, scene.image_height) else {
                continue;
            };
            rows.push((
                2 + i as u64,
                Detection {
                    bbox: quantize_box(&b),
                    confidence: 0.9,
                    ..*obs
                },
            ));
        }
    }
    Ok(rows)
}
