//! Track → fixed-length normalized feature sequence.
//!
//! A feature row is `(cx/W, cy/H, w/W, h/H)` clamped to `[0, 1]`. Tracks are
//! brought to the model's sequence length by uniform index resampling, and a
//! live stream is cut into non-overlapping two-second windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trackdata::{BoundingBox, Detection, SceneMeta, Track, ACTION_WINDOW_MS};

/// Sequence lengths the experiments sweep over.
pub const SEQUENCE_LENGTHS: [usize; 4] = [15, 30, 45, 60];

/// Number of feature columns per time step.
pub const FEATURES: usize = 4;

/// Time-ordered rows of normalized `(cx, cy, w, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub clip_id: String,
    pub values: Vec<[f64; FEATURES]>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which side of the ego vehicle a target starts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Left => "Left",
            Side::Right => "Right",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Indices kept when resampling `n` observations down to `l`:
/// `round(i·(n−1)/(l−1))`, halves rounded up. Endpoints are always kept.
pub fn resample_indices(n: usize, l: usize) -> Result<Vec<usize>> {
    if l < 2 {
        return Err(Error::input(format!(
            "sequence length must be >= 2, got {l}"
        )));
    }
    if n < l {
        return Err(Error::input(format!(
            "sequence too short: {n} observations for length {l}"
        )));
    }
    let (num, den) = (n - 1, l - 1);
    // floor((2·i·num + den) / (2·den)) == round-half-up(i·num/den), exactly.
    Ok((0..l).map(|i| (2 * i * num + den) / (2 * den)).collect())
}

pub fn resample(track: &Track, l: usize) -> Result<Track> {
    let idx = resample_indices(track.len(), l)?;
    Ok(Track {
        target_id: track.target_id,
        observations: idx.into_iter().map(|i| track.observations[i]).collect(),
    })
}

fn check_dims(scene: &SceneMeta) -> Result<()> {
    if !(scene.image_width > 0.0 && scene.image_height > 0.0) {
        return Err(Error::config(format!(
            "image dimensions must be positive, got {}x{}",
            scene.image_width, scene.image_height
        )));
    }
    Ok(())
}

pub fn normalize_box(b: &BoundingBox, scene: &SceneMeta) -> [f64; FEATURES] {
    let (w, h) = (scene.image_width, scene.image_height);
    [b.cx / w, b.cy / h, b.w / w, b.h / h].map(|v| v.clamp(0.0, 1.0))
}

/// Divides every box by the image dimensions and clamps to `[0, 1]`.
pub fn normalize(track: &Track, scene: &SceneMeta, clip_id: &str) -> Result<FeatureSequence> {
    check_dims(scene)?;
    Ok(FeatureSequence {
        clip_id: clip_id.to_string(),
        values: track
            .observations
            .iter()
            .map(|o| normalize_box(&o.bbox, scene))
            .collect(),
    })
}

/// Inverse of [`normalize_box`] for in-bounds boxes.
pub fn denormalize(row: &[f64; FEATURES], scene: &SceneMeta) -> BoundingBox {
    BoundingBox {
        cx: row[0] * scene.image_width,
        cy: row[1] * scene.image_height,
        w: row[2] * scene.image_width,
        h: row[3] * scene.image_height,
    }
}

/// Resample then normalize.
pub fn featurize(
    track: &Track,
    scene: &SceneMeta,
    l: usize,
    clip_id: &str,
) -> Result<FeatureSequence> {
    normalize(&resample(track, l)?, scene, clip_id)
}

/// Left when the mean center x over the first quarter of the track (at least
/// one observation) lies left of the image midline; a tie goes Right.
pub fn side_of(track: &Track, scene: &SceneMeta) -> Side {
    let n = (track.len() / 4).max(1).min(track.len());
    let mean = track.observations[..n]
        .iter()
        .map(|o| o.bbox.cx)
        .sum::<f64>()
        / n as f64;
    if mean < scene.image_width / 2.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Raw frames per two-second window at `fps`.
pub fn window_frames(fps: f64) -> usize {
    (ACTION_WINDOW_MS / 1000.0 * fps).round() as usize
}

/// One completed streaming window.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamWindow {
    pub first_frame: u64,
    pub last_frame: u64,
    /// The raw window (all frames, before resampling).
    pub track: Track,
    pub features: FeatureSequence,
}

/// Cuts a single-target detection stream into non-overlapping two-second
/// windows, each resampled to `l` rows. Holds at most one window in memory;
/// a trailing partial window is never emitted.
#[derive(Debug, Clone)]
pub struct StreamWindower {
    scene: SceneMeta,
    window: usize,
    length: usize,
    target_id: u64,
    buf: Vec<Detection>,
    last_frame: Option<u64>,
    emitted: usize,
}

impl StreamWindower {
    pub fn new(scene: SceneMeta, length: usize) -> Result<Self> {
        check_dims(&scene)?;
        if scene.fps.is_nan() || scene.fps <= 0.0 {
            return Err(Error::config(format!(
                "fps must be positive, got {}",
                scene.fps
            )));
        }
        let window = window_frames(scene.fps);
        if length < 2 || window < length {
            return Err(Error::config(format!(
                "a {window}-frame window cannot be resampled to length {length}"
            )));
        }
        Ok(StreamWindower {
            scene,
            window,
            length,
            target_id: 0,
            buf: Vec::with_capacity(window),
            last_frame: None,
            emitted: 0,
        })
    }

    pub fn window_size(&self) -> usize {
        self.window
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Buffered frames of the current, incomplete window.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, target_id: u64, det: Detection) -> Result<Option<StreamWindow>> {
        if let Some(last) = self.last_frame {
            if det.frame_idx <= last {
                return Err(Error::input(format!(
                    "non-monotonic frame index in stream: {} after {last}",
                    det.frame_idx
                )));
            }
        }
        self.last_frame = Some(det.frame_idx);
        if self.buf.is_empty() {
            self.target_id = target_id;
        }
        self.buf.push(det);
        if self.buf.len() < self.window {
            return Ok(None);
        }
        let observations = std::mem::replace(&mut self.buf, Vec::with_capacity(self.window));
        let track = Track {
            target_id: self.target_id,
            observations,
        };
        let first_frame = track.observations[0].frame_idx;
        let last_frame = track.observations[self.window - 1].frame_idx;
        let clip_id = format!("window-{first_frame}-{last_frame}");
        let features = featurize(&track, &self.scene, self.length, &clip_id)?;
        self.emitted += 1;
        Ok(Some(StreamWindow {
            first_frame,
            last_frame,
            track,
            features,
        }))
    }
}

/// Batch form of [`StreamWindower`].
pub fn window_stream(
    detections: impl IntoIterator<Item = Detection>,
    scene: &SceneMeta,
    l: usize,
) -> Result<Vec<StreamWindow>> {
    let mut w = StreamWindower::new(scene.clone(), l)?;
    let mut out = vec![];
    for d in detections {
        if let Some(win) = w.push(0, d)? {
            out.push(win);
        }
    }
    Ok(out)
}
