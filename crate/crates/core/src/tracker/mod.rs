//! SORT-style multi-object tracking: per-target constant-velocity Kalman
//! filters, Hungarian assignment on `1 − IoU`, and a tentative/confirmed/dead
//! lifecycle.
//!
//! A [`Tracker`] is a sequential fold over frames and must be driven from one
//! thread; separate instances are independent.

pub mod hungarian;
pub mod kalman;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trackdata::{BoundingBox, Detection, Track};

pub use hungarian::hungarian;
pub use kalman::{kalman_predict, kalman_update, KalmanState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Minimum IoU for an assignment to count as a match.
    pub iou_threshold: f64,
    /// Matched updates (birth included) before a track is confirmed.
    pub min_hits: u32,
    /// Consecutive misses tolerated; one more kills the track.
    pub max_age: u32,
    pub process_noise_scale: f64,
    pub measurement_noise_scale: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_threshold: 0.3,
            min_hits: 3,
            max_age: 5,
            process_noise_scale: 1.0,
            measurement_noise_scale: 1.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::config(format!(
                "tracker.iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.min_hits < 1 {
            return Err(Error::config("tracker.min_hits must be >= 1"));
        }
        if !(self.process_noise_scale > 0.0 && self.process_noise_scale.is_finite()) {
            return Err(Error::config(format!(
                "tracker.process_noise_scale must be > 0, got {}",
                self.process_noise_scale
            )));
        }
        if !(self.measurement_noise_scale > 0.0 && self.measurement_noise_scale.is_finite()) {
            return Err(Error::config(format!(
                "tracker.measurement_noise_scale must be > 0, got {}",
                self.measurement_noise_scale
            )));
        }
        Ok(())
    }
}

/// Intersection over union of two center-format boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackHypothesis {
    pub target_id: u64,
    pub state: KalmanState,
    /// Frames since creation.
    pub age: u32,
    /// Matched updates, birth included.
    pub hits: u32,
    /// Consecutive unmatched frames.
    pub misses: u32,
    pub status: TrackStatus,
    /// Corrected boxes at every matched frame.
    pub history: Vec<Detection>,
    last_measurement: BoundingBox,
    last_frame: u64,
}

impl TrackHypothesis {
    fn spawn(target_id: u64, det: &Detection, config: &TrackerConfig) -> Self {
        let state = KalmanState::from_measurement(&det.bbox, config);
        let status = if config.min_hits <= 1 {
            TrackStatus::Confirmed
        } else {
            TrackStatus::Tentative
        };
        TrackHypothesis {
            target_id,
            history: vec![Detection {
                bbox: state.bbox(),
                ..*det
            }],
            state,
            age: 0,
            hits: 1,
            misses: 0,
            status,
            last_measurement: det.bbox,
            last_frame: det.frame_idx,
        }
    }

    /// Box the filter expects at the current frame.
    pub fn predicted_box(&self) -> BoundingBox {
        self.state.bbox()
    }

    fn apply_match(&mut self, det: &Detection, config: &TrackerConfig) {
        if self.hits == 1 {
            // Second sighting: velocity from the two measurements.
            let gap = det.frame_idx.saturating_sub(self.last_frame);
            self.state =
                KalmanState::from_two_measurements(&self.last_measurement, &det.bbox, gap, config);
        } else {
            match kalman_update(&self.state, &det.bbox, config) {
                Ok(s) => self.state = s,
                Err(e) => log::warn!(
                    "track {}: dropped update at frame {}: {e}",
                    self.target_id,
                    det.frame_idx
                ),
            }
        }
        self.hits += 1;
        self.misses = 0;
        self.last_measurement = det.bbox;
        self.last_frame = det.frame_idx;
        if self.status == TrackStatus::Tentative && self.hits >= config.min_hits {
            self.status = TrackStatus::Confirmed;
        }
        self.history.push(Detection {
            bbox: self.state.bbox(),
            ..*det
        });
    }
}

/// Outcome of one association round. Indices refer to the inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Optimal assignment of detections to (already predicted) tracks on
/// `1 − IoU`, rejecting pairs whose IoU falls below the threshold.
pub fn associate(
    tracks: &[TrackHypothesis],
    detections: &[Detection],
    config: &TrackerConfig,
) -> Association {
    let boxes: Vec<BoundingBox> = tracks.iter().map(|t| t.predicted_box()).collect();
    associate_boxes(&boxes, detections, config.iou_threshold)
}

fn associate_boxes(
    predicted: &[BoundingBox],
    detections: &[Detection],
    threshold: f64,
) -> Association {
    let mut out = Association::default();
    if predicted.is_empty() || detections.is_empty() {
        out.unmatched_tracks = (0..predicted.len()).collect();
        out.unmatched_detections = (0..detections.len()).collect();
        return out;
    }
    let ious: Vec<Vec<f64>> = predicted
        .iter()
        .map(|p| detections.iter().map(|d| iou(p, &d.bbox)).collect())
        .collect();
    let cost: Vec<Vec<f64>> = ious
        .iter()
        .map(|r| r.iter().map(|v| 1.0 - v).collect())
        .collect();
    let pairs = hungarian(&cost).expect("IoU costs are finite");
    let mut track_used = vec![false; predicted.len()];
    let mut det_used = vec![false; detections.len()];
    for (t, d) in pairs {
        if ious[t][d] >= threshold {
            out.matches.push((t, d));
            track_used[t] = true;
            det_used[d] = true;
        }
    }
    out.unmatched_tracks = (0..predicted.len()).filter(|&i| !track_used[i]).collect();
    out.unmatched_detections = (0..detections.len()).filter(|&i| !det_used[i]).collect();
    out
}

/// Stateful tracker; feed frames in time order with [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    live: Vec<TrackHypothesis>,
    finished: Vec<TrackHypothesis>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Tracker {
            config,
            live: vec![],
            finished: vec![],
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live (tentative or confirmed) hypotheses after the last step.
    pub fn live(&self) -> &[TrackHypothesis] {
        &self.live
    }

    /// Processes one frame of detections.
    pub fn step(&mut self, detections: &[Detection]) {
        for t in &mut self.live {
            t.state = kalman_predict(&t.state, &self.config);
            t.age += 1;
        }
        let assoc = associate(&self.live, detections, &self.config);
        for &(t, d) in &assoc.matches {
            self.live[t].apply_match(&detections[d], &self.config);
        }
        for &t in &assoc.unmatched_tracks {
            let h = &mut self.live[t];
            h.misses += 1;
            if h.misses > self.config.max_age {
                h.status = TrackStatus::Dead;
            }
        }
        let (dead, live): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|t| t.status == TrackStatus::Dead);
        self.live = live;
        self.finished
            .extend(dead.into_iter().filter(|t| t.hits >= self.config.min_hits));
        for &d in &assoc.unmatched_detections {
            let id = self.next_id;
            self.next_id += 1;
            self.live
                .push(TrackHypothesis::spawn(id, &detections[d], &self.config));
        }
    }

    /// Ends the run and returns every track that was ever confirmed, ordered
    /// by target id, with Kalman-corrected boxes at each matched frame.
    pub fn finish(self) -> Vec<Track> {
        let mut all: Vec<TrackHypothesis> = self.finished;
        all.extend(
            self.live
                .into_iter()
                .filter(|t| t.status == TrackStatus::Confirmed),
        );
        all.sort_by_key(|t| t.target_id);
        all.into_iter()
            .map(|t| Track {
                target_id: t.target_id,
                observations: t.history,
            })
            .collect()
    }
}

/// Runs a fresh tracker over time-ordered frames of detections.
pub fn track_sequence(frames: &[Vec<Detection>], config: &TrackerConfig) -> Result<Vec<Track>> {
    let mut tracker = Tracker::new(config.clone())?;
    for frame in frames {
        tracker.step(frame);
    }
    Ok(tracker.finish())
}

/// Groups detection rows by frame index (ascending), filling gaps with empty
/// frames so that every frame between the first and last is present.
pub fn frames_from_rows(rows: impl IntoIterator<Item = Detection>) -> Vec<Vec<Detection>> {
    let mut rows: Vec<Detection> = rows.into_iter().collect();
    rows.sort_by_key(|d| d.frame_idx);
    let Some(first) = rows.first().map(|d| d.frame_idx) else {
        return vec![];
    };
    let last = rows.last().map(|d| d.frame_idx).unwrap();
    let mut frames = vec![Vec::new(); (last - first + 1) as usize];
    for d in rows {
        frames[(d.frame_idx - first) as usize].push(d);
    }
    frames
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trackdata::frame_timestamp_ms;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox { cx, cy, w, h }
    }

    fn det(k: u64, b: BoundingBox) -> Detection {
        Detection {
            frame_idx: k,
            timestamp_ms: frame_timestamp_ms(k, 30.0),
            bbox: b,
            confidence: 0.9,
        }
    }

    #[test]
    fn iou_examples() {
        let a = bx(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(10.0, 10.0, 2.0, 2.0)), 0.0);
        assert!((iou(&a, &bx(2.0, 1.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            a in (0.0f64..100.0, 0.0f64..100.0, 0.1f64..50.0, 0.1f64..50.0),
            b in (0.0f64..100.0, 0.0f64..100.0, 0.1f64..50.0, 0.1f64..50.0),
        ) {
            let a = bx(a.0, a.1, a.2, a.3);
            let b = bx(b.0, b.1, b.2, b.3);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }

    fn hyp(b: BoundingBox) -> TrackHypothesis {
        TrackHypothesis::spawn(1, &det(0, b), &TrackerConfig::default())
    }

    #[test]
    fn threshold_gate() {
        let c = TrackerConfig::default();
        let t = hyp(bx(50.0, 50.0, 20.0, 20.0));
        let a = associate(
            std::slice::from_ref(&t),
            &[det(1, bx(50.0, 50.0, 20.0, 20.0))],
            &c,
        );
        assert_eq!(a.matches, vec![(0, 0)]);
        // Shifted so that IoU is well under 0.3.
        let shifted = bx(66.0, 50.0, 20.0, 20.0);
        assert!(iou(&t.predicted_box(), &shifted) < 0.2);
        let a = associate(&[t], &[det(1, shifted)], &c);
        assert!(a.matches.is_empty());
        assert_eq!(
            (a.unmatched_tracks, a.unmatched_detections),
            (vec![0], vec![0])
        );
    }

    #[test]
    fn crossing_pair_maximizes_total_iou() {
        let c = TrackerConfig::default();
        let tracks = [
            hyp(bx(100.0, 100.0, 40.0, 40.0)),
            hyp(bx(125.0, 100.0, 40.0, 40.0)),
        ];
        let dets = [
            det(1, bx(128.0, 100.0, 40.0, 40.0)),
            det(1, bx(104.0, 100.0, 40.0, 40.0)),
        ];
        let a = associate(&tracks, &dets, &c);
        // Brute force over both pairings.
        let total = |p: [(usize, usize); 2]| -> f64 {
            p.iter()
                .map(|&(t, d)| iou(&tracks[t].predicted_box(), &dets[d].bbox))
                .sum()
        };
        let best = if total([(0, 0), (1, 1)]) >= total([(0, 1), (1, 0)]) {
            [(0, 0), (1, 1)]
        } else {
            [(0, 1), (1, 0)]
        };
        assert_eq!(a.matches, best.to_vec());
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn noiseless_linear_motion_is_exact() {
        let c = TrackerConfig::default();
        let truth = |k: u64| {
            bx(
                200.0 + 3.5 * k as f64,
                300.0 - 0.75 * k as f64,
                80.0 + 0.2 * k as f64,
                60.0 + 0.1 * k as f64,
            )
        };
        let frames: Vec<Vec<Detection>> = (0..60).map(|k| vec![det(k, truth(k))]).collect();
        let tracks = track_sequence(&frames, &c).unwrap();
        assert_eq!(tracks.len(), 1);
        assert!(tracks[0].len() >= 60 - (c.min_hits as usize - 1));
        for o in &tracks[0].observations {
            let t = truth(o.frame_idx);
            let err = [
                o.bbox.cx - t.cx,
                o.bbox.cy - t.cy,
                o.bbox.w - t.w,
                o.bbox.h - t.h,
            ]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-6, "frame {}: error {err}", o.frame_idx);
        }
    }

    #[test]
    fn long_gap_starts_new_identity() {
        let c = TrackerConfig::default();
        let b = bx(400.0, 300.0, 60.0, 40.0);
        let gap = c.max_age as u64 + 1;
        let frames: Vec<Vec<Detection>> = (0..30)
            .map(|k| {
                if (10..10 + gap).contains(&k) {
                    vec![]
                } else {
                    vec![det(k, b)]
                }
            })
            .collect();
        let tracks = track_sequence(&frames, &c).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks[0].target_id < tracks[1].target_id);
        assert_eq!(tracks[0].observations.last().unwrap().frame_idx, 9);
        assert_eq!(tracks[1].observations[0].frame_idx, 10 + gap);
    }

    #[test]
    fn short_gap_keeps_identity() {
        let c = TrackerConfig::default();
        let b = bx(400.0, 300.0, 60.0, 40.0);
        let frames: Vec<Vec<Detection>> = (0..30)
            .map(|k| {
                if (10..15).contains(&k) {
                    vec![]
                } else {
                    vec![det(k, b)]
                }
            })
            .collect();
        let tracks = track_sequence(&frames, &c).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 25);
    }

    #[test]
    fn unconfirmed_blips_are_dropped() {
        let c = TrackerConfig::default();
        let frames = vec![
            vec![det(0, bx(10.0, 10.0, 5.0, 5.0))],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
            vec![],
        ];
        assert!(track_sequence(&frames, &c).unwrap().is_empty());
    }

    #[test]
    fn ids_are_never_reused() {
        let c = TrackerConfig {
            max_age: 0,
            ..TrackerConfig::default()
        };
        let frames: Vec<Vec<Detection>> = (0..40)
            .map(|k| {
                if k % 5 == 4 {
                    vec![]
                } else {
                    vec![det(k, bx(300.0, 300.0, 50.0, 50.0))]
                }
            })
            .collect();
        let tracks = track_sequence(&frames, &c).unwrap();
        let mut ids: Vec<u64> = tracks.iter().map(|t| t.target_id).collect();
        let n = ids.len();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert_eq!(n, 8);
    }

    #[test]
    fn frames_from_rows_fills_gaps() {
        let b = bx(1.0, 1.0, 1.0, 1.0);
        let frames = frames_from_rows([det(5, b), det(3, b), det(5, b)]);
        assert_eq!(
            frames.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![1, 0, 2]
        );
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(Tracker::new(TrackerConfig {
            iou_threshold: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(Tracker::new(TrackerConfig {
            min_hits: 0,
            ..Default::default()
        })
        .is_err());
        assert!(Tracker::new(TrackerConfig {
            process_noise_scale: -1.0,
            ..Default::default()
        })
        .is_err());
    }
}
