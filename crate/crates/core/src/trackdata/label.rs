//! Safety-field labeling rule for cut-in / lane-pass candidates.

use super::geometry::box_intersects_polygon;
use super::{BoundingBox, ManeuverClass, SceneMeta, Track};
use crate::error::{Error, Result};

/// Result of labeling a candidate track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelOutcome {
    /// `CutIn` or `LanePass`.
    pub class: ManeuverClass,
    /// First frame whose box touches the safety field.
    pub entry_frame: u64,
    /// First frame at or after entry with the whole box width inside the
    /// ego lane; present for cut-ins only.
    pub full_body_frame: Option<u64>,
}

/// Horizontal extent of the box lies inside the closed ego-lane range.
pub fn fully_inside_lane(b: &BoundingBox, lane: (f64, f64)) -> bool {
    b.left() >= lane.0 && b.right() <= lane.1
}

/// Labels a track: cut-in when it enters the safety field and afterwards has
/// its full body (horizontally) inside the ego lane; lane-pass when it
/// touches the field but never gets fully inside.
pub fn label_candidate(track: &Track, scene: &SceneMeta) -> Result<LabelOutcome> {
    if track.is_empty() {
        return Err(Error::input("cannot label an empty track"));
    }
    let obs = &track.observations;
    let Some(entry) = obs
        .iter()
        .position(|o| box_intersects_polygon(&o.bbox, &scene.safety_field))
    else {
        return Err(Error::Label("no maneuver in safety field".into()));
    };
    let full = obs[entry..]
        .iter()
        .find(|o| fully_inside_lane(&o.bbox, scene.ego_lane_x_range))
        .map(|o| o.frame_idx);
    Ok(LabelOutcome {
        class: if full.is_some() {
            ManeuverClass::CutIn
        } else {
            ManeuverClass::LanePass
        },
        entry_frame: obs[entry].frame_idx,
        full_body_frame: full,
    })
}
