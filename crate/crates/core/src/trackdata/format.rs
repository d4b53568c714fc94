//! Clip storage: a key/value manifest (TOML) plus a comma-separated
//! observation table.
//!
//! Observation table header, fixed column order:
//!
//! ```text
//! frame_idx,timestamp_ms,target_id,cx,cy,w,h,confidence
//! ```
//!
//! Pixel columns are written with two fraction digits. The same table format
//! carries multi-target per-frame detection files and track outputs.

use serde::{Deserialize, Serialize};

use super::{BoundingBox, ClassSet, Detection, LabeledClip, ManeuverClass, SceneMeta, Track};
use crate::error::{Error, Result};

pub const OBSERVATION_HEADER: &str = "frame_idx,timestamp_ms,target_id,cx,cy,w,h,confidence";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    clip_id: String,
    image_width: f64,
    image_height: f64,
    fps: f64,
    class_set: String,
    label: String,
    ego_lane_x_range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    safety_field: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
struct Row {
    frame_idx: u64,
    timestamp_ms: u64,
    target_id: u64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    confidence: f64,
}

/// One parsed table row: the target id column plus the observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRow {
    pub target_id: u64,
    pub detection: Detection,
    /// 1-based line number in the source text.
    pub line: u64,
}

fn line_of(text: &str, offset: usize) -> u64 {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count() as u64
        + 1
}

/// Parses a manifest and its observation table into a validated clip.
pub fn parse_clip(manifest: &str, observations: &str) -> Result<LabeledClip> {
    let m: Manifest = toml::from_str(manifest).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| line_of(manifest, s.start)),
        msg: format!("manifest: {}", e.message()),
    })?;
    let class_set: ClassSet = m.class_set.parse()?;
    let label: ManeuverClass = m.label.parse()?;
    let lane = (m.ego_lane_x_range[0], m.ego_lane_x_range[1]);
    let safety_field = match m.safety_field {
        Some(v) => v.into_iter().map(|[x, y]| (x, y)).collect(),
        None => super::default_safety_field(m.image_height, lane),
    };
    let scene = SceneMeta {
        image_width: m.image_width,
        image_height: m.image_height,
        fps: m.fps,
        safety_field,
        ego_lane_x_range: lane,
    };

    let rows = parse_observations(observations)?;
    let Some(first) = rows.first() else {
        return Err(Error::validation("observation table has no rows"));
    };
    let target_id = first.target_id;
    if let Some(other) = rows.iter().find(|r| r.target_id != target_id) {
        return Err(Error::validation(format!(
            "line {}: clip mixes target ids {} and {}",
            other.line, target_id, other.target_id
        )));
    }
    for pair in rows.windows(2) {
        if pair[1].detection.frame_idx <= pair[0].detection.frame_idx {
            return Err(Error::validation(format!(
                "line {}: non-monotonic frame index ({} after {})",
                pair[1].line, pair[1].detection.frame_idx, pair[0].detection.frame_idx
            )));
        }
    }
    let track = Track {
        target_id,
        observations: rows.into_iter().map(|r| r.detection).collect(),
    };
    LabeledClip::new(m.clip_id, scene, track, class_set, label)
}

/// Parses an observation table. Rows may belong to several targets; no
/// ordering is enforced here.
pub fn parse_observations(text: &str) -> Result<Vec<ObservationRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != OBSERVATION_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {OBSERVATION_HEADER:?}, got {header:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let row = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        // csv positions point at the record just read.
        let line = out.len() as u64 + 2;
        let bbox = BoundingBox {
            cx: row.cx,
            cy: row.cy,
            w: row.w,
            h: row.h,
        };
        bbox.validate().map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&row.confidence) {
            return Err(Error::Parse {
                line,
                msg: format!("confidence {} outside [0,1]", row.confidence),
            });
        }
        out.push(ObservationRow {
            target_id: row.target_id,
            detection: Detection {
                frame_idx: row.frame_idx,
                timestamp_ms: row.timestamp_ms,
                bbox,
                confidence: row.confidence,
            },
            line,
        });
    }
    Ok(out)
}

/// Parses a single data row of the observation table, for line-at-a-time
/// readers. `line` is only used in error messages.
pub fn parse_observation_row(text: &str, line: u64) -> Result<ObservationRow> {
    let err = |msg: String| Error::Parse { line, msg };
    let fields: Vec<&str> = text.trim().split(',').map(str::trim).collect();
    if fields.len() != 8 {
        return Err(err(format!("expected 8 columns, found {}", fields.len())));
    }
    let int = |i: usize| {
        fields[i]
            .parse::<u64>()
            .map_err(|e| err(format!("column {}: {e}", i + 1)))
    };
    let real = |i: usize| {
        fields[i]
            .parse::<f64>()
            .map_err(|e| err(format!("column {}: {e}", i + 1)))
    };
    let bbox = BoundingBox {
        cx: real(3)?,
        cy: real(4)?,
        w: real(5)?,
        h: real(6)?,
    };
    bbox.validate().map_err(|e| err(e.to_string()))?;
    let confidence = real(7)?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(err(format!("confidence {confidence} outside [0,1]")));
    }
    Ok(ObservationRow {
        target_id: int(2)?,
        detection: Detection {
            frame_idx: int(0)?,
            timestamp_ms: int(1)?,
            bbox,
            confidence,
        },
        line,
    })
}

/// Writes one observation row (no trailing newline).
pub fn format_observation_row(target_id: u64, d: &Detection) -> String {
    format!(
        "{},{},{},{:.2},{:.2},{:.2},{:.2},{}",
        d.frame_idx,
        d.timestamp_ms,
        target_id,
        d.bbox.cx,
        d.bbox.cy,
        d.bbox.w,
        d.bbox.h,
        d.confidence
    )
}

/// Writes rows of possibly several targets, header included.
pub fn serialize_rows<'a>(rows: impl IntoIterator<Item = (u64, &'a Detection)>) -> String {
    let mut s = String::from(OBSERVATION_HEADER);
    s.push('\n');
    for (id, d) in rows {
        s.push_str(&format_observation_row(id, d));
        s.push('\n');
    }
    s
}

pub fn serialize_observations(track: &Track) -> String {
    serialize_rows(track.observations.iter().map(|d| (track.target_id, d)))
}

pub fn serialize_manifest(clip: &LabeledClip) -> String {
    let m = Manifest {
        clip_id: clip.clip_id.clone(),
        image_width: clip.scene.image_width,
        image_height: clip.scene.image_height,
        fps: clip.scene.fps,
        class_set: clip.class_set.name().to_string(),
        label: clip.label.name().to_string(),
        ego_lane_x_range: [clip.scene.ego_lane_x_range.0, clip.scene.ego_lane_x_range.1],
        safety_field: Some(
            clip.scene
                .safety_field
                .iter()
                .map(|&(x, y)| [x, y])
                .collect(),
        ),
    };
    toml::to_string(&m).expect("manifest serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rows() {
        let r = parse_observation_row("3,100,7,640.00,400.50,120.00,90.00,0.9", 4).unwrap();
        assert_eq!(
            (
                r.target_id,
                r.detection.frame_idx,
                r.detection.timestamp_ms,
                r.line
            ),
            (7, 3, 100, 4)
        );
        assert_eq!(
            format_observation_row(7, &r.detection),
            "3,100,7,640.00,400.50,120.00,90.00,0.9"
        );
        let e = parse_observation_row("3,100,7,640,400,-1,90,1", 9).unwrap_err();
        assert!(e.to_string().contains("line 9"), "{e}");
        assert!(parse_observation_row("1,2,3", 1).is_err());
        assert!(parse_observation_row("1,2,x,1,1,1,1,1", 1).is_err());
    }
    use crate::trackdata::frame_timestamp_ms;
    use proptest::prelude::*;

    const MANIFEST: &str = r#"
clip_id = "c1"
image_width = 1280
image_height = 720
fps = 30
class_set = "cutin-lanepass"
label = "CutIn"
ego_lane_x_range = [500, 780]
"#;

    fn table(n: u64) -> String {
        let mut s = String::from(OBSERVATION_HEADER);
        s.push('\n');
        for k in 0..n {
            s.push_str(&format!(
                "{k},{},7,{:.2},400.00,120.00,90.00,0.9\n",
                frame_timestamp_ms(k, 30.0),
                300.0 + 4.0 * k as f64
            ));
        }
        s
    }

    #[test]
    fn sixty_rows_parse() {
        let clip = parse_clip(MANIFEST, &table(60)).unwrap();
        assert_eq!(clip.track.len(), 60);
        assert_eq!(clip.track.target_id, 7);
        assert_eq!(clip.label, ManeuverClass::CutIn);
        assert_eq!(clip.duration_ms(), 2000);
        assert_eq!(clip.scene.safety_field.len(), 4);
    }

    #[test]
    fn swapped_frames_rejected() {
        let mut lines: Vec<String> = table(60).lines().map(String::from).collect();
        lines.swap(5, 6);
        let err = parse_clip(MANIFEST, &(lines.join("\n") + "\n")).unwrap_err();
        assert!(
            err.to_string().contains("non-monotonic frame index"),
            "{err}"
        );
    }

    #[test]
    fn short_clip_rejected() {
        let err = parse_clip(MANIFEST, &table(10)).unwrap_err();
        assert!(
            err.to_string().contains("fewer than 15 observations"),
            "{err}"
        );
    }

    #[test]
    fn label_outside_set_rejected() {
        let m = MANIFEST.replace("\"CutIn\"", "\"LeftCutIn\"");
        let err = parse_clip(&m, &table(60)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut t = table(60);
        t = t.replacen("\n3,100,7,", "\n3,100,7,abc", 1);
        match parse_clip(MANIFEST, &t).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wrong_duration_rejected() {
        // 40 rows at 30 fps cover only 1333 ms.
        let err = parse_clip(MANIFEST, &table(40)).unwrap_err();
        assert!(err.to_string().contains("1333 ms"), "{err}");
    }

    #[test]
    fn unknown_manifest_key_rejected() {
        let m = format!("{MANIFEST}colour = \"red\"\n");
        assert!(matches!(
            parse_clip(&m, &table(60)),
            Err(Error::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_identity(
            start in 100u32..900,
            step in -300i32..300,
            w in 2000u32..30000,
            conf in 0u32..=1000,
            n in 59u64..=61,
        ) {
            let mut s = String::from(OBSERVATION_HEADER);
            s.push('\n');
            for k in 0..n {
                let cx = (start as f64 + (step as f64 / 100.0) * k as f64).max(200.0);
                s.push_str(&format!("{k},{},3,{cx:.2},360.00,{:.2},80.00,{}\n",
                    frame_timestamp_ms(k, 30.0), w as f64 / 100.0, conf as f64 / 1000.0));
            }
            let first = parse_clip(MANIFEST, &s).unwrap();
            let again = parse_clip(&serialize_manifest(&first), &serialize_observations(&first.track)).unwrap();
            prop_assert_eq!(first, again);
        }
    }
}
