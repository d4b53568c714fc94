//! Classification strategies built on the LSTM core.
//!
//! * `Baseline`: one two-class model (CutIn / LanePass) over all clips.
//! * `ThreeClass`: one three-class model, either sided cut-ins or lane changes.
//! * `TwoClassLR`: two two-class models, one per side; a track reaches the model
//!   for the side it starts on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, side_of, FeatureSequence, Side};
use crate::lstm::io::ModelRecord;
use crate::lstm::{
    argmax, predict, train, History, Hyperparameters, LstmModel, TrainConfig, TrainingSample,
};
use crate::trackdata::{ClassSet, LabeledClip, ManeuverClass, SceneMeta, Track};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    Baseline,
    ThreeClass,
    TwoClassLR,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Baseline,
        StrategyKind::ThreeClass,
        StrategyKind::TwoClassLR,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Baseline => "baseline",
            StrategyKind::ThreeClass => "3class",
            StrategyKind::TwoClassLR => "2classlr",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(StrategyKind::Baseline),
            "3class" | "threeclass" => Ok(StrategyKind::ThreeClass),
            "2classlr" | "twoclasslr" => Ok(StrategyKind::TwoClassLR),
            other => Err(Error::config(format!(
                "unknown strategy {other:?} (baseline, 3class, 2classlr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Strategy {
    Baseline { model: LstmModel },
    ThreeClass { model: LstmModel },
    TwoClassLR { left: LstmModel, right: LstmModel },
}

/// Result of classifying one track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: ManeuverClass,
    /// Softmax output of the model that made the decision, in its class-set order.
    pub probabilities: Vec<f64>,
    /// The model's class set (names for `probabilities`).
    pub class_set: ClassSet,
    /// Routed side, set by `TwoClassLR` only.
    pub side: Option<Side>,
}

impl Classification {
    /// Class with side folded in where known: a `TwoClassLR` cut-in routed
    /// left becomes `LeftCutIn`.
    pub fn sided_class(&self) -> ManeuverClass {
        match (self.class, self.side) {
            (ManeuverClass::CutIn, Some(Side::Left)) => ManeuverClass::LeftCutIn,
            (ManeuverClass::CutIn, Some(Side::Right)) => ManeuverClass::RightCutIn,
            (c, _) => c,
        }
    }
}

impl Strategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Baseline { .. } => StrategyKind::Baseline,
            Strategy::ThreeClass { .. } => StrategyKind::ThreeClass,
            Strategy::TwoClassLR { .. } => StrategyKind::TwoClassLR,
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            Strategy::Baseline { model } | Strategy::ThreeClass { model } => model.seq_len,
            Strategy::TwoClassLR { left, .. } => left.seq_len,
        }
    }

    /// Class set that evaluation labels are mapped into.
    pub fn class_set(&self) -> ClassSet {
        match self {
            Strategy::ThreeClass { model } => model.class_set,
            _ => ClassSet::CutInLanePass,
        }
    }

    pub fn models(&self) -> Vec<&LstmModel> {
        match self {
            Strategy::Baseline { model } | Strategy::ThreeClass { model } => vec![model],
            Strategy::TwoClassLR { left, right } => vec![left, right],
        }
    }

    /// Maps a clip label into [`class_set`](Self::class_set), or fails with
    /// "class set mismatch".
    pub fn target_label(&self, label: ManeuverClass) -> Result<ManeuverClass> {
        map_label(self.kind(), self.class_set(), label)
    }

    /// Classifies an already resampled and normalized sequence. `side` is
    /// required for `TwoClassLR` and ignored otherwise.
    pub fn classify_features(&self, seq: &FeatureSequence, side: Side) -> Result<Classification> {
        let (model, side) = match self {
            Strategy::Baseline { model } | Strategy::ThreeClass { model } => (model, None),
            Strategy::TwoClassLR { left, right } => match side {
                Side::Left => (left, Some(Side::Left)),
                Side::Right => (right, Some(Side::Right)),
            },
        };
        let probabilities = predict(model, seq)?;
        let class = model.class_set.classes()[argmax(&probabilities)];
        Ok(Classification {
            class,
            probabilities,
            class_set: model.class_set,
            side,
        })
    }

    /// Resample, normalize, route (TwoClassLR) and predict.
    pub fn classify(&self, track: &Track, scene: &SceneMeta) -> Result<Classification> {
        let seq = featurize(track, scene, self.seq_len(), "")?;
        self.classify_features(&seq, side_of(track, scene))
    }

    pub fn validate(&self) -> Result<()> {
        for m in self.models() {
            m.validate()?;
        }
        match self {
            Strategy::Baseline { model } if model.class_set != ClassSet::CutInLanePass => Err(
                Error::validation("baseline model must use the cutin-lanepass class set"),
            ),
            Strategy::ThreeClass { model } if model.class_set == ClassSet::CutInLanePass => Err(
                Error::validation("three-class model must use a three-class set"),
            ),
            Strategy::TwoClassLR { left, right }
                if left.class_set != ClassSet::CutInLanePass
                    || right.class_set != ClassSet::CutInLanePass =>
            {
                Err(Error::validation(
                    "side models must use the cutin-lanepass class set",
                ))
            }
            Strategy::TwoClassLR { left, right } if left.seq_len != right.seq_len => Err(
                Error::validation("side models have different sequence lengths"),
            ),
            _ => Ok(()),
        }
    }
}

fn mismatch(kind: StrategyKind, label: ManeuverClass) -> Error {
    Error::config(format!(
        "class set mismatch: {kind} strategy cannot use label {label}"
    ))
}

fn map_label(kind: StrategyKind, set: ClassSet, label: ManeuverClass) -> Result<ManeuverClass> {
    match kind {
        StrategyKind::Baseline | StrategyKind::TwoClassLR => {
            let c = label.collapse_side();
            if ClassSet::CutInLanePass.contains(c) {
                Ok(c)
            } else {
                Err(mismatch(kind, label))
            }
        }
        StrategyKind::ThreeClass => {
            if set.contains(label) {
                Ok(label)
            } else {
                Err(mismatch(kind, label))
            }
        }
    }
}

/// Three-class set implied by the training labels.
fn three_class_set(clips: &[&LabeledClip]) -> Result<ClassSet> {
    for set in [ClassSet::SidedCutIn, ClassSet::LaneChange] {
        if clips.iter().all(|c| set.contains(c.label)) {
            return Ok(set);
        }
    }
    let bad = clips
        .iter()
        .find(|c| !ClassSet::SidedCutIn.contains(c.label))
        .or_else(|| clips.first())
        .map(|c| c.label)
        .unwrap_or(ManeuverClass::CutIn);
    Err(mismatch(StrategyKind::ThreeClass, bad))
}

fn samples(
    clips: &[&LabeledClip],
    kind: StrategyKind,
    set: ClassSet,
    l: usize,
) -> Result<Vec<TrainingSample>> {
    clips
        .iter()
        .map(|c| {
            let target = map_label(kind, set, c.label)?;
            let label = set
                .index_of(target)
                .ok_or_else(|| mismatch(kind, c.label))?;
            Ok(TrainingSample {
                features: featurize(&c.track, &c.scene, l, &c.clip_id)?,
                label,
            })
        })
        .collect()
}

fn partition_by_side<'a>(
    clips: &[&'a LabeledClip],
) -> (Vec<&'a LabeledClip>, Vec<&'a LabeledClip>, usize) {
    let (mut left, mut right, mut disagree) = (vec![], vec![], 0);
    for &c in clips {
        let side = side_of(&c.track, &c.scene);
        let labeled = match c.label {
            ManeuverClass::LeftCutIn => Some(Side::Left),
            ManeuverClass::RightCutIn => Some(Side::Right),
            _ => None,
        };
        if labeled.is_some_and(|s| s != side) {
            disagree += 1;
        }
        match side {
            Side::Left => left.push(c),
            Side::Right => right.push(c),
        }
    }
    (left, right, disagree)
}

/// Trains a strategy on labeled clips featurized to length `l`.
///
/// `TwoClassLR` partitions both sets by the geometric side of each track;
/// labeled sides are only used as a cross-check and disagreements are logged.
pub fn train_strategy(
    kind: StrategyKind,
    train_clips: &[&LabeledClip],
    val_clips: &[&LabeledClip],
    l: usize,
    hyper: &Hyperparameters,
    config: &TrainConfig,
) -> Result<Strategy> {
    Ok(train_strategy_with_history(kind, train_clips, val_clips, l, hyper, config)?.0)
}

/// [`train_strategy`] plus the training history of each model, named
/// `model`, or `left` and `right` for `TwoClassLR`. The two side models
/// train concurrently.
pub fn train_strategy_with_history(
    kind: StrategyKind,
    train_clips: &[&LabeledClip],
    val_clips: &[&LabeledClip],
    l: usize,
    hyper: &Hyperparameters,
    config: &TrainConfig,
) -> Result<(Strategy, Vec<(&'static str, History)>)> {
    if train_clips.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let out = match kind {
        StrategyKind::Baseline => {
            let set = ClassSet::CutInLanePass;
            let tr = samples(train_clips, kind, set, l)?;
            let va = samples(val_clips, kind, set, l)?;
            let (model, h) = train(&tr, &va, set, hyper, config)?;
            (Strategy::Baseline { model }, vec![("model", h)])
        }
        StrategyKind::ThreeClass => {
            let set = three_class_set(train_clips)?;
            let tr = samples(train_clips, kind, set, l)?;
            let va = samples(val_clips, kind, set, l)?;
            let (model, h) = train(&tr, &va, set, hyper, config)?;
            (Strategy::ThreeClass { model }, vec![("model", h)])
        }
        StrategyKind::TwoClassLR => {
            let set = ClassSet::CutInLanePass;
            let (tl, tr, bad_t) = partition_by_side(train_clips);
            let (vl, vr, bad_v) = partition_by_side(val_clips);
            if bad_t + bad_v > 0 {
                log::warn!(
                    "{} clip(s) start on the opposite side from their label",
                    bad_t + bad_v
                );
            }
            for (name, part) in [("left", &tl), ("right", &tr)] {
                if part.is_empty() {
                    return Err(Error::config(format!(
                        "no training clips on the {name} side"
                    )));
                }
            }
            let side = |t: &[&LabeledClip], v: &[&LabeledClip]| -> Result<(LstmModel, History)> {
                train(
                    &samples(t, kind, set, l)?,
                    &samples(v, kind, set, l)?,
                    set,
                    hyper,
                    config,
                )
            };
            let (left, right) = rayon::join(|| side(&tl, &vl), || side(&tr, &vr));
            let ((left, hl), (right, hr)) = (left?, right?);
            (
                Strategy::TwoClassLR { left, right },
                vec![("left", hl), ("right", hr)],
            )
        }
    };
    Ok(out)
}

pub const STRATEGY_FORMAT: &str = "cutin-strategy";
pub const STRATEGY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyRecord {
    format: String,
    version: u32,
    kind: StrategyKind,
    models: Vec<ModelRecord>,
}

pub fn save_strategy(s: &Strategy) -> Result<String> {
    let rec = StrategyRecord {
        format: STRATEGY_FORMAT.into(),
        version: STRATEGY_VERSION,
        kind: s.kind(),
        models: s
            .models()
            .into_iter()
            .map(ModelRecord::from_model)
            .collect(),
    };
    serde_json::to_string(&rec).map_err(|e| Error::Serde(e.to_string()))
}

pub fn load_strategy(text: &str) -> Result<Strategy> {
    let rec: StrategyRecord =
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
    if rec.format != STRATEGY_FORMAT || rec.version != STRATEGY_VERSION {
        return Err(Error::validation(format!(
            "unsupported strategy file ({} v{})",
            rec.format, rec.version
        )));
    }
    let mut models = rec
        .models
        .into_iter()
        .map(ModelRecord::into_model)
        .collect::<Result<Vec<_>>>()?;
    let expected = if rec.kind == StrategyKind::TwoClassLR {
        2
    } else {
        1
    };
    if models.len() != expected {
        return Err(Error::validation(format!(
            "{} strategy needs {expected} model(s), found {}",
            rec.kind,
            models.len()
        )));
    }
    let s = match rec.kind {
        StrategyKind::Baseline => Strategy::Baseline {
            model: models.remove(0),
        },
        StrategyKind::ThreeClass => Strategy::ThreeClass {
            model: models.remove(0),
        },
        StrategyKind::TwoClassLR => {
            let right = models.pop().unwrap();
            let left = models.pop().unwrap();
            Strategy::TwoClassLR { left, right }
        }
    };
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{Activation, OptimizerKind};
    use crate::trackdata::{BoundingBox, Detection};

    fn zero(set: ClassSet, l: usize) -> LstmModel {
        LstmModel::zeros(
            set,
            l,
            Hyperparameters::custom(4, 1, OptimizerKind::Adam, Activation::Tanh, 0.0),
        )
    }

    fn scene() -> SceneMeta {
        SceneMeta::new(1280.0, 720.0, 30.0, (500.0, 780.0)).unwrap()
    }

    fn track_at(cx: f64) -> Track {
        let obs = (0..20)
            .map(|i| Detection {
                frame_idx: i,
                timestamp_ms: i * 33,
                bbox: BoundingBox {
                    cx,
                    cy: 500.0,
                    w: 100.0,
                    h: 80.0,
                },
                confidence: 1.0,
            })
            .collect();
        Track::new(1, obs).unwrap()
    }

    #[test]
    fn kinds_parse() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("4class".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn uniform_models_tie_to_first_class() {
        let s = Strategy::ThreeClass {
            model: zero(ClassSet::SidedCutIn, 10),
        };
        let c = s.classify(&track_at(300.0), &scene()).unwrap();
        assert_eq!(c.class, ManeuverClass::LeftCutIn);
        assert!((c.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_class_lr_routes_by_geometry() {
        let mut left = zero(ClassSet::CutInLanePass, 10);
        // Bias the left model towards CutIn: p = softmax(ln 9, 0) = (0.9, 0.1).
        left.head.out_b = vec![9f64.ln(), 0.0];
        let right = zero(ClassSet::CutInLanePass, 10);
        let s = Strategy::TwoClassLR { left, right };
        let c = s.classify(&track_at(300.0), &scene()).unwrap();
        assert_eq!(c.class, ManeuverClass::CutIn);
        assert_eq!(c.side, Some(Side::Left));
        assert_eq!(c.sided_class(), ManeuverClass::LeftCutIn);
        assert!((c.probabilities[0] - 0.9).abs() < 1e-12);
        let c = s.classify(&track_at(1000.0), &scene()).unwrap();
        assert_eq!(c.side, Some(Side::Right));
        assert_eq!(c.probabilities, vec![0.5, 0.5]);
    }

    #[test]
    fn short_track_is_rejected() {
        let s = Strategy::Baseline {
            model: zero(ClassSet::CutInLanePass, 30),
        };
        assert!(s.classify(&track_at(300.0), &scene()).is_err());
    }

    #[test]
    fn label_mapping() {
        let b = Strategy::Baseline {
            model: zero(ClassSet::CutInLanePass, 10),
        };
        assert_eq!(
            b.target_label(ManeuverClass::RightCutIn).unwrap(),
            ManeuverClass::CutIn
        );
        assert!(b.target_label(ManeuverClass::LeftLaneChange).is_err());
        let t = Strategy::ThreeClass {
            model: zero(ClassSet::SidedCutIn, 10),
        };
        let err = t.target_label(ManeuverClass::CutIn).unwrap_err();
        assert!(err.to_string().contains("class set mismatch"));
    }

    #[test]
    fn serialization_roundtrip() {
        let s = Strategy::TwoClassLR {
            left: zero(ClassSet::CutInLanePass, 10),
            right: zero(ClassSet::CutInLanePass, 10),
        };
        let back = load_strategy(&save_strategy(&s).unwrap()).unwrap();
        assert_eq!(s, back);
        let text = save_strategy(&s)
            .unwrap()
            .replace("\"TwoClassLR\"", "\"Baseline\"");
        assert!(load_strategy(&text).is_err());
    }
}
