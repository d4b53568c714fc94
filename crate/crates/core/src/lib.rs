//! Cut-in maneuver prediction from per-frame vehicle bounding boxes.
//!
//! The pipeline runs detections through a SORT-style tracker, turns the
//! target's corrected boxes into a fixed-length `(cx, cy, w, h)` sequence,
//! and classifies that sequence with a single-layer LSTM. Three
//! classification strategies share the LSTM core (side-agnostic two-class,
//! three-class with sided cut-ins, and a side-routed pair of two-class
//! models). The [`harness`] module holds the grid search, metrics and
//! timing machinery; [`synthgen`] produces labeled clips for desk-scale
//! experiments.

pub mod error;
pub mod features;
pub mod harness;
pub mod lstm;
pub mod strategies;
pub mod synthgen;
pub mod trackdata;
pub mod tracker;

pub use error::{Error, Result};
pub use features::{FeatureSequence, Side};
pub use lstm::{Activation, Hyperparameters, InitScheme, LstmModel, OptimizerKind, TrainConfig};
pub use strategies::{Classification, Strategy, StrategyKind};

pub use trackdata::{
    BoundingBox, ClassSet, DatasetSplit, Detection, LabeledClip, ManeuverClass, SceneMeta, Track,
};
