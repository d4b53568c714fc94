//! Run configuration: a TOML file with one section per stage. Every key is
//! optional; unknown keys are rejected and values are range-checked at load.
//!
//! ```toml
//! seed = 7
//!
//! [scene]
//! width = 1280
//! height = 720
//! fps = 30
//! lane = [500, 780]
//!
//! [synth]
//! noise_sigma = 1.0
//!
//! [train]
//! strategy = "2classlr"
//! length = 30
//! ```

use std::path::Path;

use cutin_core::harness::GridSpec;
use cutin_core::lstm::{
    ACTIVATION_POOL, BATCH_SIZE_POOL, DROPOUT_POOL, HIDDEN_UNITS_POOL, OPTIMIZER_POOL,
};
use cutin_core::synthgen::{Camera, GenParams, JitterRanges};
use cutin_core::trackdata::{ClassSet, SceneMeta};
use cutin_core::tracker::TrackerConfig;
use cutin_core::{
    Activation, Error, Hyperparameters, InitScheme, OptimizerKind, Result, StrategyKind,
    TrainConfig,
};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneSection,
    pub synth: SynthSection,
    pub tracker: TrackerConfig,
    pub train: TrainSection,
    pub split: SplitSection,
    pub grid: GridSection,
    pub timing: TimingSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub width: f64,
    pub height: f64,
    pub fps: f64,
    pub lane: [f64; 2],
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            width: 1280.0,
            height: 720.0,
            fps: 30.0,
            lane: [500.0, 780.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Clips per (class, side) pair.
    pub n: usize,
    pub noise_sigma: f64,
    pub clip_seconds: f64,
    pub class_set: String,
    /// Extra vehicles in per-frame detection files.
    pub distractors: usize,
    pub camera: Camera,
    pub ranges: JitterRanges,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n: 100,
            noise_sigma: 1.0,
            clip_seconds: 2.0,
            class_set: ClassSet::CutInLanePass.name().into(),
            distractors: 0,
            camera: Camera::default(),
            ranges: JitterRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub strategy: String,
    pub length: usize,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub optimizer: String,
    pub activation: String,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub init: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = Hyperparameters::default();
        let t = TrainConfig::default();
        TrainSection {
            strategy: StrategyKind::Baseline.name().into(),
            length: 30,
            hidden_units: h.hidden_units,
            batch_size: h.batch_size,
            optimizer: h.optimizer.name().into(),
            activation: h.activation.name().into(),
            dropout: h.dropout,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            patience: t.early_stop_patience,
            init: t.init.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: [0.6, 0.2, 0.2],
        }
    }
}

/// Grid pools; the defaults are the full evaluated table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub hidden_units: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub optimizer: Vec<String>,
    pub activation: Vec<String>,
    pub dropout: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            hidden_units: HIDDEN_UNITS_POOL.to_vec(),
            batch_size: BATCH_SIZE_POOL.to_vec(),
            optimizer: OPTIMIZER_POOL
                .iter()
                .map(|o| o.name().to_string())
                .collect(),
            activation: ACTIVATION_POOL
                .iter()
                .map(|a| a.name().to_string())
                .collect(),
            dropout: DROPOUT_POOL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    pub repetitions: usize,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection { repetitions: 5 }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} {msg}"))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be > 0, got {v}")))
    }
}

fn parse_key<T: std::str::FromStr<Err = Error>>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|e: Error| bad(key, format!("is invalid: {e}")))
}

impl RunConfig {
    /// Reads and validates a configuration file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Input(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    e => e,
                })?
            }
        };
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        positive("scene.width", s.width)?;
        positive("scene.height", s.height)?;
        positive("scene.fps", s.fps)?;
        if !(0.0 <= s.lane[0] && s.lane[0] < s.lane[1] && s.lane[1] <= s.width) {
            return Err(bad(
                "scene.lane",
                format!("must satisfy 0 <= left < right <= width, got {:?}", s.lane),
            ));
        }

        let y = &self.synth;
        if y.n == 0 {
            return Err(bad("synth.n", "must be >= 1"));
        }
        if !(y.noise_sigma >= 0.0 && y.noise_sigma.is_finite()) {
            return Err(bad(
                "synth.noise_sigma",
                format!("must be >= 0, got {}", y.noise_sigma),
            ));
        }
        positive("synth.clip_seconds", y.clip_seconds)?;
        let set: ClassSet = parse_key("synth.class_set", &y.class_set)?;
        if set == ClassSet::LaneChange {
            return Err(bad(
                "synth.class_set",
                "cannot be lane-change for synthetic data",
            ));
        }
        positive("synth.camera.focal_px", y.camera.focal_px)?;
        positive("synth.camera.camera_height_m", y.camera.camera_height_m)?;
        positive("synth.camera.vehicle_width_m", y.camera.vehicle_width_m)?;
        positive("synth.camera.vehicle_height_m", y.camera.vehicle_height_m)?;
        y.ranges.validate().map_err(|e| bad("synth.ranges:", e))?;

        self.tracker.validate()?;

        let t = &self.train;
        parse_key::<StrategyKind>("train.strategy", &t.strategy)?;
        check_length("train.length", t.length)?;
        if t.hidden_units == 0 {
            return Err(bad("train.hidden_units", "must be >= 1"));
        }
        if t.batch_size == 0 {
            return Err(bad("train.batch_size", "must be >= 1"));
        }
        parse_key::<OptimizerKind>("train.optimizer", &t.optimizer)?;
        parse_key::<Activation>("train.activation", &t.activation)?;
        parse_key::<InitScheme>("train.init", &t.init)?;
        check_dropout("train.dropout", t.dropout)?;
        positive("train.learning_rate", t.learning_rate)?;

        let r = self.split.ratios;
        if r.iter().any(|v| v.is_nan() || *v <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(bad(
                "split.ratios",
                format!("must be three positive numbers summing to 1, got {r:?}"),
            ));
        }

        let g = &self.grid;
        for (key, empty) in [
            ("grid.hidden_units", g.hidden_units.is_empty()),
            ("grid.batch_size", g.batch_size.is_empty()),
            ("grid.optimizer", g.optimizer.is_empty()),
            ("grid.activation", g.activation.is_empty()),
            ("grid.dropout", g.dropout.is_empty()),
        ] {
            if empty {
                return Err(bad(key, "must not be empty"));
            }
        }
        if g.hidden_units.contains(&0) {
            return Err(bad("grid.hidden_units", "entries must be >= 1"));
        }
        if g.batch_size.contains(&0) {
            return Err(bad("grid.batch_size", "entries must be >= 1"));
        }
        for o in &g.optimizer {
            parse_key::<OptimizerKind>("grid.optimizer", o)?;
        }
        for a in &g.activation {
            parse_key::<Activation>("grid.activation", a)?;
        }
        for &d in &g.dropout {
            check_dropout("grid.dropout", d)?;
        }

        if self.timing.repetitions == 0 {
            return Err(bad("timing.repetitions", "must be >= 1"));
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<SceneMeta> {
        let s = &self.scene;
        SceneMeta::new(s.width, s.height, s.fps, (s.lane[0], s.lane[1]))
    }

    pub fn gen_params(&self) -> Result<GenParams> {
        Ok(GenParams {
            scene: self.scene()?,
            camera: self.synth.camera.clone(),
            clip_seconds: self.synth.clip_seconds,
            noise_sigma: self.synth.noise_sigma,
            seed: self.seed,
            class_set: self.synth.class_set.parse()?,
            ..GenParams::default()
        })
    }

    pub fn strategy(&self) -> StrategyKind {
        self.train.strategy.parse().expect("validated")
    }

    /// Training hyperparameters; values outside the standard pools are
    /// accepted as custom.
    pub fn hyperparameters(&self) -> Hyperparameters {
        let t = &self.train;
        let mut h = Hyperparameters {
            hidden_units: t.hidden_units,
            batch_size: t.batch_size,
            optimizer: t.optimizer.parse().expect("validated"),
            activation: t.activation.parse().expect("validated"),
            dropout: t.dropout,
            custom: false,
        };
        h.custom = h.validate().is_err();
        h
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            seed: self.seed,
            early_stop_patience: t.patience,
            init: t.init.parse().expect("validated"),
        }
    }

    pub fn grid(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            hidden_units: g.hidden_units.clone(),
            batch_size: g.batch_size.clone(),
            optimizer: g
                .optimizer
                .iter()
                .map(|o| o.parse().expect("validated"))
                .collect(),
            activation: g
                .activation
                .iter()
                .map(|a| a.parse().expect("validated"))
                .collect(),
            dropout: g.dropout.clone(),
        }
    }
}

/// Sequence lengths the models are trained for.
pub const LENGTHS: [usize; 4] = [15, 30, 45, 60];

pub fn check_length(key: &str, l: usize) -> Result<()> {
    if LENGTHS.contains(&l) {
        Ok(())
    } else {
        Err(bad(key, format!("must be one of 15, 30, 45, 60, got {l}")))
    }
}

fn check_dropout(key: &str, d: f64) -> Result<()> {
    if (0.0..1.0).contains(&d) {
        Ok(())
    } else {
        Err(bad(key, format!("must be in [0, 1), got {d}")))
    }
}
