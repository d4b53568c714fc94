//! Python module `cutin`: clips, training, classification and the
//! geometric helpers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cutin_core::features::{self, side_of};
use cutin_core::harness::{self, Metrics as CoreMetrics};
use cutin_core::strategies::{load_strategy, save_strategy, train_strategy};
use cutin_core::synthgen::{self, GenParams, JitterRanges};
use cutin_core::trackdata::{self, BoundingBox, ClassSet, LabeledClip, ManeuverClass};
use cutin_core::{tracker, Error, Hyperparameters, Strategy, StrategyKind, TrainConfig};

fn py_err(e: Error) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

type Box4 = (f64, f64, f64, f64);

fn to_box(b: Box4) -> PyResult<BoundingBox> {
    BoundingBox::new(b.0, b.1, b.2, b.3).map_err(py_err)
}

/// Intersection over union of two `(cx, cy, w, h)` boxes.
#[pyfunction]
fn iou(a: Box4, b: Box4) -> PyResult<f64> {
    Ok(tracker::iou(&to_box(a)?, &to_box(b)?))
}

/// Minimum-cost assignment as `(row, column)` pairs.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    tracker::hungarian(&cost).map_err(py_err)
}

/// Frame indices kept when resampling `n` frames to `l`.
#[pyfunction]
fn resample_indices(n: usize, l: usize) -> PyResult<Vec<usize>> {
    features::resample_indices(n, l).map_err(py_err)
}

/// A labeled clip of one target vehicle.
#[pyclass(frozen, from_py_object, module = "cutin")]
#[derive(Clone)]
struct Clip {
    inner: LabeledClip,
}

#[pymethods]
impl Clip {
    /// Reads a clip manifest and its observation table.
    #[staticmethod]
    fn from_text(manifest: &str, observations: &str) -> PyResult<Self> {
        Ok(Clip {
            inner: trackdata::parse_clip(manifest, observations).map_err(py_err)?,
        })
    }

    /// `(manifest, observations)` text.
    fn to_text(&self) -> (String, String) {
        (
            trackdata::serialize_manifest(&self.inner),
            trackdata::serialize_observations(&self.inner.track),
        )
    }

    #[getter]
    fn clip_id(&self) -> &str {
        &self.inner.clip_id
    }

    #[getter]
    fn label(&self) -> &'static str {
        self.inner.label.name()
    }

    #[getter]
    fn side(&self) -> &'static str {
        side_of(&self.inner.track, &self.inner.scene).name()
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.scene.fps
    }

    /// `(frame_idx, cx, cy, w, h)` per observation.
    #[getter]
    fn boxes(&self) -> Vec<(u64, f64, f64, f64, f64)> {
        self.inner
            .track
            .observations
            .iter()
            .map(|d| (d.frame_idx, d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h))
            .collect()
    }

    /// Normalized `(cx, cy, w, h)` rows resampled to `length`.
    fn features(&self, length: usize) -> PyResult<Vec<[f64; 4]>> {
        let c = &self.inner;
        Ok(features::featurize(&c.track, &c.scene, length, &c.clip_id)
            .map_err(py_err)?
            .values)
    }

    fn __len__(&self) -> usize {
        self.inner.track.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Clip({:?}, {}, {} frames)",
            self.inner.clip_id,
            self.inner.label,
            self.inner.track.len()
        )
    }
}

/// Synthetic clips: `n` per class and side, in the order cut-in left,
/// cut-in right, lane-pass left, lane-pass right.
#[pyfunction]
#[pyo3(signature = (n, seed = 0, noise_sigma = 1.0, sided = false))]
fn generate_dataset(
    py: Python<'_>,
    n: usize,
    seed: u64,
    noise_sigma: f64,
    sided: bool,
) -> PyResult<Vec<Clip>> {
    let class_set = if sided {
        ClassSet::SidedCutIn
    } else {
        ClassSet::CutInLanePass
    };
    let base = GenParams {
        seed,
        noise_sigma,
        class_set,
        ..Default::default()
    };
    let clips = py
        .detach(|| synthgen::generate_dataset(n, &base, &JitterRanges::default()))
        .map_err(py_err)?;
    Ok(clips.into_iter().map(|inner| Clip { inner }).collect())
}

/// Train, validation and test clips of a stratified seeded split.
#[pyfunction]
#[pyo3(signature = (clips, seed, ratios = (0.6, 0.2, 0.2)))]
fn split(
    clips: Vec<Clip>,
    seed: u64,
    ratios: (f64, f64, f64),
) -> PyResult<(Vec<Clip>, Vec<Clip>, Vec<Clip>)> {
    let all: Vec<LabeledClip> = clips.into_iter().map(|c| c.inner).collect();
    let s = trackdata::split_dataset(&all, ratios, seed).map_err(py_err)?;
    let part = |ids: &[String]| {
        s.select(ids, &all)
            .into_iter()
            .map(|c| Clip { inner: c.clone() })
            .collect()
    };
    Ok((part(&s.train), part(&s.val), part(&s.test)))
}

/// A trained classification strategy.
#[pyclass(frozen, module = "cutin")]
struct Model {
    inner: Strategy,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model {
            inner: load_strategy(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        save_strategy(&self.inner).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn length(&self) -> usize {
        self.inner.seq_len()
    }

    #[getter]
    fn classes(&self) -> Vec<&'static str> {
        self.inner
            .class_set()
            .classes()
            .iter()
            .map(|c| c.name())
            .collect()
    }

    /// `(class, probabilities, side)`; side is set by the two-sided strategy only.
    fn classify(&self, clip: &Clip) -> PyResult<(&'static str, Vec<f64>, Option<&'static str>)> {
        let c = self
            .inner
            .classify(&clip.inner.track, &clip.inner.scene)
            .map_err(py_err)?;
        Ok((c.class.name(), c.probabilities, c.side.map(|s| s.name())))
    }

    fn evaluate(&self, py: Python<'_>, clips: Vec<Clip>) -> PyResult<Metrics> {
        let clips: Vec<LabeledClip> = clips.into_iter().map(|c| c.inner).collect();
        let refs: Vec<&LabeledClip> = clips.iter().collect();
        let m = py
            .detach(|| harness::evaluate(&self.inner, &refs))
            .map_err(py_err)?;
        Ok(Metrics { inner: m })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({}, length={})",
            self.inner.kind(),
            self.inner.seq_len()
        )
    }
}

/// Trains `strategy` (`baseline`, `3class` or `2classlr`) with the default
/// hyperparameters unless overridden.
#[pyfunction]
#[pyo3(signature = (train_clips, val_clips = None, strategy = "baseline", length = 30, epochs = 100, seed = 0, hidden_units = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    train_clips: Vec<Clip>,
    val_clips: Option<Vec<Clip>>,
    strategy: &str,
    length: usize,
    epochs: usize,
    seed: u64,
    hidden_units: Option<usize>,
) -> PyResult<Model> {
    let kind: StrategyKind = strategy.parse().map_err(py_err)?;
    let tr: Vec<LabeledClip> = train_clips.into_iter().map(|c| c.inner).collect();
    let va: Vec<LabeledClip> = val_clips
        .unwrap_or_default()
        .into_iter()
        .map(|c| c.inner)
        .collect();
    let mut hyper = Hyperparameters::default();
    if let Some(h) = hidden_units {
        hyper.hidden_units = h;
        hyper.custom = hyper.validate().is_err();
    }
    let config = TrainConfig {
        epochs,
        seed,
        ..Default::default()
    };
    let inner = py
        .detach(|| {
            let (tr, va): (Vec<&LabeledClip>, Vec<&LabeledClip>) =
                (tr.iter().collect(), va.iter().collect());
            train_strategy(kind, &tr, &va, length, &hyper, &config)
        })
        .map_err(py_err)?;
    Ok(Model { inner })
}

/// Confusion-matrix metrics.
#[pyclass(frozen, module = "cutin")]
struct Metrics {
    inner: CoreMetrics,
}

#[pymethods]
impl Metrics {
    /// Builds metrics from a confusion matrix over `class_set`
    /// (`cutin-lanepass`, `sided-cutin` or `lane-change`).
    #[new]
    #[pyo3(signature = (confusion, class_set = "cutin-lanepass"))]
    fn new(confusion: Vec<Vec<u64>>, class_set: &str) -> PyResult<Self> {
        let set: ClassSet = class_set.parse().map_err(py_err)?;
        Ok(Metrics {
            inner: CoreMetrics::from_confusion(set, confusion).map_err(py_err)?,
        })
    }

    #[getter]
    fn accuracy(&self) -> f64 {
        self.inner.accuracy
    }

    #[getter]
    fn precision(&self) -> Vec<Option<f64>> {
        self.inner.precision.clone()
    }

    #[getter]
    fn recall(&self) -> Vec<Option<f64>> {
        self.inner.recall.clone()
    }

    #[getter]
    fn confusion(&self) -> Vec<Vec<u64>> {
        self.inner.confusion.clone()
    }

    #[getter]
    fn classes(&self) -> Vec<&'static str> {
        self.inner
            .class_set
            .classes()
            .iter()
            .map(ManeuverClass::name)
            .collect()
    }

    fn per_class_csv(&self) -> String {
        self.inner.per_class_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Metrics(accuracy={:.4}, n={})",
            self.inner.accuracy,
            self.inner.total()
        )
    }
}

#[pymodule]
fn cutin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Clip>()?;
    m.add_class::<Model>()?;
    m.add_class::<Metrics>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(resample_indices, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
