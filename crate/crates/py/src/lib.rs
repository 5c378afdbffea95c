//! Python bindings: synthetic data, training, detection, metrics and the
//! numeric building blocks, with NumPy arrays at the boundary.

use std::path::PathBuf;

use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pda_core::data::{generate_synthetic, make_splits, SyntheticBundle, SyntheticSpec};
use pda_core::metrics::{self, EvalConfig, GroundTruth, Interval};
use pda_core::pipeline::{self, loss_curve_csv, Checkpoint as CoreCheckpoint, EpochLoss, TrainConfig};
use pda_core::postprocess::{self, Detection as CoreDetection};
use pda_core::semantics::{self, Phase};
use pda_core::{apa, objectives, tif, PdaError};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: PdaError) -> PyErr {
    match err {
        PdaError::Config(_) | PdaError::InvalidArgument(_) | PdaError::DimensionMismatch { .. } => {
            PyValueError::new_err(err.to_string())
        }
        PdaError::Divergence { .. } | PdaError::NonFinite { .. } => PyArithmeticError::new_err(err.to_string()),
        PdaError::Io(_) => PyOSError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for pda_core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A scored action segment.
#[pyclass(module = "pda", get_all, set_all, from_py_object)]
#[derive(Clone)]
pub struct Detection {
    video_id: String,
    start: f64,
    end: f64,
    class_name: String,
    score: f64,
}

#[pymethods]
impl Detection {
    #[new]
    fn new(video_id: String, start: f64, end: f64, class_name: String, score: f64) -> Self {
        Self {
            video_id,
            start,
            end,
            class_name,
            score,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Detection({:?}, {:.3}, {:.3}, {:?}, {:.4})",
            self.video_id, self.start, self.end, self.class_name, self.score
        )
    }
}

impl From<&Detection> for CoreDetection {
    fn from(d: &Detection) -> Self {
        CoreDetection {
            video_id: d.video_id.clone(),
            start: d.start,
            end: d.end,
            class_name: d.class_name.clone(),
            score: d.score,
        }
    }
}

impl From<CoreDetection> for Detection {
    fn from(d: CoreDetection) -> Self {
        Self {
            video_id: d.video_id,
            start: d.start,
            end: d.end,
            class_name: d.class_name,
            score: d.score,
        }
    }
}

fn core_dets(dets: &[Detection]) -> Vec<CoreDetection> {
    dets.iter().map(CoreDetection::from).collect()
}

/// Ground truth as `(video_id, start, end, label)` tuples.
fn ground_truth(gts: Vec<(String, f64, f64, String)>) -> Vec<GroundTruth> {
    gts.into_iter()
        .map(|(video_id, start, end, label)| GroundTruth {
            video_id,
            start,
            end,
            label,
        })
        .collect()
}

/// A generated dataset together with its descriptions and text encoder.
#[pyclass(module = "pda")]
pub struct SyntheticData {
    bundle: SyntheticBundle,
}

#[pymethods]
impl SyntheticData {
    /// Generates a dataset. `spec_json` holds any generator fields to
    /// override; `seed` always wins.
    #[new]
    #[pyo3(signature = (seed, spec_json=None, shared_pairs=false))]
    fn new(py: Python<'_>, seed: u64, spec_json: Option<&str>, shared_pairs: bool) -> PyResult<Self> {
        let mut spec: SyntheticSpec = match spec_json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => SyntheticSpec::default(),
        };
        spec.seed = seed;
        if shared_pairs {
            spec = spec.with_default_pairs();
        }
        let bundle = py.detach(|| generate_synthetic(&spec)).py_err()?;
        Ok(Self { bundle })
    }

    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.bundle.dataset.manifest.vocabulary.clone()
    }

    #[getter]
    fn video_ids(&self) -> Vec<String> {
        self.bundle
            .dataset
            .manifest
            .videos
            .iter()
            .map(|v| v.video_id.clone())
            .collect()
    }

    /// Snippet features of one video, T×D.
    fn features<'py>(&self, py: Python<'py>, video_id: &str) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let seq = self.bundle.dataset.sequence(video_id).py_err()?;
        Ok(seq.features.clone().into_pyarray(py))
    }

    /// `(video_id, start, end, label)` for every annotation.
    fn annotations(&self) -> Vec<(String, f64, f64, String)> {
        let m = &self.bundle.dataset.manifest;
        m.ground_truth(&m.videos.iter().collect::<Vec<_>>(), &m.vocabulary)
            .into_iter()
            .map(|g| (g.video_id, g.start, g.end, g.label))
            .collect()
    }

    fn description(&self, class_name: &str, phase: &str) -> PyResult<Option<String>> {
        let phase: Phase = phase.parse().py_err()?;
        Ok(self.bundle.descriptions.lookup_phase(class_name, phase))
    }

    /// Writes the manifest, feature files and description cache under `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<PathBuf> {
        let manifest = self.bundle.dataset.save(&dir).py_err()?;
        self.bundle.descriptions.save(&dir.join("descriptions.json")).py_err()?;
        Ok(manifest)
    }

    /// Trains on `seen` classes. `config_json` is a partial training config.
    #[pyo3(signature = (seen, seed, config_json=None))]
    fn train(&self, py: Python<'_>, seen: Vec<String>, seed: u64, config_json: Option<&str>) -> PyResult<Checkpoint> {
        let mut cfg: TrainConfig = match config_json {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => TrainConfig::default(),
        };
        cfg.seed = seed;
        let b = &self.bundle;
        let out = py
            .detach(|| pipeline::train(&b.dataset, &seen, &cfg, &b.descriptions, &b.encoder))
            .py_err()?;
        Ok(Checkpoint {
            inner: out.checkpoint,
            curve: out.curve,
        })
    }

    /// Detections over the videos annotated only with `vocab` classes.
    fn detect(&self, py: Python<'_>, checkpoint: &Checkpoint, vocab: Vec<String>) -> PyResult<Vec<Detection>> {
        let b = &self.bundle;
        let videos = b.dataset.manifest.videos_with_only(&vocab);
        let dets = py
            .detach(|| {
                pipeline::detect(
                    &checkpoint.inner,
                    &b.dataset,
                    &videos,
                    &vocab,
                    &b.descriptions,
                    &b.encoder,
                )
            })
            .py_err()?;
        Ok(dets.into_iter().map(Detection::from).collect())
    }

    /// Average mAP of `dets` on the videos annotated only with `vocab`.
    #[pyo3(signature = (dets, vocab, thresholds=None))]
    fn evaluate(&self, dets: Vec<Detection>, vocab: Vec<String>, thresholds: Option<Vec<f64>>) -> PyResult<f64> {
        let cfg = match thresholds {
            Some(t) => EvalConfig::new(t).py_err()?,
            None => EvalConfig::thumos(),
        };
        let m = &self.bundle.dataset.manifest;
        let videos = m.videos_with_only(&vocab);
        let r = pipeline::evaluate(&core_dets(&dets), &self.bundle.dataset, &videos, &vocab, &cfg).py_err()?;
        Ok(r.average)
    }
}

/// Trained parameters plus the loss log of the run that produced them.
#[pyclass(module = "pda")]
pub struct Checkpoint {
    inner: CoreCheckpoint,
    curve: Vec<EpochLoss>,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreCheckpoint::load(&path).py_err()?,
            curve: Vec::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py_err()
    }

    #[getter]
    fn seen(&self) -> Vec<String> {
        self.inner.seen.clone()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.params.num_scalars()
    }

    /// Total loss per epoch (empty for a loaded checkpoint).
    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.curve.iter().map(|e| e.loss.total).collect()
    }

    fn loss_csv(&self) -> String {
        loss_curve_csv(&self.curve)
    }
}

#[pyfunction]
fn build_phase_prompt(action: &str, n_phases: usize) -> PyResult<String> {
    semantics::build_phase_prompt(action, n_phases).py_err()
}

#[pyfunction]
fn wrap_description(description: &str) -> PyResult<String> {
    semantics::wrap_description(description).py_err()
}

/// Per-snippet foreground scores of one phase, `softmax_t(max_c fv·bankᵀ)`.
#[pyfunction]
fn foreground_scores<'py>(
    py: Python<'py>,
    fv: PyReadonlyArray2<'py, f64>,
    bank: PyReadonlyArray2<'py, f64>,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let s =
        tif::foreground_score_matrix(&fv.as_array().to_owned(), &bank.as_array().to_owned(), Phase::Global).py_err()?;
    Ok(PyArray1::from_vec(py, s.scores))
}

/// Scores at or above `1/T`.
#[pyfunction]
fn binarize(scores: PyReadonlyArray1<'_, f64>) -> Vec<bool> {
    let s = tif::ForegroundScore {
        phase: Phase::Global,
        scores: scores.as_array().to_vec(),
    };
    tif::binarize(&s).mask
}

/// Snippet-by-class similarity `fbar · bankᵀ`.
#[pyfunction]
fn classify<'py>(
    py: Python<'py>,
    fbar: PyReadonlyArray2<'py, f64>,
    bank: PyReadonlyArray2<'py, f64>,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let s = apa::classify_phase(Phase::Global, &fbar.as_array().to_owned(), &bank.as_array().to_owned()).py_err()?;
    Ok(s.scores.into_pyarray(py))
}

#[pyfunction]
fn tiou(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    metrics::tiou(Interval::new(a.0, a.1), Interval::new(b.0, b.1)).py_err()
}

#[pyfunction]
fn diou_loss(pred: (f64, f64), gt: (f64, f64)) -> PyResult<f64> {
    objectives::diou_1d(Interval::new(pred.0, pred.1), Interval::new(gt.0, gt.1)).py_err()
}

#[pyfunction]
#[pyo3(signature = (dets, sigma=0.5, prune=1e-3))]
fn soft_nms(dets: Vec<Detection>, sigma: f64, prune: f64) -> PyResult<Vec<Detection>> {
    let out = postprocess::soft_nms_classwise(&core_dets(&dets), sigma, prune).py_err()?;
    Ok(out.into_iter().map(Detection::from).collect())
}

#[pyfunction]
fn average_precision(dets: Vec<Detection>, gts: Vec<(String, f64, f64, String)>, threshold: f64) -> f64 {
    metrics::average_precision(&core_dets(&dets), &ground_truth(gts), threshold)
}

/// mAP per threshold and their mean.
#[pyfunction]
#[pyo3(signature = (dets, gts, thresholds=None))]
fn mean_ap(
    dets: Vec<Detection>,
    gts: Vec<(String, f64, f64, String)>,
    thresholds: Option<Vec<f64>>,
) -> PyResult<(Vec<f64>, f64)> {
    let cfg = match thresholds {
        Some(t) => EvalConfig::new(t).py_err()?,
        None => EvalConfig::thumos(),
    };
    let r = metrics::mean_ap(&core_dets(&dets), &ground_truth(gts), &cfg).py_err()?;
    Ok((r.map, r.average))
}

/// `(seen, unseen)` class lists for each split.
#[pyfunction]
#[pyo3(signature = (vocab, fraction_seen=0.5, n_splits=1, seed=0))]
fn splits(
    vocab: Vec<String>,
    fraction_seen: f64,
    n_splits: usize,
    seed: u64,
) -> PyResult<Vec<(Vec<String>, Vec<String>)>> {
    let s = make_splits(&vocab, fraction_seen, n_splits, seed).py_err()?;
    Ok(s.into_iter().map(|s| (s.seen, s.unseen)).collect())
}

#[pymodule]
fn pda(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Detection>()?;
    m.add_class::<SyntheticData>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(build_phase_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(wrap_description, m)?)?;
    m.add_function(wrap_pyfunction!(foreground_scores, m)?)?;
    m.add_function(wrap_pyfunction!(binarize, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(tiou, m)?)?;
    m.add_function(wrap_pyfunction!(diou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(soft_nms, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(mean_ap, m)?)?;
    m.add_function(wrap_pyfunction!(splits, m)?)?;
    Ok(())
}
