//! Python bindings: `import cellstream_py`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use cellstream::curriculum::{self, CurriculumParams};
use cellstream::labelnoise::NoiseSpec;
use cellstream::multiview::{self, AggregationMethod, PredictionVector, ViewPrediction};
use cellstream::synthcells::{self, GenerationConfig, Image};
use cellstream::trainer::{self, checkpoint, ArchSpec};
use cellstream::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Competence c(t) of the curriculum schedule.
#[pyfunction]
#[pyo3(signature = (t, c0 = 0.05, total_epochs = 1000, p = 2.0))]
fn competence(t: u32, c0: f64, total_epochs: u32, p: f64) -> PyResult<f64> {
    let params = CurriculumParams {
        c0,
        total_epochs,
        p,
        ..Default::default()
    };
    params.validate().map_err(py_err)?;
    Ok(curriculum::competence(t, &params))
}

/// Difficulty score from a blur radius `b` and count distance `l`.
#[pyfunction]
#[pyo3(signature = (b, l, alpha = 0.5, beta = 0.5, l_norm_scale = 286.5))]
fn difficulty(b: f64, l: f64, alpha: f64, beta: f64, l_norm_scale: f64) -> PyResult<f64> {
    let params = CurriculumParams {
        alpha,
        beta,
        l_norm_scale,
        ..Default::default()
    };
    params.validate().map_err(py_err)?;
    Ok(curriculum::difficulty(b, l, &params).map_err(py_err)?.d)
}

/// `(class, confidence)` of a probability vector.
#[pyfunction]
fn view_prediction(probs: Vec<f64>) -> PyResult<(usize, f64)> {
    let h = PredictionVector::new(probs).map_err(py_err)?;
    let v = multiview::view_prediction(&h);
    Ok((v.class_id, v.confidence))
}

/// Combine per-view `(class, confidence)` pairs with "MVM" or "MVWCo-S".
/// Returns the final class and the per-class scores.
#[pyfunction]
fn aggregate(classes: Vec<usize>, confidences: Vec<f64>, num_classes: usize, method: &str) -> PyResult<(usize, Vec<f64>)> {
    if classes.len() != confidences.len() {
        return Err(PyValueError::new_err("classes and confidences differ in length"));
    }
    let method: AggregationMethod = method.parse().map_err(py_err)?;
    let views = classes
        .iter()
        .zip(&confidences)
        .map(|(&c, &p)| ViewPrediction::new(c, p, num_classes))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    let r = multiview::aggregate(&views, method).map_err(py_err)?;
    Ok((r.final_class, r.per_class))
}

#[pyfunction]
fn cosine_lr(t: f64, total: f64, lr0: f64) -> f64 {
    trainer::cosine_lr(t, total, lr0)
}

/// Label-smoothed cross-entropy of a probability vector.
#[pyfunction]
fn cross_entropy_ls(probs: Vec<f64>, target: usize, ratio: f64) -> PyResult<f64> {
    let h = PredictionVector::new(probs).map_err(py_err)?;
    trainer::cross_entropy_ls(&h, target, ratio).map_err(py_err)
}

/// Box blur of a `[channels, height, width]` 8-bit image.
#[pyfunction]
fn box_blur<'py>(py: Python<'py>, data: &[u8], channels: usize, height: usize, width: usize, b: u32) -> PyResult<Bound<'py, PyBytes>> {
    let img = Image::from_raw(channels, height, width, data.to_vec()).map_err(py_err)?;
    let out = synthcells::box_blur(&img, b).map_err(py_err)?;
    Ok(PyBytes::new(py, &out.data))
}

/// `(train, val, test)` sizes for `n` videos.
#[pyfunction]
fn split_sizes(n: usize) -> (usize, usize, usize) {
    synthcells::split_sizes(n)
}

/// One synthetic video. `frames` holds `[n_frames, 3, height, width]` bytes.
#[pyfunction]
#[pyo3(signature = (seed, n_frames = 100, height = 128, width = 128))]
fn generate_video<'py>(py: Python<'py>, seed: u64, n_frames: usize, height: usize, width: usize) -> PyResult<Bound<'py, PyDict>> {
    let config = GenerationConfig {
        n_frames,
        height,
        width,
        ..Default::default()
    };
    let s = synthcells::generate_video_seeded(seed, &config).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("frames", PyBytes::new(py, &s.video.data))?;
    let [t, c, h, w] = s.video.shape();
    d.set_item("shape", (t, c, h, w))?;
    d.set_item("rbc_count", s.rbc_count)?;
    d.set_item("wbc_count", s.wbc_count)?;
    d.set_item("rbc_high", s.rbc_high)?;
    d.set_item("wbc_high", s.wbc_high)?;
    d.set_item("category", format!("{:?}", s.degradation.category))?;
    d.set_item("blur_radius", s.degradation.blur_radius)?;
    d.set_item("noise_sigma", s.degradation.noise_sigma)?;
    Ok(d)
}

/// Corrupt labels: returns `(new_labels, changed_indices)`.
#[pyfunction]
fn asymmetric_flip(labels: Vec<usize>, rate: f64, transition_map: Vec<usize>, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    NoiseSpec {
        rate,
        transition_map,
        seed,
    }
    .apply(&labels)
    .map_err(py_err)
}

/// The small CNN classifier.
#[pyclass(name = "Classifier")]
struct PyClassifier {
    inner: trainer::Classifier<f32>,
}

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (in_channels, input_size, num_classes, channels = vec![32, 64, 128], seed = 0))]
    fn new(in_channels: usize, input_size: usize, num_classes: usize, channels: Vec<usize>, seed: u64) -> PyResult<Self> {
        let arch = ArchSpec {
            channels,
            ..ArchSpec::small_cnn(in_channels, input_size, num_classes)
        };
        Ok(PyClassifier {
            inner: trainer::Classifier::init(arch, seed).map_err(py_err)?,
        })
    }

    /// Load a checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyClassifier {
            inner: checkpoint::load_checkpoint(&path).map_err(py_err)?,
        })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.inner.arch().input_len()
    }

    /// Class probabilities for `batch` inputs given as one flat list.
    fn forward(&self, input: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f64>>> {
        let preds = self.inner.forward(&input, batch).map_err(py_err)?;
        Ok(preds.into_iter().map(|p| p.probs().to_vec()).collect())
    }
}

/// Add every function and class to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(competence, m)?)?;
    m.add_function(wrap_pyfunction!(difficulty, m)?)?;
    m.add_function(wrap_pyfunction!(view_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_lr, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy_ls, m)?)?;
    m.add_function(wrap_pyfunction!(box_blur, m)?)?;
    m.add_function(wrap_pyfunction!(split_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(generate_video, m)?)?;
    m.add_function(wrap_pyfunction!(asymmetric_flip, m)?)?;
    m.add_class::<PyClassifier>()?;
    Ok(())
}

#[pymodule]
fn cellstream_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
