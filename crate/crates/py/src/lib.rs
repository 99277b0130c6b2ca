//! Python module `mamba_va`: metrics, segmentation, feature files, the
//! synthetic generator and checkpoint inference.

use std::path::PathBuf;

use mamba_va::checkpoint::Checkpoint;
use mamba_va::data::{self, FeatureSequence, SyntheticConfig, VaSeries};
use mamba_va::layers;
use mamba_va::metrics;
use mamba_va::training::{predict_sequence, TrainConfig};
use mamba_va::{Error, Tensor};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows_to_tensor(rows: Vec<Vec<f32>>) -> PyResult<Tensor<f32>> {
    Tensor::from_rows(&rows).map_err(py_err)
}

fn pairs_of(rows: &[Vec<f32>], what: &str) -> PyResult<Vec<(f32, f32)>> {
    rows.iter()
        .map(|r| match r.as_slice() {
            [v, a] => Ok((*v, *a)),
            _ => Err(PyValueError::new_err(format!("{what}: expected rows of 2 values, got {}", r.len()))),
        })
        .collect()
}

/// Concordance correlation coefficient over the frames where `mask` is true.
#[pyfunction]
#[pyo3(signature = (x, y, mask=None))]
fn ccc(x: Vec<f64>, y: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<f64> {
    Ok(metrics::ccc(&x, &y, mask.as_deref()).map_err(py_err)?.ccc)
}

#[pyfunction]
fn p_va(ccc_v: f64, ccc_a: f64) -> f64 {
    metrics::p_va(ccc_v, ccc_a)
}

/// Window ranges as `(start, length)` pairs.
#[pyfunction]
fn segment_video(n: usize, window: usize, stride: usize) -> PyResult<Vec<(usize, usize)>> {
    let ranges = data::segment_video(n, window, stride).map_err(py_err)?;
    Ok(ranges.iter().map(|r| (r.start, r.len)).collect())
}

/// Zero-order-hold discretization, returns `(a_bar, b_bar)`.
#[pyfunction]
fn discretize(delta: f64, a: f64, b: f64) -> (f64, f64) {
    mamba_va::scan::discretize(delta, a, b)
}

/// Returns `(video_id, rows)`.
#[pyfunction]
fn load_features(path: PathBuf) -> PyResult<(String, Vec<Vec<f32>>)> {
    let seq = data::load_features(&path).map_err(py_err)?;
    let rows = (0..seq.n_frames()).map(|t| seq.data.row(t).to_vec()).collect();
    Ok((seq.video_id, rows))
}

#[pyfunction]
fn save_features(path: PathBuf, video_id: String, rows: Vec<Vec<f32>>) -> PyResult<()> {
    let seq = FeatureSequence::new(video_id, rows_to_tensor(rows)?).map_err(py_err)?;
    data::save_features(&path, &seq).map_err(py_err)
}

/// Writes a synthetic corpus under `out` and returns the coefficient digest.
#[pyfunction]
#[pyo3(signature = (out, seed=0, videos=20, min_frames=400, max_frames=600, dim=32))]
fn generate_synthetic(
    out: PathBuf,
    seed: u64,
    videos: usize,
    min_frames: usize,
    max_frames: usize,
    dim: usize,
) -> PyResult<String> {
    let cfg = SyntheticConfig {
        seed,
        n_videos: videos,
        min_frames,
        max_frames,
        dim,
        ..SyntheticConfig::default()
    };
    let gen = data::generate_synthetic_dataset(&cfg, &out).map_err(py_err)?;
    Ok(gen.digest())
}

/// CCC over the concatenation of all videos. `predictions` and `labels` are
/// lists of per-video `[n][2]` arrays; label frames outside `[-1, 1]` are skipped.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    predictions: Vec<Vec<Vec<f32>>>,
    labels: Vec<Vec<Vec<f32>>>,
) -> PyResult<Bound<'py, PyDict>> {
    if predictions.len() != labels.len() {
        return Err(PyValueError::new_err(format!(
            "{} prediction videos but {} label videos",
            predictions.len(),
            labels.len()
        )));
    }
    let mut videos = Vec::with_capacity(labels.len());
    for (p, l) in predictions.iter().zip(&labels) {
        let pred = VaSeries::from_pairs(&pairs_of(p, "predictions")?).to_tensor();
        videos.push((pred, VaSeries::from_pairs(&pairs_of(l, "labels")?)));
    }
    let refs: Vec<_> = videos.iter().map(|(p, l)| (p, l)).collect();
    let r = metrics::evaluate(&refs).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("ccc_valence", r.valence.ccc)?;
    d.set_item("ccc_arousal", r.arousal.ccc)?;
    d.set_item("p_va", r.p_va)?;
    d.set_item("n_valid", r.n_valid)?;
    Ok(d)
}

/// A trained model loaded from a checkpoint.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    model: layers::Model,
    window: usize,
    stride: usize,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(py_err)?;
        let model = ck.to_model(None).map_err(py_err)?;
        let mut t = TrainConfig::default();
        let keys = ck
            .config
            .iter()
            .filter(|(k, _)| *k == "window" || *k == "stride")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        t.apply_pairs(&keys).map_err(py_err)?;
        Ok(Self { model, window: t.window, stride: t.stride })
    }

    #[getter]
    fn in_dim(&self) -> usize {
        self.model.config.tcn.in_dim
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.model.params.named().iter().map(|(_, t)| t.numel()).sum()
    }

    #[getter]
    fn window(&self) -> usize {
        self.window
    }

    #[getter]
    fn stride(&self) -> usize {
        self.stride
    }

    /// Per-frame `(valence, arousal)` for a `[n][in_dim]` feature array.
    #[pyo3(signature = (features, window=None, stride=None))]
    fn predict(
        &self,
        py: Python<'_>,
        features: Vec<Vec<f32>>,
        window: Option<usize>,
        stride: Option<usize>,
    ) -> PyResult<Vec<(f32, f32)>> {
        let seq = FeatureSequence::new("input", rows_to_tensor(features)?).map_err(py_err)?;
        let (w, s) = (window.unwrap_or(self.window), stride.unwrap_or(self.stride));
        let pred = py
            .detach(|| predict_sequence(&self.model, &seq, w, s))
            .map_err(py_err)?;
        Ok(pred.data().chunks(2).map(|r| (r[0], r[1])).collect())
    }
}

#[pymodule(name = "mamba_va")]
fn mamba_va_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ccc, m)?)?;
    m.add_function(wrap_pyfunction!(p_va, m)?)?;
    m.add_function(wrap_pyfunction!(segment_video, m)?)?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(load_features, m)?)?;
    m.add_function(wrap_pyfunction!(save_features, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyModel>()?;
    Ok(())
}
