//! Python bindings for the emofreq pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use emofreq::evaluation::{self, MetricMode, ReportFormat};
use emofreq::featurestore::{self, LabeledImage};
use emofreq::ingest::{EmotionLabel, GrayImage};
use emofreq::learners::{self, MlpConfig, RfConfig};
use emofreq::pipeline::{self, ModelChoice, PipelineConfig};
use emofreq::spectral::{self, FeatureMode, OrientationPolicy};
use emofreq::synth::{self, SynthSpec};

fn py_err(e: emofreq::Error) -> PyErr {
    let msg = format!("[{}] {e}", e.kind());
    match e {
        emofreq::Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse_label(name: &str) -> PyResult<EmotionLabel> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown emotion `{name}`")))
}

fn parse_mode(name: &str) -> PyResult<MetricMode> {
    match name {
        "paper" => Ok(MetricMode::Paper),
        "standard" => Ok(MetricMode::Standard),
        _ => Err(PyValueError::new_err(format!("unknown metric mode `{name}`"))),
    }
}

/// Narrow-band kernel bank parameters.
#[pyclass(name = "KernelParams", from_py_object)]
#[derive(Clone)]
struct PyKernelParams {
    inner: spectral::KernelParams,
}

#[pymethods]
impl PyKernelParams {
    #[new]
    #[pyo3(signature = (p=25, b=2, start=14, stride=2, orientation="horizontal", keep_dc=false))]
    fn new(p: usize, b: usize, start: usize, stride: usize, orientation: &str, keep_dc: bool) -> PyResult<Self> {
        let orientation_policy = match orientation {
            "horizontal" => OrientationPolicy::AllHorizontal,
            "vertical" => OrientationPolicy::AllVertical,
            "alternating" => OrientationPolicy::Alternating,
            other => return Err(PyValueError::new_err(format!("unknown orientation `{other}`"))),
        };
        Ok(Self {
            inner: spectral::KernelParams {
                p,
                b,
                start,
                stride,
                orientation_policy,
                keep_dc,
            },
        })
    }

    fn offsets(&self) -> Vec<usize> {
        self.inner.offsets()
    }

    /// Row-major 0/1 masks over a `size` x `size` centered spectrum.
    fn masks(&self, size: usize) -> PyResult<Vec<Vec<u8>>> {
        let kernels = spectral::make_kernels(&self.inner, (size, size)).map_err(py_err)?;
        Ok(kernels.iter().map(|k| k.mask()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "KernelParams(p={}, b={}, start={}, stride={})",
            self.inner.p, self.inner.b, self.inner.start, self.inner.stride
        )
    }
}

/// Real-part band images of a row-major grayscale image in `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (pixels, width, height, params, magnitude=false))]
fn band_images(
    pixels: Vec<f64>,
    width: usize,
    height: usize,
    params: &PyKernelParams,
    magnitude: bool,
) -> PyResult<Vec<Vec<f64>>> {
    let img = GrayImage::new(width, height, pixels).map_err(py_err)?;
    let kernels = spectral::make_kernels(&params.inner, (width, height)).map_err(py_err)?;
    let plan = spectral::Fft2Plan::new(width, height).map_err(py_err)?;
    let mode = if magnitude { FeatureMode::Magnitude } else { FeatureMode::Real };
    Ok(plan
        .band_images(&img, &kernels)
        .map_err(py_err)?
        .iter()
        .map(|b| b.values(mode))
        .collect())
}

/// Per-pixel feature table: one row per pixel, one column per kernel.
#[pyclass(name = "FeatureTable")]
struct PyFeatureTable {
    inner: emofreq::FeatureTable,
}

#[pymethods]
impl PyFeatureTable {
    /// Builds the table from `(pixels, subject, emotion)` triples of square images.
    #[staticmethod]
    #[pyo3(signature = (images, size, params, magnitude=false))]
    fn from_images(images: Vec<(Vec<f64>, u8, String)>, size: usize, params: &PyKernelParams, magnitude: bool) -> PyResult<Self> {
        let labeled = images
            .into_iter()
            .map(|(pixels, subject, emotion)| {
                Ok(LabeledImage {
                    image: GrayImage::new(size, size, pixels).map_err(py_err)?,
                    subject,
                    label: parse_label(&emotion)?,
                })
            })
            .collect::<PyResult<Vec<_>>>()?;
        let kernels = spectral::make_kernels(&params.inner, (size, size)).map_err(py_err)?;
        let mode = if magnitude { FeatureMode::Magnitude } else { FeatureMode::Real };
        let inner = featurestore::build_from_images(&labeled, &kernels, mode).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: emofreq::FeatureTable::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn labels(&self) -> Vec<&'static str> {
        self.inner.labels().iter().map(|l| l.name()).collect()
    }

    fn label_counts(&self) -> [usize; 5] {
        self.inner.label_counts()
    }

    /// Stratified subsample, then the seeded 80:20 (by default) pixel split.
    #[pyo3(signature = (ratio=0.8, seed=42, row_fraction=1.0))]
    fn split(&self, ratio: f64, seed: u64, row_fraction: f64) -> PyResult<(Self, Self)> {
        let sampled = featurestore::stratified_subsample(&self.inner, row_fraction, seed).map_err(py_err)?;
        let spec = evaluation::SplitSpec {
            ratio,
            seed,
            ..Default::default()
        };
        let (train, test) = evaluation::split_domain(&sampled, &spec).map_err(py_err)?;
        Ok((Self { inner: train }, Self { inner: test }))
    }
}

/// A trained random forest or feed-forward network.
#[pyclass(name = "Model")]
struct PyModel {
    inner: learners::TrainedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (table, n_trees=100, max_depth=None, seed=42))]
    fn train_forest(table: &PyFeatureTable, n_trees: usize, max_depth: Option<usize>, seed: u64) -> PyResult<Self> {
        let cfg = RfConfig {
            n_trees,
            max_depth,
            seed,
            ..RfConfig::default()
        };
        Ok(Self {
            inner: learners::train_forest(&table.inner, &cfg).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (table, epochs=75, batch_size=256, learning_rate=1e-3, seed=42))]
    fn train_network(table: &PyFeatureTable, epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> PyResult<Self> {
        let cfg = MlpConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..MlpConfig::default()
        };
        Ok(Self {
            inner: learners::train_network(&table.inner, &cfg).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: learners::TrainedModel::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    fn predict(&self, table: &PyFeatureTable) -> PyResult<Vec<&'static str>> {
        let preds = self.inner.predict_table(&table.inner).map_err(py_err)?;
        Ok(preds.labels.iter().map(|l| l.name()).collect())
    }

    /// JSON summary of the model.
    fn describe(&self) -> String {
        self.inner.describe().to_string()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.short_name()
    }
}

type Counts = (u64, u64, u64, u64);

/// One-vs-rest counts per emotion as `{emotion: (tp, fp, tn, fn)}`.
#[pyfunction]
fn confusion(preds: Vec<String>, truth: Vec<String>) -> PyResult<BTreeMap<&'static str, Counts>> {
    let p = preds.iter().map(|s| parse_label(s)).collect::<PyResult<Vec<_>>>()?;
    let t = truth.iter().map(|s| parse_label(s)).collect::<PyResult<Vec<_>>>()?;
    let c = evaluation::confusion(&p, &t).map_err(py_err)?;
    Ok(EmotionLabel::ALL
        .iter()
        .map(|&l| {
            let k = c.get(l);
            (l.name(), (k.tp, k.fp, k.tn, k.fn_))
        })
        .collect())
}

/// Renders the per-emotion table for predictions against truth.
#[pyfunction]
#[pyo3(signature = (preds, truth, mode="paper", format="text", model=None))]
fn report(preds: Vec<String>, truth: Vec<String>, mode: &str, format: &str, model: Option<String>) -> PyResult<String> {
    let p = preds.iter().map(|s| parse_label(s)).collect::<PyResult<Vec<_>>>()?;
    let t = truth.iter().map(|s| parse_label(s)).collect::<PyResult<Vec<_>>>()?;
    let c = evaluation::confusion(&p, &t).map_err(py_err)?;
    let mut r = evaluation::metrics(&c, parse_mode(mode)?);
    if let Some(m) = model {
        r = r.with_model(m);
    }
    let format: ReportFormat = format.parse().map_err(py_err)?;
    Ok(evaluation::report(&[r], format))
}

/// Writes the synthetic corpus to `directory`; returns the written paths.
#[pyfunction]
#[pyo3(signature = (directory, n_subjects=15, amplitude=0.15, noise_std=0.01, seed=7))]
fn generate_synth(directory: PathBuf, n_subjects: usize, amplitude: f64, noise_std: f64, seed: u64) -> PyResult<Vec<PathBuf>> {
    let spec = SynthSpec {
        n_subjects,
        amplitude,
        noise_std,
        seed,
        ..SynthSpec::default()
    };
    let corpus = synth::generate(&spec).map_err(py_err)?;
    let manifest = corpus.write(&directory).map_err(py_err)?;
    Ok(manifest.entries.into_iter().map(|e| e.path).collect())
}

/// Runs ingest, kernels, extract, train and eval for one model over a
/// JSON configuration; returns the metrics table as text.
#[pyfunction]
#[pyo3(signature = (config_json, model="rf"))]
fn run_pipeline(config_json: &str, model: &str) -> PyResult<String> {
    let mut cfg: PipelineConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.model = match model {
        "rf" => ModelChoice::Rf,
        "ann" => ModelChoice::Ann,
        other => return Err(PyValueError::new_err(format!("unknown model `{other}`"))),
    };
    pipeline::run_ingest(&cfg).map_err(py_err)?;
    pipeline::run_kernels(&cfg, None).map_err(py_err)?;
    pipeline::run_extract(&cfg, None).map_err(py_err)?;
    pipeline::run_train(&cfg).map_err(py_err)?;
    let record = pipeline::run_eval(&cfg).map_err(py_err)?;
    Ok(evaluation::report(&[record.report], ReportFormat::Text))
}

#[pymodule]
#[pyo3(name = "emofreq")]
fn emofreq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyFeatureTable>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(band_images, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("EMOTIONS", EmotionLabel::ALL.iter().map(|l| l.name()).collect::<Vec<_>>())?;
    Ok(())
}
