//! Python module `cmdiad`: feature maps and the CMFT format, coreset memory
//! banks, nearest-neighbour scoring, metrics, synthetic data and the
//! end-to-end detector.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cmdiad_core::bank::{build_bank, coreset_select, BankConfig, DistanceMetric, PatchSet};
use cmdiad_core::data::cmft::{load_feature_map, save_feature_map};
use cmdiad_core::data::layout::{load_sample, scan_split, write_split, LoadOptions};
use cmdiad_core::data::{generate_synthetic_dataset, Label, Modality, SynthConfig};
use cmdiad_core::extractor::Extractors;
use cmdiad_core::metrics::{self, DEFAULT_FPR_LIMIT};
use cmdiad_core::pipeline::{evaluate, Detector, DetectorConfig};
use cmdiad_core::score::{phi_psi, AnomalyResult, InferenceMode};
use cmdiad_core::{data, Error};

pub mod convert;

use convert::{flatten_patches, mask_from_rows, mask_to_rows, score_map_from_rows, score_map_to_rows};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Lookup(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        e @ (Error::Io { .. } | Error::File { .. }) => PyIOError::new_err(e.to_string()),
        e @ (Error::Degenerate(_) | Error::NoPlane { .. } | Error::Image(_)) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| PyValueError::new_err(format!("{what} `{s}`: {e}")))
}

fn from_json<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(T::default()),
    }
}

/// Grid of feature vectors, row-major, `rows x cols x dim` float32.
#[pyclass(name = "FeatureMap", module = "cmdiad", skip_from_py_object)]
#[derive(Clone)]
pub struct PyFeatureMap {
    inner: data::FeatureMap,
}

#[pymethods]
impl PyFeatureMap {
    #[new]
    fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> PyResult<Self> {
        let inner = data::FeatureMap::new(rows, cols, dim, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    /// Flat row-major values.
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn cell(&self, row: usize, col: usize) -> PyResult<Vec<f32>> {
        let (r, c, _) = self.inner.shape();
        if row >= r || col >= c {
            return Err(PyValueError::new_err(format!("cell ({row}, {col}) outside {r}x{c}")));
        }
        Ok(self.inner.cell(row, col).to_vec())
    }

    /// Writes the map as a CMFT file; returns the byte count.
    fn save(&self, path: PathBuf) -> PyResult<u64> {
        save_feature_map(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_feature_map(path).map_err(to_py)?,
        })
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let (r, c, d) = self.inner.shape();
        format!("FeatureMap({r}x{c}x{d})")
    }
}

/// One object: features (and optionally a ground-truth mask) with its label.
#[pyclass(name = "Sample", module = "cmdiad", skip_from_py_object)]
#[derive(Clone)]
pub struct PySample {
    inner: data::Sample,
}

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (id, label, pc_features=None, rgb_features=None, gt_mask=None))]
    fn new(
        id: String,
        label: &str,
        pc_features: Option<PyRef<'_, PyFeatureMap>>,
        rgb_features: Option<PyRef<'_, PyFeatureMap>>,
        gt_mask: Option<Vec<Vec<bool>>>,
    ) -> PyResult<Self> {
        let label = match label {
            "normal" => Label::Normal,
            "anomalous" => Label::Anomalous,
            "unknown" => Label::Unknown,
            other => return Err(PyValueError::new_err(format!("label `{other}`: expected normal, anomalous or unknown"))),
        };
        let mut inner = data::Sample::new(id, label);
        inner.pc_features = pc_features.map(|f| f.inner.clone());
        inner.rgb_features = rgb_features.map(|f| f.inner.clone());
        inner.gt_mask = gt_mask.map(mask_from_rows).transpose().map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn label(&self) -> String {
        serde_json::to_value(self.inner.label).unwrap().as_str().unwrap().to_string()
    }

    #[getter]
    fn pc_features(&self) -> Option<PyFeatureMap> {
        self.inner.pc_features.clone().map(|inner| PyFeatureMap { inner })
    }

    #[getter]
    fn rgb_features(&self) -> Option<PyFeatureMap> {
        self.inner.rgb_features.clone().map(|inner| PyFeatureMap { inner })
    }

    #[getter]
    fn gt_mask(&self) -> Option<Vec<Vec<bool>>> {
        self.inner.gt_mask.as_ref().map(mask_to_rows)
    }

    /// Copy without `modality` (features and raw input).
    fn without(&self, modality: &str) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        match parse::<Modality>(modality, "modality")? {
            Modality::Rgb => {
                inner.rgb = None;
                inner.rgb_features = None;
            }
            Modality::Pc => {
                inner.pc = None;
                inner.pc_features = None;
            }
        }
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("Sample({:?}, {})", self.inner.id, self.label())
    }
}

fn samples(list: &[PyRef<'_, PySample>]) -> Vec<data::Sample> {
    list.iter().map(|s| s.inner.clone()).collect()
}

fn wrap_samples(list: Vec<data::Sample>) -> Vec<PySample> {
    list.into_iter().map(|inner| PySample { inner }).collect()
}

/// Coreset memory bank of one modality.
#[pyclass(name = "MemoryBank", module = "cmdiad")]
pub struct PyMemoryBank {
    inner: cmdiad_core::bank::MemoryBank,
}

#[pymethods]
impl PyMemoryBank {
    /// Greedy coreset over every foreground patch of `maps`.
    #[staticmethod]
    #[pyo3(signature = (maps, modality="pc", fraction=0.1, metric="l2", seed=0))]
    fn build(maps: Vec<PyRef<'_, PyFeatureMap>>, modality: &str, fraction: f64, metric: &str, seed: u64) -> PyResult<Self> {
        let cfg = BankConfig {
            fraction,
            metric: parse(metric, "metric")?,
            seed,
            ..BankConfig::default()
        };
        let modality = parse(modality, "modality")?;
        let ids: Vec<String> = (0..maps.len()).map(|i| format!("map{i}")).collect();
        let pairs: Vec<(&str, &data::FeatureMap)> = ids.iter().map(String::as_str).zip(maps.iter().map(|m| &m.inner)).collect();
        Ok(Self {
            inner: build_bank(&pairs, &cfg, modality).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cmdiad_core::bank::MemoryBank::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn metric(&self) -> &'static str {
        self.inner.metric.as_str()
    }

    #[getter]
    fn source_checksum(&self) -> String {
        self.inner.source_checksum.clone()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("row {i} of {}", self.inner.len())));
        }
        Ok(self.inner.row(i).to_vec())
    }

    /// `(phi, psi)`: the per-cell distance map as nested lists and the image
    /// score (maximum over cells).
    fn score(&self, features: PyRef<'_, PyFeatureMap>) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let (map, psi) = phi_psi(&features.inner, &self.inner).map_err(to_py)?;
        Ok((score_map_to_rows(&map), psi.score))
    }
}

/// Indices of a greedy max-min coreset of `patches`.
#[pyfunction]
#[pyo3(signature = (patches, fraction, metric="l2", seed=0))]
fn coreset(patches: Vec<Vec<f32>>, fraction: f64, metric: &str, seed: u64) -> PyResult<Vec<usize>> {
    let (dim, flat) = flatten_patches(patches).map_err(to_py)?;
    let set = PatchSet::from_rows(dim, flat).map_err(to_py)?;
    coreset_select(&set, fraction, parse::<DistanceMetric>(metric, "metric")?, None, seed).map_err(to_py)
}

/// Area under the ROC curve; `labels` are true for anomalies.
#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auroc(&scores, &labels).map_err(to_py)
}

/// Normalized area under the per-region-overlap curve up to `fpr_limit`.
#[pyfunction]
#[pyo3(signature = (maps, masks, fpr_limit=DEFAULT_FPR_LIMIT))]
fn aupro(maps: Vec<Vec<Vec<f64>>>, masks: Vec<Vec<Vec<bool>>>, fpr_limit: f64) -> PyResult<f64> {
    let maps = maps.into_iter().map(score_map_from_rows).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    let masks = masks.into_iter().map(mask_from_rows).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    metrics::aupro(&maps, &masks, fpr_limit).map_err(to_py)
}

/// Synthetic feature-level dataset `(train, test)`; `config` is a JSON
/// object overriding generator defaults.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn synthetic_dataset(py: Python<'_>, config: Option<&str>) -> PyResult<(Vec<PySample>, Vec<PySample>)> {
    let cfg: SynthConfig = from_json(config)?;
    let (train, test) = py.detach(|| generate_synthetic_dataset(&cfg)).map_err(to_py)?;
    Ok((wrap_samples(train), wrap_samples(test)))
}

/// Samples of `<root>/<class>/<split>` in sorted id order.
#[pyfunction]
fn load_split(py: Python<'_>, root: PathBuf, class: &str, split: &str) -> PyResult<Vec<PySample>> {
    let loaded = py.detach(|| {
        scan_split(&root, class, split)?
            .iter()
            .map(|e| load_sample(e, LoadOptions::default()))
            .collect::<Result<Vec<_>, _>>()
    });
    Ok(wrap_samples(loaded.map_err(to_py)?))
}

/// Writes `samples` as `<root>/<class>/<split>`; returns the sample ids.
#[pyfunction]
fn save_split(root: PathBuf, class: &str, split: &str, samples_: Vec<PyRef<'_, PySample>>) -> PyResult<Vec<String>> {
    let entries = write_split(&root, class, split, &samples(&samples_)).map_err(to_py)?;
    Ok(entries.iter().map(|e| e.id()).collect())
}

/// Scores of one sample.
#[pyclass(name = "AnomalyResult", module = "cmdiad")]
pub struct PyAnomalyResult {
    inner: AnomalyResult,
}

#[pymethods]
impl PyAnomalyResult {
    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn image_score(&self) -> f64 {
        self.inner.image_score
    }

    #[getter]
    fn pixel_map(&self) -> Vec<Vec<f64>> {
        score_map_to_rows(&self.inner.pixel_map)
    }

    /// Image score of one modality before fusion, if it was scored.
    fn psi(&self, modality: &str) -> PyResult<Option<f64>> {
        Ok(self.inner.scores(parse(modality, "modality")?).map(|s| s.psi.score))
    }

    /// Whether `modality` was hallucinated rather than observed.
    fn hallucinated(&self, modality: &str) -> PyResult<Option<bool>> {
        Ok(self.inner.scores(parse(modality, "modality")?).map(|s| s.hallucinated))
    }

    fn __repr__(&self) -> String {
        format!("AnomalyResult({:?}, {:.6})", self.inner.id, self.inner.image_score)
    }
}

/// Memory banks, fusion and (in MTFI mode) the distillation network.
#[pyclass(name = "Detector", module = "cmdiad")]
pub struct PyDetector {
    inner: Detector,
}

#[pymethods]
impl PyDetector {
    /// Fits on normal training samples. `mode` is single-pc, single-rgb, dual
    /// or mtfi-<route>-<main>; `config` is a JSON detector configuration.
    #[staticmethod]
    #[pyo3(signature = (train, mode="mtfi-FtoF-pc", config=None, extractor_seed=0))]
    fn fit(
        py: Python<'_>,
        train: Vec<PyRef<'_, PySample>>,
        mode: &str,
        config: Option<&str>,
        extractor_seed: u64,
    ) -> PyResult<Self> {
        let mut cfg: DetectorConfig = from_json(config)?;
        cfg.mode = parse::<InferenceMode>(mode, "mode")?;
        let train = samples(&train);
        let inner = py
            .detach(|| Detector::fit(&train, Extractors::synthetic(extractor_seed), cfg))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Detector::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.config.mode.to_string()
    }

    /// Per-epoch training loss, when the detector trained a network.
    fn losses(&self) -> Option<Vec<f64>> {
        self.inner.training.as_ref().map(|t| t.losses.clone())
    }

    fn infer(&self, sample: PyRef<'_, PySample>) -> PyResult<PyAnomalyResult> {
        Ok(PyAnomalyResult {
            inner: self.inner.infer(&sample.inner).map_err(to_py)?,
        })
    }

    fn infer_all(&self, py: Python<'_>, samples_: Vec<PyRef<'_, PySample>>) -> PyResult<Vec<PyAnomalyResult>> {
        let list = samples(&samples_);
        let results = py.detach(|| self.inner.infer_all(&list)).map_err(to_py)?;
        Ok(results.into_iter().map(|inner| PyAnomalyResult { inner }).collect())
    }
}

/// Metrics of one class as a dict with i_auroc, p_auroc and aupro (the
/// pixel metrics are None without ground-truth masks).
#[pyfunction]
#[pyo3(name = "evaluate", signature = (class_name, results, samples_, fpr_limit=DEFAULT_FPR_LIMIT))]
fn evaluate_py<'py>(
    py: Python<'py>,
    class_name: &str,
    results: Vec<PyRef<'_, PyAnomalyResult>>,
    samples_: Vec<PyRef<'_, PySample>>,
    fpr_limit: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let results: Vec<AnomalyResult> = results.iter().map(|r| r.inner.clone()).collect();
    let m = evaluate(class_name, &results, &samples(&samples_), fpr_limit).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("class", m.class)?;
    out.set_item("i_auroc", m.i_auroc)?;
    out.set_item("p_auroc", m.p_auroc)?;
    out.set_item("aupro", m.aupro)?;
    Ok(out)
}

#[pymodule]
fn cmdiad(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFeatureMap>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyMemoryBank>()?;
    m.add_class::<PyAnomalyResult>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(coreset, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aupro, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_split, m)?)?;
    m.add_function(wrap_pyfunction!(save_split, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_py, m)?)?;
    Ok(())
}
