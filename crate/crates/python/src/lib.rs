//! Python bindings for `benignspoof_core`.
//!
//! Structured results (reports, tables) are returned as plain dicts and
//! lists; embeddings and models are wrapped as classes.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use benignspoof_core::acoustics::{self, AcousticConfig, AudioBuffer};
use benignspoof_core::classifier::{self, MlpModel};
use benignspoof_core::corpus;
use benignspoof_core::drift;
use benignspoof_core::embeddings::{self, EmbeddingSet};
use benignspoof_core::metrics::{self, Axis, BinaryScoreSet, ConfusionMatrix4};
use benignspoof_core::stats;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Convert any serializable value to Python objects through JSON.
fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn record_dict<'py>(py: Python<'py>, r: &corpus::UtteranceRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("utt_id", &r.utt_id)?;
    d.set_item("audio_path", r.audio_path.clone().unwrap_or_default())?;
    d.set_item("source", r.source.as_str())?;
    d.set_item("processing", r.processing.as_str())?;
    d.set_item("system", &r.system)?;
    d.set_item("pair_id", &r.pair_id)?;
    d.set_item("split", r.split.as_str())?;
    d.set_item("domain", &r.domain)?;
    d.set_item("four_way_label", r.four_way().index())?;
    Ok(d)
}

/// Parse and validate a manifest; returns a list of record dicts.
#[pyfunction]
fn parse_manifest(py: Python<'_>, path: &str) -> PyResult<Vec<Py<PyDict>>> {
    let records = corpus::parse_manifest(path).map_err(value_err)?;
    records.iter().map(|r| record_dict(py, r).map(Bound::unbind)).collect()
}

/// Four-way class counts of a manifest, in label order.
#[pyfunction]
fn class_histogram(path: &str) -> PyResult<[usize; 4]> {
    Ok(corpus::class_histogram(&corpus::parse_manifest(path).map_err(value_err)?))
}

#[pyfunction]
fn derive_four_way(source: &str, processing: &str) -> PyResult<usize> {
    let s: corpus::SourceLabel = source.parse().map_err(value_err)?;
    let p: corpus::ProcessingLabel = processing.parse().map_err(value_err)?;
    Ok(corpus::derive_four_way(s, p).index())
}

#[pyclass(name = "EmbeddingSet")]
#[derive(Clone)]
struct PyEmbeddingSet {
    inner: EmbeddingSet,
}

#[pymethods]
impl PyEmbeddingSet {
    #[new]
    fn new(model_tag: &str, dim: usize) -> PyResult<Self> {
        Ok(Self { inner: EmbeddingSet::new(model_tag, dim).map_err(value_err)? })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: embeddings::read_embfile(path).map_err(value_err)? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        embeddings::write_embfile(path, &self.inner).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn push(&mut self, utt_id: String, vector: Vec<f64>) -> PyResult<()> {
        self.inner.push(utt_id, vector).map_err(value_err)
    }

    fn get(&self, utt_id: &str) -> Option<Vec<f64>> {
        self.inner.get(utt_id).map(<[f64]>::to_vec)
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn model_tag(&self) -> String {
        self.inner.model_tag().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, utt_id: &str) -> bool {
        self.inner.contains(utt_id)
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingSet(tag={:?}, n={}, dim={})", self.inner.model_tag(), self.inner.len(), self.inner.dim())
    }
}

/// Concatenate sets sharing one key set; order follows the first set.
#[pyfunction]
fn concat_sets(sets: Vec<PyEmbeddingSet>) -> PyResult<PyEmbeddingSet> {
    let inner: Vec<EmbeddingSet> = sets.into_iter().map(|s| s.inner).collect();
    Ok(PyEmbeddingSet { inner: embeddings::concat_sets(&inner).map_err(value_err)? })
}

/// Mean shift over `(original, processed)` pairs: `(vector, mean_magnitude, magnitude_sd)`.
#[pyfunction]
fn mean_shift_vector(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> PyResult<(Vec<f64>, f64, f64)> {
    let refs: Vec<(&[f64], &[f64])> = pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let s = drift::mean_shift_vector(&refs).map_err(value_err)?;
    Ok((s.mean_shift, s.mean_magnitude, s.magnitude_sd))
}

#[pyfunction]
fn directional_consistency(delta_bona: Vec<f64>, delta_spoof: Vec<f64>) -> PyResult<f64> {
    drift::directional_consistency(&delta_bona, &delta_spoof).map_err(value_err)
}

/// 2-D principal component projection: `{utt_id: (x, y)}` and explained variances.
#[pyfunction]
fn pca_project_2d(py: Python<'_>, emb: &PyEmbeddingSet) -> PyResult<(PyObject, (f64, f64))> {
    let p = drift::pca_project_2d(&emb.inner).map_err(value_err)?;
    let d = PyDict::new_bound(py);
    for (id, x, y) in &p.coords {
        d.set_item(id, (x, y))?;
    }
    Ok((d.into_any().unbind(), (p.explained_variance[0], p.explained_variance[1])))
}

#[pyclass(name = "Mlp")]
#[derive(Clone)]
struct PyMlp {
    inner: MlpModel,
}

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (input_dim, hidden, n_classes, seed=0))]
    fn new(input_dim: usize, hidden: Vec<usize>, n_classes: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: classifier::init_mlp(input_dim, &hidden, n_classes, seed).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: classifier::load_checkpoint(path).map_err(value_err)?.0 })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        classifier::save_checkpoint(path, &self.inner, None).map_err(value_err)
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).map_err(value_err)
    }

    /// Four-way model with the binary head expanded.
    fn expand_to_four_way(&self) -> PyResult<Self> {
        Ok(Self { inner: classifier::expand_to_four_way(&self.inner).map_err(value_err)? })
    }

    /// Train on `(train, train_labels)` with early stopping on `(val, val_labels)`.
    /// `config` keys follow the training config fields; returns `(model, log)`.
    #[pyo3(signature = (train, train_labels, val, val_labels, config=None))]
    fn train(
        &self,
        py: Python<'_>,
        train: &PyEmbeddingSet,
        train_labels: Vec<usize>,
        val: &PyEmbeddingSet,
        val_labels: Vec<usize>,
        config: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<(Self, PyObject)> {
        let cfg: classifier::TrainConfig = match config {
            None => Default::default(),
            Some(d) => {
                let text: String = py.import_bound("json")?.call_method1("dumps", (d,))?.extract()?;
                serde_json::from_str(&text).map_err(value_err)?
            }
        };
        let tr = classifier::LabeledSet::new(train.inner.clone(), train_labels).map_err(value_err)?;
        let va = classifier::LabeledSet::new(val.inner.clone(), val_labels).map_err(value_err)?;
        let (model, log) = py.allow_threads(|| classifier::train(&self.inner, &tr, &va, &cfg)).map_err(value_err)?;
        Ok((Self { inner: model }, to_py(py, &log)?))
    }

    /// `{utt_id: probabilities}` for every entry of `emb`.
    fn predict(&self, py: Python<'_>, emb: &PyEmbeddingSet) -> PyResult<PyObject> {
        let t = classifier::predict_scores(&self.inner, &emb.inner).map_err(value_err)?;
        let d = PyDict::new_bound(py);
        for (id, row) in t.rows {
            d.set_item(id, row)?;
        }
        Ok(d.into_any().unbind())
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.inner.layer_dims()
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Final layer as `(weights rows, bias)`.
    fn head(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let l = self.inner.layers.last().expect("model has a layer");
        (l.weights.chunks(l.in_dim).map(<[f64]>::to_vec).collect(), l.bias.clone())
    }
}

/// Expand a binary head given as `(2 x H weights, 2 biases)`.
#[pyfunction]
fn expand_binary_head(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let h = weights.first().map_or(0, Vec::len);
    let flat: Vec<f64> = weights.concat();
    let (w, b) = classifier::expand_binary_head(&flat, &bias).map_err(value_err)?;
    Ok((w.chunks(h.max(1)).map(<[f64]>::to_vec).collect(), b))
}

/// Equal error rate and threshold; targets should score high.
#[pyfunction]
fn eer(target_scores: Vec<f64>, nontarget_scores: Vec<f64>) -> PyResult<(f64, f64)> {
    let entries = target_scores.into_iter().map(|s| (s, true)).chain(nontarget_scores.into_iter().map(|s| (s, false))).collect();
    metrics::eer(&BinaryScoreSet::new(entries, "target")).map_err(value_err)
}

#[pyfunction]
fn collapse_source_score(row: Vec<f64>) -> PyResult<f64> {
    metrics::collapse_source_score(&row).map_err(value_err)
}

#[pyfunction]
fn collapse_processed_score(row: Vec<f64>) -> PyResult<f64> {
    metrics::collapse_processed_score(&row).map_err(value_err)
}

/// Accuracy of a 4x4 confusion matrix along `axis` ("source", "processed" or "four_way").
#[pyfunction]
fn matrix_axis_accuracy(counts: [[u64; 4]; 4], axis: &str) -> PyResult<f64> {
    let axis = match axis {
        "source" => Axis::Source,
        "processed" => Axis::Processed,
        "four_way" => Axis::FourWay,
        other => return Err(PyValueError::new_err(format!("unknown axis {other:?}"))),
    };
    metrics::matrix_axis_accuracy(&ConfusionMatrix4 { counts }, axis).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (frame, sample_rate=16000, f_min=60.0, f_max=400.0, threshold=0.15))]
fn yin_f0(frame: Vec<f64>, sample_rate: u32, f_min: f64, f_max: f64, threshold: f64) -> PyResult<Option<f64>> {
    acoustics::yin_f0(&frame, sample_rate, (f_min, f_max), threshold).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (frame, f_target, sample_rate=16000))]
fn harmonic_amplitude(frame: Vec<f64>, f_target: f64, sample_rate: u32) -> PyResult<f64> {
    acoustics::harmonic_amplitude(&frame, sample_rate, f_target).map_err(value_err)
}

/// H1-H2 / H1-A3 for one utterance with default settings.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate=16000, utt_id="utt"))]
fn analyze_utterance(py: Python<'_>, samples: Vec<f64>, sample_rate: u32, utt_id: &str) -> PyResult<PyObject> {
    let audio = AudioBuffer::new(samples, sample_rate);
    let m = py.allow_threads(|| acoustics::analyze_utterance(utt_id, &audio, &AcousticConfig::default())).map_err(value_err)?;
    to_py(py, &m)
}

/// Balanced two-way ANOVA over `(level_a, level_b, y)` triples.
#[pyfunction]
fn two_way_anova(py: Python<'_>, values: Vec<(String, String, f64)>) -> PyResult<PyObject> {
    to_py(py, &stats::two_way_anova(&values).map_err(value_err)?)
}

#[pyfunction]
fn f_survival(f: f64, df1: f64, df2: f64) -> PyResult<f64> {
    stats::f_survival(f, df1, df2).map_err(value_err)
}

/// Upper tail of the studentized range; `df=None` means infinite.
#[pyfunction]
#[pyo3(signature = (q, k, df=None))]
fn studentized_range_sf(q: f64, k: usize, df: Option<f64>) -> PyResult<f64> {
    stats::studentized_range_sf(q, k, df.unwrap_or(f64::INFINITY)).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (means, ns, ms_error, df_error, alpha=0.05))]
fn tukey_hsd(py: Python<'_>, means: Vec<f64>, ns: Vec<usize>, ms_error: f64, df_error: f64, alpha: f64) -> PyResult<PyObject> {
    to_py(py, &stats::tukey_hsd(&means, &ns, ms_error, df_error, alpha).map_err(value_err)?)
}

/// Run the command-line interface with `args` (without the program name).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("benignspoof".to_string()).chain(args).collect();
    py.allow_threads(|| benignspoof_core::cli::run(argv))
}

#[pymodule]
pub fn benignspoof(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddingSet>()?;
    m.add_class::<PyMlp>()?;
    m.add_function(wrap_pyfunction!(parse_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(class_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(derive_four_way, m)?)?;
    m.add_function(wrap_pyfunction!(concat_sets, m)?)?;
    m.add_function(wrap_pyfunction!(mean_shift_vector, m)?)?;
    m.add_function(wrap_pyfunction!(directional_consistency, m)?)?;
    m.add_function(wrap_pyfunction!(pca_project_2d, m)?)?;
    m.add_function(wrap_pyfunction!(expand_binary_head, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_source_score, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_processed_score, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_axis_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(yin_f0, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_utterance, m)?)?;
    m.add_function(wrap_pyfunction!(two_way_anova, m)?)?;
    m.add_function(wrap_pyfunction!(f_survival, m)?)?;
    m.add_function(wrap_pyfunction!(studentized_range_sf, m)?)?;
    m.add_function(wrap_pyfunction!(tukey_hsd, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
