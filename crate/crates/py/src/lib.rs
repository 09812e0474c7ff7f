//! Python bindings: the encoder, the loss functions, exemplar selection, the
//! classifiers and whole-experiment runs.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use sclifd_core::classifier::{self, ForestConfig};
use sclifd_core::datasets::{self, Sample, SynthParams};
use sclifd_core::encoder::{self, Embedding, Encode, EncoderConfig, EncoderParams};
use sclifd_core::experiment::{self, ExperimentConfig};
use sclifd_core::losses::{self, ContrastiveBatch, LossConfig};
use sclifd_core::{memory, rng, session, Error};

create_exception!(sclifd, SclifdError, PyException);
create_exception!(sclifd, ConfigError, SclifdError);
create_exception!(sclifd, DataError, SclifdError);
create_exception!(sclifd, NumericalError, SclifdError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) => ConfigError::new_err(msg),
        Error::Data(_) | Error::Io { .. } => DataError::new_err(msg),
        Error::Numerical(_) => NumericalError::new_err(msg),
        Error::InvalidInput(_) => PyValueError::new_err(msg),
    }
}

fn batch(embeddings: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<ContrastiveBatch> {
    let embeddings = embeddings.into_iter().map(Embedding::normalized).collect();
    ContrastiveBatch::new(embeddings, labels).map_err(to_py)
}

fn rows(x: Vec<Vec<f64>>, y: Vec<usize>) -> PyResult<Vec<classifier::Row>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    Ok(x.into_iter().zip(y).collect())
}

/// `ceil(K / t)`.
#[pyfunction]
fn per_class_quota(capacity: usize, seen_classes: usize) -> PyResult<usize> {
    if capacity == 0 || seen_classes == 0 {
        return Err(PyValueError::new_err("capacity and seen_classes must be positive"));
    }
    Ok(memory::per_class_quota(capacity, seen_classes))
}

/// Arithmetic mean of per-session accuracies.
#[pyfunction]
fn aggregate_metrics(accuracies: Vec<f64>) -> PyResult<f64> {
    session::MetricSummary::from_accuracies(&accuracies)
        .map(|s| s.average)
        .map_err(to_py)
}

/// Embeddings are L2-normalised before the loss is evaluated.
#[pyfunction]
#[pyo3(signature = (embeddings, labels, temperature = 0.07))]
fn supervised_contrastive_loss(embeddings: Vec<Vec<f64>>, labels: Vec<usize>, temperature: f64) -> PyResult<f64> {
    let cfg = LossConfig::with_temperature(temperature);
    cfg.validate().map_err(to_py)?;
    losses::supervised_contrastive_loss(&batch(embeddings, labels)?, &cfg).map_err(to_py)
}

/// Views `2k` and `2k + 1` form the positive pairs.
#[pyfunction]
#[pyo3(signature = (embeddings, temperature = 0.07))]
fn self_supervised_contrastive_loss(embeddings: Vec<Vec<f64>>, temperature: f64) -> PyResult<f64> {
    let cfg = LossConfig::with_temperature(temperature);
    cfg.validate().map_err(to_py)?;
    let labels = (0..embeddings.len()).map(|i| i / 2).collect();
    losses::self_supervised_contrastive_loss(&batch(embeddings, labels)?, &cfg).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (teacher, student, temperature = 0.07))]
fn distillation_loss(teacher: Vec<Vec<f64>>, student: Vec<Vec<f64>>, temperature: f64) -> PyResult<f64> {
    let cfg = LossConfig::with_temperature(temperature);
    cfg.validate().map_err(to_py)?;
    let labels = vec![0; teacher.len()];
    let t = batch(teacher, labels.clone())?;
    let s = batch(student, labels)?;
    losses::distillation_loss(&t, &s, &cfg).map_err(to_py)
}

/// Selection order of `m` exemplars over raw embeddings. `strategy` is one of
/// `mes`, `herding` or `mixed`.
#[pyfunction]
fn selection_order(strategy: &str, embeddings: Vec<Vec<f64>>, m: usize) -> PyResult<Vec<usize>> {
    let order = match strategy {
        "mes" => memory::mes_order(&embeddings, m),
        "herding" => memory::herding_order(&embeddings, m),
        "mixed" => memory::mixed_order(&embeddings, m),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown deterministic strategy {other:?}"
            )))
        }
    };
    order.map_err(to_py)
}

#[pyfunction]
fn class_mean(embeddings: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    memory::class_mean(&embeddings).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (features, seed = 0))]
fn augment_segment_shuffle(features: Vec<f64>, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, rng::streams::TRAINING);
    datasets::augment_segment_shuffle(&Sample::new(features, 0), &mut r).features
}

/// Returns `(features, labels)`.
#[pyfunction]
#[pyo3(signature = (counts, dim = 24, means_scale = 3.0, noise_sigma = 1.0, seed = 0))]
fn synth_gaussian_stream(
    counts: Vec<usize>,
    dim: usize,
    means_scale: f64,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let ds = datasets::synth_gaussian_stream(&SynthParams {
        class_count: counts.len(),
        dim,
        means_scale,
        noise_sigma,
        counts,
        seed,
    })
    .map_err(to_py)?;
    Ok(ds
        .samples()
        .iter()
        .map(|s| (s.features.clone(), s.label))
        .unzip())
}

/// The MLP feature extractor.
#[pyclass(module = "sclifd", frozen)]
struct Encoder {
    params: EncoderParams,
}

#[pymethods]
impl Encoder {
    #[new]
    #[pyo3(signature = (input_dim, hidden_dims = vec![64, 64], embed_dim = 16, seed = 0))]
    fn new(input_dim: usize, hidden_dims: Vec<usize>, embed_dim: usize, seed: u64) -> PyResult<Self> {
        let config = EncoderConfig {
            hidden_dims,
            embed_dim,
            ..EncoderConfig::with_defaults(input_dim, seed)
        };
        Ok(Self {
            params: encoder::init_encoder(&config).map_err(to_py)?,
        })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    #[getter]
    fn embed_dim(&self) -> usize {
        self.params.embed_dim()
    }

    /// Unit-norm embeddings, one per input row.
    fn encode(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(self
            .params
            .encode_batch(&features)
            .map_err(to_py)?
            .into_iter()
            .map(Embedding::into_vec)
            .collect())
    }

    fn to_json(&self) -> String {
        self.params.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            params: EncoderParams::from_json(text).map_err(to_py)?,
        })
    }
}

#[pyclass(module = "sclifd", frozen)]
struct BalancedForest {
    inner: classifier::BalancedForest,
}

#[pymethods]
impl BalancedForest {
    #[staticmethod]
    #[pyo3(signature = (x, y, n_trees = 100, mtry = None, seed = 0))]
    fn fit(x: Vec<Vec<f64>>, y: Vec<usize>, n_trees: usize, mtry: Option<usize>, seed: u64) -> PyResult<Self> {
        let config = ForestConfig {
            n_trees,
            mtry,
            ..Default::default()
        };
        Ok(Self {
            inner: classifier::brf_fit_with(&rows(x, y)?, &config, seed).map_err(to_py)?,
        })
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        x.iter()
            .map(|v| classifier::brf_predict(&self.inner, v).map_err(to_py))
            .collect()
    }

    /// Per tree, `(class, rows drawn)` pairs of its bootstrap sample.
    fn bootstrap_counts(&self) -> Vec<Vec<(usize, usize)>> {
        self.inner.bootstrap_counts().to_vec()
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees().len()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

#[pyclass(module = "sclifd", frozen)]
struct FcClassifier {
    inner: classifier::FcClassifier,
}

#[pymethods]
impl FcClassifier {
    #[staticmethod]
    #[pyo3(signature = (x, y, epochs = 500, lr = 0.001, seed = 0))]
    fn fit(x: Vec<Vec<f64>>, y: Vec<usize>, epochs: usize, lr: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: classifier::fcc_fit(&rows(x, y)?, epochs, lr, seed).map_err(to_py)?,
        })
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        x.iter()
            .map(|v| classifier::fcc_predict(&self.inner, v).map_err(to_py))
            .collect()
    }

    fn probabilities(&self, x: Vec<f64>) -> Vec<f64> {
        self.inner.probabilities(&x)
    }
}

/// The default experiment configuration as TOML.
#[pyfunction]
fn defaults_toml() -> String {
    experiment::defaults_toml()
}

/// Runs an experiment described by TOML text (defaults when `None`) and
/// returns the report as JSON text. Nothing is written to disk.
#[pyfunction]
#[pyo3(signature = (config_toml = None, seed = None))]
fn run_experiment(py: Python<'_>, config_toml: Option<&str>, seed: Option<u64>) -> PyResult<String> {
    let mut config = match config_toml {
        Some(text) => ExperimentConfig::from_toml_str(text).map_err(to_py)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate().map_err(to_py)?;
    let report = py
        .detach(|| experiment::run_experiment(&config))
        .map_err(to_py)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

#[pymodule]
fn sclifd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("SclifdError", py.get_type::<SclifdError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<Encoder>()?;
    m.add_class::<BalancedForest>()?;
    m.add_class::<FcClassifier>()?;
    m.add_function(wrap_pyfunction!(per_class_quota, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(supervised_contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(self_supervised_contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(distillation_loss, m)?)?;
    m.add_function(wrap_pyfunction!(selection_order, m)?)?;
    m.add_function(wrap_pyfunction!(class_mean, m)?)?;
    m.add_function(wrap_pyfunction!(augment_segment_shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(synth_gaussian_stream, m)?)?;
    m.add_function(wrap_pyfunction!(defaults_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
