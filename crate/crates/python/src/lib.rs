//! Python bindings. Matrices cross the boundary as lists of row lists.

use ::dcp::alignment as align;
use ::dcp::datasets::{self as ds, LabeledDataset, ShiftSpec};
use ::dcp::pseudo_label::{self as pl, BranchView, ThresholdState};
use ::dcp::trainer::{self as tr, Checkpoint, MetricsRecord, Seeds, TrainConfig};
use ::dcp::verification::{run_gradcheck, LossKind};
use ::dcp::{DcpError, Graph, Tensor};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: DcpError) -> PyErr {
    match e {
        DcpError::Io(io) => PyIOError::new_err(io.to_string()),
        DcpError::Diverged { .. } | DcpError::NonFinite(_) | DcpError::DegenerateGeometry(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(err)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// A labelled feature matrix from one domain.
#[pyclass(name = "Dataset", module = "dcp")]
pub struct PyDataset {
    inner: LabeledDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, labels, domain, name = "dataset".to_string()))]
    fn new(features: Vec<Vec<f64>>, labels: Vec<i64>, domain: &str, name: String) -> PyResult<Self> {
        let domain = match domain {
            "s" | "source" => ds::Domain::Source,
            "t" | "target" => ds::Domain::Target,
            other => return Err(PyValueError::new_err(format!("unknown domain {other:?}"))),
        };
        let inner = LabeledDataset::new(tensor(features)?, labels, domain, name).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.features())
    }

    /// Ground truth, for evaluation only.
    #[getter]
    fn labels(&self) -> Vec<i64> {
        self.inner.evaluation_labels().to_vec()
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.inner.domain().tag()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ds::save_embeddings(&self.inner, path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ds::load_embeddings(path).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, domain={:?}, rows={}, dim={})",
            self.inner.name(),
            self.inner.domain().tag(),
            self.inner.len(),
            self.inner.dim()
        )
    }
}

/// A trained (or freshly initialized) model with its optimizer state.
#[pyclass(name = "Model", module = "dcp")]
pub struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        tr::predict_labels(&self.inner.state, &tensor(features)?).map_err(err)
    }

    fn evaluate<'py>(&self, py: Python<'py>, dataset: PyRef<'_, PyDataset>) -> PyResult<Bound<'py, PyDict>> {
        let r = tr::evaluate(&self.inner.state, &dataset.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("accuracy", r.accuracy)?;
        d.set_item("per_class", r.per_class.iter().map(|c| c.accuracy).collect::<Vec<_>>())?;
        d.set_item("counts", r.per_class.iter().map(|c| c.count).collect::<Vec<_>>())?;
        d.set_item("confusion", r.confusion)?;
        Ok(d)
    }

    #[getter]
    fn iteration(&self) -> u64 {
        self.inner.state.thresholds.t
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.state.classes
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::from_json(text).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(path).map_err(err)?,
        })
    }
}

fn record_dict<'py>(py: Python<'py>, r: &MetricsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("T", r.t)?;
    d.set_item("l_d", r.l_d)?;
    d.set_item("l_g", r.l_g)?;
    d.set_item("l_c1", r.l_c1)?;
    d.set_item("l_c2", r.l_c2)?;
    d.set_item("l_cc", r.l_cc)?;
    d.set_item("l_cs", r.l_cs)?;
    d.set_item("tau_adv", r.tau_adv)?;
    d.set_item("tau_clu", r.tau_clu)?;
    d.set_item("n_selected", r.n_selected)?;
    d.set_item("pseudo_precision", r.pseudo_precision)?;
    d.set_item("source_acc", r.source_acc)?;
    d.set_item("target_acc", r.target_acc)?;
    Ok(d)
}

#[pyfunction]
fn tau_adv(t: u64) -> f64 {
    pl::tau_adv(t)
}

#[pyfunction]
fn tau_clu(t: u64) -> f64 {
    pl::tau_clu(t)
}

#[pyfunction]
#[pyo3(signature = (k=3, dim=2, n_per_class=200, rotation=0.0, translation=vec![], sigma=0.6, seed=0))]
fn gen_blobs(
    k: usize,
    dim: usize,
    n_per_class: usize,
    rotation: f64,
    translation: Vec<f64>,
    sigma: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let (s, t) = ds::gen_blobs(&ShiftSpec {
        classes: k,
        dim,
        n_per_class,
        rotation,
        translation,
        noise_sigma: sigma,
        seed,
    })
    .map_err(err)?;
    Ok((PyDataset { inner: s }, PyDataset { inner: t }))
}

#[pyfunction]
#[pyo3(signature = (n_per_class=200, rotation=0.0, sigma=0.1, seed=0))]
fn gen_two_moons_shift(n_per_class: usize, rotation: f64, sigma: f64, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
    let (s, t) = ds::gen_two_moons_shift(n_per_class, rotation, sigma, seed).map_err(err)?;
    Ok((PyDataset { inner: s }, PyDataset { inner: t }))
}

/// Per-class means; returns `(centroids, counts)`.
#[pyfunction]
fn compute_centroids(features: Vec<Vec<f64>>, labels: Vec<i64>, k: usize) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let bank = align::compute_centroids(&tensor(features)?, &labels, k).map_err(err)?;
    Ok((rows(&bank.centroids), bank.counts))
}

#[pyfunction]
#[pyo3(signature = (features, init_centroids, max_iters=20))]
fn kmeans_assign<'py>(
    py: Python<'py>,
    features: Vec<Vec<f64>>,
    init_centroids: Vec<Vec<f64>>,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = pl::kmeans_assign(&tensor(features)?, &tensor(init_centroids)?, max_iters).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("labels", r.labels)?;
    d.set_item("centroids", rows(&r.centroids))?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// Double-threshold selection at iteration `t`. Each branch is a
/// `(features, labels, centroids)` triple.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn select_high_confidence<'py>(
    py: Python<'py>,
    adversarial: (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>),
    clustering: (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>),
    t: u64,
    classes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (af, ac) = (tensor(adversarial.0)?, tensor(adversarial.2)?);
    let (cf, cc) = (tensor(clustering.0)?, tensor(clustering.2)?);
    let b = pl::select_high_confidence(
        BranchView {
            features: &af,
            labels: &adversarial.1,
            centroids: &ac,
        },
        BranchView {
            features: &cf,
            labels: &clustering.1,
            centroids: &cc,
        },
        &ThresholdState::at(t),
        classes,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("indices", b.selected_indices)?;
    d.set_item("labels", b.labels)?;
    d.set_item("quota_adv", b.quota_adv)?;
    d.set_item("quota_clu", b.quota_clu)?;
    Ok(d)
}

#[pyfunction]
fn relative_centroid_distances(centroids: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let c = g.constant(tensor(centroids)?);
    let m = align::relative_centroid_distances(&mut g, c).map_err(err)?;
    Ok(rows(g.value(m)))
}

#[pyfunction]
fn relative_sample_distances(centroids: Vec<Vec<f64>>, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let c = g.constant(tensor(centroids)?);
    let f = g.constant(tensor(features)?);
    let m = align::relative_sample_distances(&mut g, c, f).map_err(err)?;
    Ok(rows(g.value(m)))
}

fn matrix_loss(
    f: fn(&mut Graph, ::dcp::Var, ::dcp::Var) -> ::dcp::Result<::dcp::Var>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let mut g = Graph::new();
    let (av, bv) = (g.constant(tensor(a)?), g.constant(tensor(b)?));
    let l = f(&mut g, av, bv).map_err(err)?;
    g.scalar_value(l).map_err(err)
}

#[pyfunction]
fn loss_cc(m_cluster: Vec<Vec<f64>>, m_adv: Vec<Vec<f64>>) -> PyResult<f64> {
    matrix_loss(align::loss_cc, m_cluster, m_adv)
}

#[pyfunction]
fn loss_cs(m_cluster: Vec<Vec<f64>>, m_adv: Vec<Vec<f64>>) -> PyResult<f64> {
    matrix_loss(align::loss_cs, m_cluster, m_adv)
}

/// Trains from scratch; returns `(model, metrics)` with one dict per
/// iteration.
#[pyfunction]
#[pyo3(signature = (source, target, *, iterations=1500, alpha=0.1, pseudo_labels=true, lr=0.01, momentum=0.5, batch_size=36, seed=0, eval_every=100))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    source: PyRef<'_, PyDataset>,
    target: PyRef<'_, PyDataset>,
    iterations: u64,
    alpha: f64,
    pseudo_labels: bool,
    lr: f64,
    momentum: f64,
    batch_size: usize,
    seed: u64,
    eval_every: u64,
) -> PyResult<(PyModel, Vec<Bound<'py, PyDict>>)> {
    let config = TrainConfig {
        iterations,
        alpha,
        pseudo_labels,
        lr,
        momentum,
        batch_size,
        eval_every,
        seeds: Seeds::from_base(seed),
        ..Default::default()
    };
    let (ckpt, history) = tr::train(config, &source.inner, &target.inner).map_err(err)?;
    let metrics = history.iter().map(|r| record_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    Ok((PyModel { inner: ckpt }, metrics))
}

/// Gradient check of every loss; one dict per loss.
#[pyfunction]
#[pyo3(signature = (instances=20, seed=0, inject_sign_flip=None))]
fn gradcheck<'py>(
    py: Python<'py>,
    instances: usize,
    seed: u64,
    inject_sign_flip: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let inject = match inject_sign_flip {
        Some(n) => Some(LossKind::parse(n).ok_or_else(|| PyValueError::new_err(format!("unknown loss {n:?}")))?),
        None => None,
    };
    run_gradcheck(instances, seed, inject)
        .map_err(err)?
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("loss", r.loss.name())?;
            d.set_item("max_rel_error", r.max_rel_error)?;
            d.set_item("passed", r.passed)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "dcp")]
fn dcp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tau_adv, m)?)?;
    m.add_function(wrap_pyfunction!(tau_clu, m)?)?;
    m.add_function(wrap_pyfunction!(gen_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(gen_two_moons_shift, m)?)?;
    m.add_function(wrap_pyfunction!(compute_centroids, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_assign, m)?)?;
    m.add_function(wrap_pyfunction!(select_high_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(relative_centroid_distances, m)?)?;
    m.add_function(wrap_pyfunction!(relative_sample_distances, m)?)?;
    m.add_function(wrap_pyfunction!(loss_cc, m)?)?;
    m.add_function(wrap_pyfunction!(loss_cs, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
