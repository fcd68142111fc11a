use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use graphmix::cli::{self, CliError, RunConfig};
use graphmix::datapipe::{featurize_one, pack_ffd, Capacity, FeaturizeSettings, GraphSize, Split};
use graphmix::featurize::{descriptors, FeaturizedGraph};
use graphmix::molparse::{parse_smiles, write_smiles, MolGraph};
use graphmix::multitask::{self as mt, HybridConfig, LossKind, MaskedTargets};
use graphmix::posenc;
use graphmix::tensorcore::{Tape, Tensor};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Io(m) => PyIOError::new_err(m),
        CliError::Numeric(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn rows(data: &[f64], width: usize) -> Vec<Vec<f64>> {
    if width == 0 {
        return Vec::new();
    }
    data.chunks(width).map(<[f64]>::to_vec).collect()
}

/// A parsed molecule (heavy atoms, implicit hydrogens).
#[pyclass(name = "Molecule", frozen, module = "graphmix")]
struct PyMolecule {
    g: MolGraph,
}

#[pymethods]
impl PyMolecule {
    #[new]
    fn new(smiles: &str) -> PyResult<Self> {
        Ok(PyMolecule {
            g: parse_smiles(smiles).map_err(value_err)?,
        })
    }

    #[getter]
    fn num_atoms(&self) -> usize {
        self.g.num_atoms()
    }

    #[getter]
    fn num_bonds(&self) -> usize {
        self.g.num_bonds()
    }

    #[getter]
    fn num_components(&self) -> usize {
        self.g.num_components
    }

    #[getter]
    fn cycle_rank(&self) -> usize {
        self.g.cycle_rank()
    }

    #[getter]
    fn canonical_key(&self) -> String {
        self.g.canonical_key.clone()
    }

    fn elements(&self) -> Vec<String> {
        self.g.atoms.iter().map(|a| a.element.symbol().to_string()).collect()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.g.edges()
    }

    fn descriptors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (name, v) in descriptors(&self.g) {
            d.set_item(name, v)?;
        }
        Ok(d)
    }

    /// SMILES of the molecule, writing atoms in `order` (default: as parsed).
    #[pyo3(signature = (order=None))]
    fn to_smiles(&self, order: Option<Vec<usize>>) -> PyResult<String> {
        let n = self.g.num_atoms();
        let order = order.unwrap_or_else(|| (0..n).collect());
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(PyValueError::new_err("order must be a permutation of the atom indices"));
        }
        Ok(write_smiles(&self.g, &order))
    }

    /// `(eigenvalues, eigenvectors)` of the `k` lowest Laplacian eigenpairs;
    /// eigenvectors are per-atom rows.
    fn laplacian_pe(&self, k: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let pe = posenc::laplacian_pe(&self.g, k).map_err(value_err)?;
        Ok((pe.eigvals, rows(&pe.eigvecs, pe.k)))
    }

    /// Random-walk return probabilities, one row per atom.
    fn rwse(&self, steps: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let r = posenc::rwse(&self.g, &steps).map_err(value_err)?;
        Ok(rows(&r.probs, r.steps.len()))
    }

    /// Node/edge features and PEs with default settings, in canonical order.
    fn featurize(&self) -> PyResult<PyFeaturized> {
        let g = featurize_one(&self.g, &FeaturizeSettings::default()).map_err(value_err)?;
        Ok(PyFeaturized { g })
    }

    fn __repr__(&self) -> String {
        format!("Molecule(atoms={}, bonds={})", self.g.num_atoms(), self.g.num_bonds())
    }
}

#[pyclass(name = "FeaturizedGraph", frozen, module = "graphmix")]
struct PyFeaturized {
    g: FeaturizedGraph,
}

#[pymethods]
impl PyFeaturized {
    #[getter]
    fn num_atoms(&self) -> usize {
        self.g.num_atoms
    }

    #[getter]
    fn node_features(&self) -> Vec<Vec<f64>> {
        rows(&self.g.node_features, self.g.d_node)
    }

    #[getter]
    fn edge_features(&self) -> Vec<Vec<f64>> {
        rows(&self.g.edge_features, self.g.d_edge)
    }

    #[getter]
    fn edge_index(&self) -> Vec<(usize, usize)> {
        self.g.edge_index.clone()
    }

    #[getter]
    fn lap_vecs(&self) -> Vec<Vec<f64>> {
        rows(&self.g.lap_vecs, self.g.lap_k)
    }

    #[getter]
    fn lap_vals(&self) -> Vec<f64> {
        self.g.lap_vals.clone()
    }

    #[getter]
    fn rwse(&self) -> Vec<Vec<f64>> {
        rows(&self.g.rwse, self.g.rwse_dim)
    }
}

#[pyfunction]
fn canonical_key(smiles: &str) -> PyResult<String> {
    Ok(parse_smiles(smiles).map_err(value_err)?.canonical_key)
}

/// Masked mean loss and its gradient; `None` targets are missing.
#[pyfunction]
#[pyo3(signature = (pred, targets, kind="mae"))]
fn masked_loss(pred: Vec<f64>, targets: Vec<Option<f64>>, kind: &str) -> PyResult<(Option<f64>, Vec<f64>)> {
    let kind = match kind {
        "mae" => LossKind::Mae,
        "bce" => LossKind::Bce,
        other => return Err(PyValueError::new_err(format!("unknown loss `{other}`"))),
    };
    let n = pred.len();
    let targets = MaskedTargets::new(targets.into_iter().map(|t| t.unwrap_or(f64::NAN)).collect());
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::vector(pred), true);
    match mt::masked_loss(&mut tape, p, &targets, kind).map_err(value_err)? {
        None => Ok((None, vec![0.0; n])),
        Some(l) => {
            tape.backward(l).map_err(value_err)?;
            let value = tape.value(l).data()[0];
            let grad = tape.grad(p).map_or(vec![0.0; n], Tensor::into_data);
            Ok((Some(value), grad))
        }
    }
}

/// Hybrid ranked-class loss of one probability vector.
#[pyfunction]
fn hybrid_loss(probs: Vec<f64>, target: usize, alpha: f64) -> PyResult<f64> {
    let cfg = HybridConfig {
        classes: probs.len(),
        alpha,
    };
    mt::hybrid_loss_value(&probs, target, cfg).map_err(value_err)
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<f64>) -> Option<f64> {
    mt::auroc(&scores, &labels)
}

#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<f64>) -> Option<f64> {
    mt::average_precision(&scores, &labels)
}

#[pyfunction]
fn pearson(preds: Vec<f64>, labels: Vec<f64>) -> Option<f64> {
    mt::pearson(&preds, &labels)
}

#[pyfunction]
fn r2(preds: Vec<f64>, labels: Vec<f64>) -> Option<f64> {
    mt::r2(&preds, &labels)
}

#[pyfunction]
fn mae(preds: Vec<f64>, labels: Vec<f64>) -> Option<f64> {
    mt::mae(&preds, &labels)
}

/// First-fit-decreasing packing of `(nodes, edges)` sizes; returns index lists.
#[pyfunction]
fn pack(sizes: Vec<(usize, usize)>, max_nodes: usize, max_edges: usize, max_graphs: usize) -> PyResult<Vec<Vec<usize>>> {
    let sizes: Vec<GraphSize> = sizes.into_iter().map(|(nodes, edges)| GraphSize { nodes, edges }).collect();
    let cap = Capacity {
        max_nodes,
        max_edges,
        max_graphs,
    };
    pack_ffd(&sizes, cap).map_err(value_err)
}

fn load(config: PathBuf) -> PyResult<RunConfig> {
    RunConfig::load(&config).map_err(cli_err)
}

/// Per-dataset ingest statistics.
#[pyfunction]
fn ingest(py: Python<'_>, config: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    let stats = cli::cmd_ingest(&load(config)?).map_err(cli_err)?;
    json_to_py(py, &serde_json::to_string(&stats).expect("stats serialize"))
}

/// Split counts per dataset; writes index files when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, seed=None, out=None))]
fn split(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<Vec<(String, usize, usize, usize, usize)>> {
    let splits = cli::cmd_split(&load(config)?, seed, out.as_deref()).map_err(cli_err)?;
    Ok(splits
        .iter()
        .map(|s| {
            let c = |x| s.count(x);
            (s.dataset.clone(), c(Split::Train), c(Split::Val), c(Split::Test), c(Split::TestSeen))
        })
        .collect())
}

/// Trains and writes outputs to `out`; returns the run manifest.
#[pyfunction]
fn train(py: Python<'_>, config: PathBuf, out: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    let cfg = load(config)?;
    let m = py.detach(|| cli::cmd_train(&cfg, &out)).map_err(cli_err)?;
    json_to_py(py, &serde_json::to_string(&m).expect("manifest serialize"))
}

/// Metric report of a checkpoint on one split.
#[pyfunction]
#[pyo3(signature = (checkpoint, split="test"))]
fn evaluate<'py>(py: Python<'py>, checkpoint: PathBuf, split: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = Split::from_name(split).ok_or_else(|| PyValueError::new_err(format!("unknown split `{split}`")))?;
    let report = py.detach(|| cli::cmd_eval(&checkpoint, s)).map_err(cli_err)?;
    json_to_py(py, &serde_json::to_string(&report).expect("report serialize"))
}

#[pymodule(name = "graphmix")]
fn graphmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMolecule>()?;
    m.add_class::<PyFeaturized>()?;
    m.add_function(wrap_pyfunction!(canonical_key, m)?)?;
    m.add_function(wrap_pyfunction!(masked_loss, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_loss, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(r2, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(pack, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
