//! Python bindings: guided-mode solves, slab modes, Dörfler marking and the
//! experiment runners.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dpg_waveguide::adapt;
use dpg_waveguide::dpg::assemble_solve;
use dpg_waveguide::experiments::{self, Experiment, ExperimentConfig, Frame, GuideCase};
use dpg_waveguide::mesh::{self, MarkSet};
use dpg_waveguide::physics::{self, SlabGuide};
use dpg_waveguide::{Error, RefineMode};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidMesh(_) | Error::InvalidProblem(_) | Error::EmptyResiduals | Error::InactiveElement(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn refine_mode(name: &str) -> PyResult<RefineMode> {
    match name {
        "iso" => Ok(RefineMode::Iso),
        "aniso_x" => Ok(RefineMode::AnisoX),
        "aniso_z" => Ok(RefineMode::AnisoZ),
        _ => Err(PyValueError::new_err(format!("unknown refinement mode {name:?}"))),
    }
}

/// Structured waveguide mesh; `layers = 0` gives a 1D mesh.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (length, epw, layers, p))]
    fn new(length: usize, epw: usize, layers: usize, p: usize) -> PyResult<Self> {
        let inner = mesh::build_waveguide_mesh(length, epw, layers, p, None).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn n_active(&self) -> usize {
        self.inner.n_active()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn active_ids(&self) -> Vec<usize> {
        self.inner.active_ids()
    }

    /// Refine the given active elements (`iso`, `aniso_x` or `aniso_z`) and close the mesh.
    #[pyo3(signature = (ids, mode = "iso"))]
    fn refine(&mut self, ids: Vec<usize>, mode: &str) -> PyResult<()> {
        let m = refine_mode(mode)?;
        self.inner.refine(&MarkSet::uniform(ids, m)).map_err(to_py)?;
        Ok(())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Mesh(dim={}, active={}, length={})", self.inner.dim, self.inner.n_active(), self.inner.length())
    }
}

/// Solve a guide excited by one of its modes; returns errors in percent,
/// the residual, its element indicators and the DOF count.
#[pyfunction]
#[pyo3(signature = (dim, length, p, epw = 4, layers = 2, enrichment = 1, alpha = 1.0, mode = 1, unit_length = false, pz = None))]
#[allow(clippy::too_many_arguments)]
fn solve_mode<'py>(
    py: Python<'py>,
    dim: usize,
    length: usize,
    p: usize,
    epw: usize,
    layers: usize,
    enrichment: usize,
    alpha: f64,
    mode: usize,
    unit_length: bool,
    pz: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let frame = if unit_length { Frame::UnitLength } else { Frame::Physical };
    let case = GuideCase { dim, length, p, pz, epw, layers, enrichment, alpha, mode, frame };
    let (rel, loss, residual, indicators, dofs) = py
        .detach(|| -> dpg_waveguide::Result<_> {
            let (mesh, exact, problem) = experiments::guide_case(&case)?;
            let sol = assemble_solve(&mesh, &problem)?;
            Ok((
                physics::relative_l2_error(&sol, &exact)?,
                physics::power_loss(&sol)?,
                sol.total_residual,
                sol.residuals.clone(),
                sol.n_dofs(),
            ))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("rel_error_pct", rel)?;
    d.set_item("power_loss_pct", loss)?;
    d.set_item("residual", residual)?;
    d.set_item("indicators", indicators)?;
    d.set_item("dofs", dofs)?;
    Ok(d)
}

/// Ids of the smallest set of largest indicators holding a `kappa` share of
/// the squared residual.
#[pyfunction]
fn dorfler_mark(residuals: Vec<(usize, f64)>, kappa: f64) -> PyResult<Vec<usize>> {
    adapt::dorfler_mark(&residuals, kappa).map_err(to_py)
}

/// `V = 2π r NA / λ`.
#[pyfunction]
fn v_number(wavelength: f64, r_core: f64, na: f64) -> f64 {
    physics::v_number(wavelength, r_core, na)
}

/// Guided modes of a boxed symmetric slab: index, `k_z` and core confinement.
#[pyfunction]
#[pyo3(signature = (v, n_core = 1.4512, n_clad = 1.45, wavelength = 1.064, box_factor = 8.0))]
fn slab_modes<'py>(py: Python<'py>, v: f64, n_core: f64, n_clad: f64, wavelength: f64, box_factor: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let guide = SlabGuide::with_v(v, n_core, n_clad, 2.0 * std::f64::consts::PI / wavelength, box_factor).map_err(to_py)?;
    guide
        .modes()
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("index", m.index)?;
            d.set_item("kz", m.kz.re)?;
            d.set_item("confinement", physics::confinement(m, guide.core()))?;
            Ok(d)
        })
        .collect()
}

/// Run an experiment (`pollution`, `aniso`, `adapt`, `partition`,
/// `convergence`, `stability`) with an optional TOML config; returns the
/// manifest as a JSON string.
#[pyfunction]
#[pyo3(signature = (experiment, out, config = None))]
fn run_experiment(py: Python<'_>, experiment: &str, out: PathBuf, config: Option<&str>) -> PyResult<String> {
    let kind: Experiment = experiment.parse().map_err(to_py)?;
    let cfg = match config {
        Some(text) => ExperimentConfig::from_toml(text).map_err(to_py)?,
        None => ExperimentConfig::default(),
    };
    let manifest = py.detach(|| experiments::run_to_dir(kind, &cfg, &out)).map_err(to_py)?;
    serde_json::to_string(&manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Default experiment configuration as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    ExperimentConfig::default().to_toml().map_err(to_py)
}

#[pymodule]
pub fn dpgwave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(solve_mode, m)?)?;
    m.add_function(wrap_pyfunction!(dorfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(v_number, m)?)?;
    m.add_function(wrap_pyfunction!(slab_modes, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
