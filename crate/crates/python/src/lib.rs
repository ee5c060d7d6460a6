//! Python module `eit_size`: meshes, forward solves, bound lines and
//! inclusion generators.

use num_bigint::BigUint;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use eit_size::bounds::{self, BoundarySpectrum};
use eit_size::experiments::{self as exp, ConnectedMode};
use eit_size::{EitError, ElectrodeLayout, Excitation, ForwardModel, InclusionMask, NeumannSpec, StructuredMesh};

fn to_py(e: EitError) -> PyErr {
    match e {
        EitError::NotPositiveDefinite { .. }
        | EitError::SolverFailure { .. }
        | EitError::PowerMismatch { .. }
        | EitError::SweepAborted { .. }
        | EitError::Degenerate(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Mesh", frozen)]
pub struct PyMesh {
    inner: StructuredMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (dim, n_e, side_l = 1.0))]
    fn new(dim: usize, n_e: usize, side_l: f64) -> PyResult<Self> {
        Ok(Self {
            inner: eit_size::build_mesh(dim, n_e, side_l).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_e(&self) -> usize {
        self.inner.n_e()
    }

    #[getter]
    fn side_l(&self) -> f64 {
        self.inner.side_length()
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn half_bandwidth(&self) -> usize {
        self.inner.half_bandwidth()
    }

    fn element_index(&self, coords: Vec<usize>) -> PyResult<usize> {
        if coords.len() != self.inner.dim() || coords.iter().any(|&c| c >= self.inner.n_e()) {
            return Err(PyValueError::new_err(format!("bad element coordinates {coords:?}")));
        }
        let mut c = [0; 3];
        c[..coords.len()].copy_from_slice(&coords);
        Ok(self.inner.element_index(c))
    }

    fn __repr__(&self) -> String {
        format!("Mesh(dim={}, n_e={}, side_l={})", self.inner.dim(), self.inner.n_e(), self.inner.side_length())
    }
}

/// Forward model of one mesh and excitation; the homogeneous solve is
/// cached and shared by every paired solve.
#[pyclass(name = "Model", frozen)]
pub struct PyModel {
    inner: ForwardModel,
}

impl PyModel {
    fn build(mesh: &PyMesh, excitation: Excitation) -> PyResult<Self> {
        Ok(Self {
            inner: ForwardModel::new(mesh.inner.clone(), excitation).map_err(to_py)?,
        })
    }
}

#[pymethods]
impl PyModel {
    /// Uniform current through the two faces normal to `axis`.
    #[staticmethod]
    #[pyo3(signature = (mesh, axis = None))]
    fn uniform(mesh: &PyMesh, axis: Option<usize>) -> PyResult<Self> {
        let axis = axis.unwrap_or(mesh.inner.dim() - 1);
        Self::build(mesh, Excitation::Neumann(NeumannSpec::uniform(axis)))
    }

    /// Centered inflow and outflow patches on opposite faces.
    #[staticmethod]
    #[pyo3(signature = (mesh, axis = None))]
    fn two_patch(mesh: &PyMesh, axis: Option<usize>) -> PyResult<Self> {
        let axis = axis.unwrap_or(mesh.inner.dim() - 1);
        Self::build(mesh, Excitation::Neumann(NeumannSpec::two_patch_centered(&mesh.inner, axis)))
    }

    #[staticmethod]
    fn cosine(mesh: &PyMesh, n: u32) -> PyResult<Self> {
        Self::build(mesh, Excitation::Neumann(NeumannSpec::cosine(n)))
    }

    /// Full-face electrodes on the faces normal to `axis`, currents (1, -1).
    #[staticmethod]
    #[pyo3(signature = (mesh, zeta, axis = None))]
    fn electrodes_opposite(mesh: &PyMesh, zeta: f64, axis: Option<usize>) -> PyResult<Self> {
        let axis = axis.unwrap_or(mesh.inner.dim() - 1);
        let z = zeta * mesh.inner.side_length();
        let layout = ElectrodeLayout::opposite_faces(&mesh.inner, axis, z).map_err(to_py)?;
        Self::build(mesh, Excitation::Cem(layout))
    }

    /// Two electrodes of `width` elements, `gap` apart, on one face.
    #[staticmethod]
    #[pyo3(signature = (mesh, width, gap, zeta, axis = None))]
    fn electrodes_same_face(mesh: &PyMesh, width: usize, gap: usize, zeta: f64, axis: Option<usize>) -> PyResult<Self> {
        let axis = axis.unwrap_or(mesh.inner.dim() - 1);
        let z = zeta * mesh.inner.side_length();
        let layout = ElectrodeLayout::same_face_pair(&mesh.inner, axis, width, gap, z).map_err(to_py)?;
        Self::build(mesh, Excitation::Cem(layout))
    }

    #[getter]
    fn test_id(&self) -> String {
        self.inner.excitation().test_id()
    }

    fn homogeneous_power(&self, py: Python<'_>) -> PyResult<f64> {
        py.detach(|| self.inner.homogeneous().map(|s| s.power)).map_err(to_py)
    }

    /// Solves with the inclusion `elements` of contrast `k` and returns the
    /// record as a dict.
    fn solve_pair<'py>(&self, py: Python<'py>, elements: Vec<usize>, k: f64) -> PyResult<Bound<'py, PyDict>> {
        let inc = InclusionMask::new(self.inner.mesh(), elements, k).map_err(to_py)?;
        let r = py.detach(|| self.inner.run_pair(&inc)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("test_id", r.test_id)?;
        d.set_item("model", r.model.as_str())?;
        d.set_item("k", r.k)?;
        d.set_item("d0_elems", r.d0_elems)?;
        d.set_item("d03_elems", r.d03_elems)?;
        d.set_item("n_elements", r.n_elements)?;
        d.set_item("volume_fraction", r.volume_fraction)?;
        d.set_item("w0", r.w0)?;
        d.set_item("w", r.w)?;
        d.set_item("gap", r.gap)?;
        d.set_item("status", r.status)?;
        Ok(d)
    }

    /// Local minima of `|grad u|` of the homogeneous cosine field, as `(x, z)`.
    fn critical_points(&self, py: Python<'_>) -> PyResult<Vec<(f64, f64)>> {
        let pts = py.detach(|| self.inner.critical_points()).map_err(to_py)?;
        Ok(pts.into_iter().map(|p| (p.x, p.z)).collect())
    }
}

#[pyfunction]
fn count_inclusions(n_cells: u64, n_i: u64) -> PyResult<BigUint> {
    eit_size::assembly::count_inclusions(n_cells, n_i).map_err(to_py)
}

/// `(lower_coef, upper_coef, exponent)` of a theoretical line:
/// `scenario` is `uniform`, `cosine` (mode `n`) or `cem` (impedance `zeta`).
#[pyfunction]
#[pyo3(signature = (k, scenario = "uniform", n = 1, zeta = 0.2))]
fn theoretical_line(k: f64, scenario: &str, n: u32, zeta: f64) -> PyResult<(f64, f64, f64)> {
    let line = match scenario {
        "uniform" => bounds::theoretical_line_uniform(k),
        "cosine" => bounds::theoretical_line_cosine(k, n),
        "cem" => bounds::theoretical_line_cem_uniform(k, 1.0, zeta),
        other => return Err(PyValueError::new_err(format!("unknown scenario `{other}`"))),
    }
    .map_err(to_py)?;
    Ok((line.lower_coef, line.upper_coef, line.exponent))
}

/// Oscillation measure of cosine data of mode `n` on the mesh boundary.
#[pyfunction]
fn cosine_frequency(py: Python<'_>, mesh: &PyMesh, n: u32) -> PyResult<f64> {
    let m = mesh.inner.clone();
    py.detach(move || BoundarySpectrum::new(&m)?.frequency(&NeumannSpec::cosine(n)))
        .map_err(to_py)
}

#[pyfunction]
fn centered_blocks(mesh: &PyMesh, min_side: usize, max_side: usize) -> Vec<Vec<usize>> {
    exp::gen_centered_blocks(&mesh.inner, min_side..=max_side)
}

#[pyfunction]
#[pyo3(signature = (mesh, min_side, max_side, d0_min = 0))]
fn blocks(mesh: &PyMesh, min_side: usize, max_side: usize, d0_min: usize) -> Vec<Vec<usize>> {
    exp::gen_blocks(&mesh.inner, min_side..=max_side, d0_min)
}

/// Face-connected element sets; every set when `samples` is None,
/// otherwise up to `samples` distinct random sets.
#[pyfunction]
#[pyo3(signature = (mesh, n_i, d0_min = 0, samples = None, seed = 0, octant = false))]
fn connected_sets(
    py: Python<'_>,
    mesh: &PyMesh,
    n_i: usize,
    d0_min: usize,
    samples: Option<usize>,
    seed: u64,
    octant: bool,
) -> PyResult<Vec<Vec<usize>>> {
    let mode = match samples {
        Some(count) => ConnectedMode::Sampled { count },
        None => ConnectedMode::Exhaustive,
    };
    let m = mesh.inner.clone();
    py.detach(move || exp::gen_connected(&m, n_i, d0_min, mode, seed, octant))
        .map_err(to_py)
}

#[pymodule]
fn eit_size_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(count_inclusions, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_line, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(centered_blocks, m)?)?;
    m.add_function(wrap_pyfunction!(blocks, m)?)?;
    m.add_function(wrap_pyfunction!(connected_sets, m)?)?;
    Ok(())
}
