//! Python bindings: meshes, matrix assembly, harmonic extension,
//! convergence experiments, slopes and the property suites.

use evolvefem::analysis::{self, ErrorTable};
use evolvefem::assembly::{assemble_mass, assemble_stiffness, SparseSymMatrix};
use evolvefem::check::{self, CheckOptions};
use evolvefem::experiments::{self, ExperimentConfig, ExperimentId};
use evolvefem::harmonic::solve_harmonic_extension;
use evolvefem::mesh::{self, MeshTopology, NodalVector};
use evolvefem::FemError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: FemError) -> PyErr {
    match err {
        FemError::Io(e) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type Triplets = (Vec<usize>, Vec<usize>, Vec<f64>);

fn triplets(m: &SparseSymMatrix) -> Triplets {
    let csr = &m.csr;
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..m.n() {
        for (j, v) in csr.row(i) {
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
    }
    (rows, cols, vals)
}

/// Triangulated unit disk or ball with isoparametric nodal positions.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    topo: MeshTopology,
    x: NodalVector,
}

impl PyMesh {
    fn positions_from(&self, coords: Vec<Vec<f64>>) -> PyResult<NodalVector> {
        if coords.len() != self.topo.n_nodes {
            return Err(PyValueError::new_err(format!(
                "expected {} points, got {}",
                self.topo.n_nodes,
                coords.len()
            )));
        }
        let mut x = NodalVector::zeros(self.topo.dim, self.topo.n_nodes);
        for (j, p) in coords.iter().enumerate() {
            if p.len() != self.topo.dim {
                return Err(PyValueError::new_err(format!("point {j} has {} coordinates", p.len())));
            }
            let mut q = [0.0; 3];
            q[..p.len()].copy_from_slice(p);
            x.set_node(j, &q);
        }
        Ok(x)
    }

    fn positions_or_initial(&self, coords: Option<Vec<Vec<f64>>>) -> PyResult<NodalVector> {
        match coords {
            Some(c) => self.positions_from(c),
            None => Ok(self.x.clone()),
        }
    }
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    #[pyo3(signature = (h, degree = 2))]
    fn disk(h: f64, degree: usize) -> PyResult<Self> {
        let (topo, x) = mesh::generate_disk_mesh(h, degree).map_err(to_py)?;
        Ok(Self { topo, x })
    }

    #[staticmethod]
    #[pyo3(signature = (h, degree = 2))]
    fn ball(h: f64, degree: usize) -> PyResult<Self> {
        let (topo, x) = mesh::generate_ball_mesh(h, degree).map_err(to_py)?;
        Ok(Self { topo, x })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.topo.dim
    }

    #[getter]
    fn degree(&self) -> usize {
        self.topo.degree
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.topo.n_nodes
    }

    #[getter]
    fn n_boundary(&self) -> usize {
        self.topo.n_boundary
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.topo.n_elements()
    }

    /// Maximal pairwise node distance within an element.
    fn mesh_size(&self) -> f64 {
        mesh::mesh_size(&self.topo, &self.x)
    }

    /// Initial nodal positions, boundary nodes first.
    fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.topo.n_nodes)
            .map(|j| self.x.node(j)[..self.topo.dim].to_vec())
            .collect()
    }

    fn elements(&self) -> Vec<Vec<usize>> {
        (0..self.topo.n_elements())
            .map(|e| self.topo.element(e).to_vec())
            .collect()
    }

    /// Mass matrix as `(rows, cols, values)`, on the given positions or the
    /// initial ones.
    #[pyo3(signature = (positions = None))]
    fn mass_matrix(&self, positions: Option<Vec<Vec<f64>>>) -> PyResult<Triplets> {
        let x = self.positions_or_initial(positions)?;
        Ok(triplets(&assemble_mass(&self.topo, &x).map_err(to_py)?))
    }

    #[pyo3(signature = (positions = None))]
    fn stiffness_matrix(&self, positions: Option<Vec<Vec<f64>>>) -> PyResult<Triplets> {
        let x = self.positions_or_initial(positions)?;
        Ok(triplets(&assemble_stiffness(&self.topo, &x).map_err(to_py)?))
    }

    /// Discrete harmonic extension of boundary node values (one row per
    /// boundary node) to all nodes.
    fn harmonic_extension(&self, boundary_values: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let (dim, nb) = (self.topo.dim, self.topo.n_boundary);
        if boundary_values.len() != nb {
            return Err(PyValueError::new_err(format!(
                "expected {nb} boundary values, got {}",
                boundary_values.len()
            )));
        }
        let mut vg = NodalVector::zeros(dim, self.topo.n_nodes);
        for (j, v) in boundary_values.iter().enumerate() {
            if v.len() != dim {
                return Err(PyValueError::new_err(format!("value {j} has {} components", v.len())));
            }
            let mut q = [0.0; 3];
            q[..dim].copy_from_slice(v);
            vg.set_node(j, &q);
        }
        let v = solve_harmonic_extension(&self.topo, &self.x, &vg).map_err(to_py)?;
        Ok((0..self.topo.n_nodes).map(|j| v.node(j)[..dim].to_vec()).collect())
    }

    /// Plain-text listing of nodes and elements.
    fn export_text(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.topo.export_text(&self.x, &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(dim={}, degree={}, nodes={}, elements={})",
            self.topo.dim,
            self.topo.degree,
            self.topo.n_nodes,
            self.topo.n_elements()
        )
    }
}

/// Outcome of a convergence experiment.
#[pyclass(name = "ExperimentResult", frozen)]
struct PyExperimentResult {
    inner: experiments::ExperimentResult,
}

#[pymethods]
impl PyExperimentResult {
    fn to_csv(&self) -> String {
        self.inner.table.to_csv()
    }

    fn summary_json(&self) -> PyResult<String> {
        self.inner.summary_json().map_err(to_py)
    }

    /// `(column, pairwise slopes, least-squares slope)` per recorded column.
    fn slopes(&self) -> Vec<(String, Vec<f64>, f64)> {
        self.inner
            .slopes()
            .into_iter()
            .map(|(c, e)| (c.to_string(), e.pairwise, e.least_squares))
            .collect()
    }

    fn mesh_sizes(&self) -> Vec<f64> {
        self.inner.table.rows.iter().map(|r| r.h).collect()
    }

    /// Writes CSV, summary JSON and timing JSON next to `path`.
    fn write(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.write(&path).map(|_| ()).map_err(to_py)
    }
}

/// Runs `ex1`, `ex2` or `ex3` with optional `(key, value)` overrides
/// (the keys of the config file).
#[pyfunction]
#[pyo3(signature = (experiment, overrides = None))]
fn run_experiment(
    py: Python<'_>,
    experiment: &str,
    overrides: Option<Vec<(String, String)>>,
) -> PyResult<PyExperimentResult> {
    let id: ExperimentId = experiment.parse().map_err(to_py)?;
    let mut config = ExperimentConfig::defaults(id);
    for (k, v) in overrides.unwrap_or_default() {
        config.set(&k, &v).map_err(to_py)?;
    }
    config.validate().map_err(to_py)?;
    let inner = py.detach(|| experiments::run_experiment(&config)).map_err(to_py)?;
    Ok(PyExperimentResult { inner })
}

/// Pairwise and least-squares slopes of `(h, error)` pairs.
#[pyfunction]
fn eoc(rows: Vec<(f64, f64)>) -> PyResult<(Vec<f64>, f64)> {
    let e = analysis::eoc(&rows).map_err(to_py)?;
    Ok((e.pairwise, e.least_squares))
}

/// Slopes of every column of an error-table CSV text.
#[pyfunction]
fn eoc_csv(text: &str) -> PyResult<Vec<(String, Vec<f64>, f64)>> {
    let table = ErrorTable::from_csv(text).map_err(to_py)?;
    Ok(table
        .slopes()
        .into_iter()
        .map(|(c, e)| (c.to_string(), e.pairwise, e.least_squares))
        .collect())
}

/// Seeded property suites as `(suite, case, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (suite = None, seed = 0))]
fn run_checks(py: Python<'_>, suite: Option<String>, seed: u64) -> PyResult<Vec<(String, String, bool, String)>> {
    let opts = CheckOptions {
        suite,
        seed,
        ..Default::default()
    };
    let reports = py.detach(|| check::run_checks(&opts)).map_err(to_py)?;
    Ok(reports
        .into_iter()
        .flat_map(|r| {
            let name = r.name.clone();
            r.cases
                .into_iter()
                .map(move |c| (name.clone(), c.label, c.passed, c.detail))
        })
        .collect())
}

#[pymodule]
fn evolvefem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyExperimentResult>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(eoc, m)?)?;
    m.add_function(wrap_pyfunction!(eoc_csv, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add("CSV_HEADER", analysis::CSV_HEADER)?;
    Ok(())
}
