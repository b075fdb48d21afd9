//! Python bindings: models, reduced densities, envelope bounds, directors
//! and the thin-film experiment driver.

use std::sync::Arc;

use memrelax_core::dimension_reduction::Experiment;
use memrelax_core::director::{cell_min_constrained, nirf_value, Sign};
use memrelax_core::envelope::{four_corner_bound, growth_certificate, LaminationTables, SearchParams, SharedDensity};
use memrelax_core::pw_affine::{PwAffineField, TriMesh};
use memrelax_core::{w0_bruteforce, w0_closed_form, EnergyModel, Error, Mat32, Mat33, ModelSpec, StoredEnergy, Vec3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `xi[r][c]` is row `r`, column `c` of the 3×2 gradient.
fn mat32(xi: [[f64; 2]; 3]) -> Mat32 {
    Mat32::from_row_major([xi[0][0], xi[0][1], xi[1][0], xi[1][1], xi[2][0], xi[2][1]])
}

fn mat33(f: [[f64; 3]; 3]) -> Mat33 {
    Mat33 {
        cols: std::array::from_fn(|c| Vec3([f[0][c], f[1][c], f[2][c]])),
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    spec: ModelSpec,
    inner: EnergyModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (spec = "reciprocal:p=2"))]
    fn new(spec: &str) -> PyResult<Self> {
        let spec: ModelSpec = spec.parse().map_err(err)?;
        Ok(PyModel {
            spec,
            inner: EnergyModel::from_spec(spec).map_err(err)?,
        })
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    /// `W(F)` for a 3×3 matrix given by rows; `inf` off the admissible set.
    fn energy(&self, f: [[f64; 3]; 3]) -> f64 {
        self.inner.energy(&mat33(f)).to_f64()
    }

    /// `(W₀(ξ), t*, ζ*)`.
    fn w0(&self, xi: [[f64; 2]; 3]) -> (f64, f64, [f64; 3]) {
        let m = w0_closed_form(&self.inner, &mat32(xi));
        (m.value.to_f64(), m.t, m.zeta.0)
    }

    #[pyo3(signature = (xi, grid_n = 101))]
    fn w0_bruteforce(&self, xi: [[f64; 2]; 3], grid_n: usize) -> PyResult<f64> {
        if grid_n < 2 {
            return Err(PyValueError::new_err("grid_n must be at least 2"));
        }
        Ok(w0_bruteforce(&self.inner, &mat32(xi), grid_n).to_f64())
    }

    /// `(c̄₁, r₁, c)`.
    fn growth_certificate(&self) -> PyResult<(f64, f64, f64)> {
        let c = growth_certificate(&self.inner).map_err(err)?;
        Ok((c.c_bar1, c.r1, c.c))
    }

    fn four_corner(&self, xi: [[f64; 2]; 3]) -> PyResult<f64> {
        let m = &self.inner;
        let density = |x: &Mat32| w0_closed_form(m, x).value;
        Ok(four_corner_bound(&mat32(xi), &density).map_err(err)?.to_f64())
    }

    /// Minimum of `W(ξ|ζ)` over `det(ξ|ζ) ≥ 1/j`, with the minimizer.
    fn constrained_min(&self, xi: [[f64; 2]; 3], j: u64) -> PyResult<(f64, [f64; 3])> {
        let r = cell_min_constrained(&self.inner, &mat32(xi), Sign::Plus, j).map_err(err)?;
        Ok((r.value.to_f64(), r.zeta.0))
    }

    /// Blended-director energy for the affine field `ξ x` on the unit square.
    #[pyo3(signature = (xi, j = 4, n = 64))]
    fn blended_energy(&self, xi: [[f64; 2]; 3], j: u64, n: u64) -> PyResult<f64> {
        let mesh = TriMesh::unit_square(1).map_err(err)?;
        let v = PwAffineField::affine(mesh, &mat32(xi), Vec3::ZERO);
        Ok(nirf_value(&self.inner, &v, j, n).map_err(err)?.value.to_f64())
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, p={})", self.spec.barrier, self.spec.p)
    }
}

/// Lamination tables for `W₀` of a model.
#[pyclass(name = "Envelope", frozen)]
struct PyEnvelope {
    tables: Arc<LaminationTables>,
}

#[pymethods]
impl PyEnvelope {
    /// `coarse` selects a small search grid for quick runs.
    #[new]
    #[pyo3(signature = (model, levels = 2, coarse = true))]
    fn new(py: Python<'_>, model: &PyModel, levels: usize, coarse: bool) -> PyResult<Self> {
        let m = EnergyModel::from_spec(model.spec).map_err(err)?;
        let density: SharedDensity = Arc::new(move |xi: &Mat32| w0_closed_form(&m, xi).value);
        let params = if coarse { SearchParams::coarse() } else { SearchParams::default() };
        let tables = py
            .detach(|| LaminationTables::build(density, levels, params))
            .map_err(err)?;
        Ok(PyEnvelope {
            tables: Arc::new(tables),
        })
    }

    #[getter]
    fn levels(&self) -> usize {
        self.tables.levels()
    }

    /// Certified laminate upper bound at `ξ`.
    fn laminate(&self, xi: [[f64; 2]; 3], depth: usize) -> PyResult<f64> {
        Ok(self.tables.laminate(&mat32(xi), depth).map_err(err)?.value.to_f64())
    }

    /// Bilinear table value, `None` outside the tabulated stretches.
    fn interpolate(&self, xi: [[f64; 2]; 3], level: usize) -> PyResult<Option<f64>> {
        if level > self.tables.levels() {
            return Err(PyValueError::new_err("level exceeds the built levels"));
        }
        Ok(self.tables.interpolant(level).eval(&mat32(xi)))
    }
}

/// Runs a thin-film experiment given as JSON and returns the sweep report
/// as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let exp: Experiment = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = py.detach(|| exp.run()).map_err(err)?;
    out.report.to_json().map_err(err)
}

#[pymodule]
fn memrelax(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyEnvelope>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
