//! Python bindings for the chipfield engine.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use engine::compare::{compare_maps, load_reference, Alignment};
use engine::config::{parse_config, RunConfig};
use engine::fieldmap::{compute_field_map, point_to_point_field};
use engine::geometry::Point;
use engine::materials::{propagation_constants_with, AlphaLambdaMode, MaterialProperties};
use engine::raytrace::Polarization;
use engine::{Complex64, Error};

type LinkParts = Vec<(String, f64, Complex64)>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NumericalFailure(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Cell { ref source, .. } if matches!(**source, Error::NumericalFailure(_)) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_arg<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// Attenuation and phase constants `(alpha, beta)` in 1/m.
#[pyfunction]
#[pyo3(signature = (epsilon_r, tan_delta, frequency_hz, alpha_lambda_mode = "free_space"))]
fn propagation_constants(
    epsilon_r: f64,
    tan_delta: f64,
    frequency_hz: f64,
    alpha_lambda_mode: &str,
) -> PyResult<(f64, f64)> {
    let mode: AlphaLambdaMode = parse_arg(alpha_lambda_mode)?;
    let m = MaterialProperties::dielectric("material", epsilon_r, tan_delta).map_err(to_py)?;
    let pc = propagation_constants_with(&m, frequency_hz, mode).map_err(to_py)?;
    Ok((pc.alpha, pc.beta))
}

/// Fresnel coefficients `(r, t, total_internal_reflection)`.
#[pyfunction]
#[pyo3(signature = (theta_i, n1, n2, polarization = "perpendicular"))]
fn fresnel(
    theta_i: f64,
    n1: f64,
    n2: f64,
    polarization: &str,
) -> PyResult<(Complex64, Complex64, bool)> {
    let pol: Polarization = parse_arg(polarization)?;
    let c = engine::raytrace::fresnel(theta_i, n1, n2, pol).map_err(to_py)?;
    Ok((c.r, c.t, c.is_tir()))
}

#[pyfunction]
fn near_field_relative_power(k: f64, d: f64) -> PyResult<f64> {
    engine::nearfield::near_field_relative_power(k, d).map_err(to_py)
}

/// A package, its materials and the trace settings.
#[pyclass(module = "chipfield")]
struct Simulation {
    config: RunConfig,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (frequency_ghz = 60.0, resolution_mm = 0.1, workers = 0))]
    fn new(frequency_ghz: f64, resolution_mm: f64, workers: usize) -> PyResult<Self> {
        let mut config = RunConfig::example();
        config.frequency_ghz = frequency_ghz;
        config.geometry.grid_resolution_mm = resolution_mm;
        config.workers = workers;
        config.scene().map_err(to_py)?;
        Ok(Self { config })
    }

    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let config = parse_config(&path).map_err(to_py)?;
        Ok(Self { config })
    }

    #[getter]
    fn frequency_ghz(&self) -> f64 {
        self.config.frequency_ghz
    }

    #[getter]
    fn resolution_mm(&self) -> f64 {
        self.config.geometry.grid_resolution_mm
    }

    /// Configuration text equivalent to this simulation.
    fn config_text(&self) -> String {
        self.config.to_config_string()
    }

    /// Field over the die. Returns a dict with `axis_mm`, `mag_db` (row-major,
    /// y outer, `None` for the antenna cell), `field` and `reference`.
    fn field_map<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let scene = self.config.scene().map_err(to_py)?;
        let options = self.config.map_options().map_err(to_py)?;
        let spec = self.config.grid_spec();
        let grid = py
            .detach(|| compute_field_map(&scene, &spec, &options))
            .map_err(to_py)?;
        let mag: Vec<Option<f64>> = grid
            .magnitudes_db
            .iter()
            .zip(&grid.excluded)
            .map(|(&v, &e)| (!e).then_some(v))
            .collect();
        let axis: Vec<f64> = grid.axis.iter().map(|a| a * 1e3).collect();
        let d = PyDict::new(py);
        d.set_item("axis_mm", axis)?;
        d.set_item("mag_db", mag)?;
        d.set_item("field", grid.values.clone())?;
        d.set_item("reference", grid.reference)?;
        Ok(d)
    }

    /// Writes the field map CSV to `path`.
    fn write_field_map(&self, py: Python<'_>, path: PathBuf) -> PyResult<()> {
        let scene = self.config.scene().map_err(to_py)?;
        let options = self.config.map_options().map_err(to_py)?;
        let spec = self.config.grid_spec();
        let grid = py
            .detach(|| compute_field_map(&scene, &spec, &options))
            .map_err(to_py)?;
        std::fs::write(&path, grid.to_csv_string())
            .map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
    }

    /// Field at `(rx_x_mm, rx_y_mm)` from the antenna. Returns
    /// `(total, [(kind, path_mm, amplitude), ...])`.
    fn link(&self, rx_x_mm: f64, rx_y_mm: f64) -> PyResult<(Complex64, LinkParts)> {
        let scene = self.config.scene().map_err(to_py)?;
        let options = self.config.map_options().map_err(to_py)?;
        let rx = Point::new(rx_x_mm * 1e-3, rx_y_mm * 1e-3);
        let link =
            point_to_point_field(&scene, scene.geometry.antenna, rx, &options).map_err(to_py)?;
        let parts = link
            .components
            .iter()
            .map(|c| (c.kind.to_string(), c.path_length() * 1e3, c.amplitude))
            .collect();
        Ok((link.total, parts))
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulation(frequency_ghz={}, resolution_mm={})",
            self.config.frequency_ghz, self.config.geometry.grid_resolution_mm
        )
    }
}

/// Compares two field-map CSV files. Returns a dict with
/// `geometric_mean_error_db`, `max_error_db` and `cells_compared`.
#[pyfunction]
#[pyo3(signature = (model_path, reference_path, alignment = "nearest"))]
fn compare_csv<'py>(
    py: Python<'py>,
    model_path: PathBuf,
    reference_path: PathBuf,
    alignment: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let alignment: Alignment = parse_arg(alignment)?;
    let model = load_reference(&model_path).map_err(to_py)?;
    let reference = load_reference(&reference_path).map_err(to_py)?;
    let report = compare_maps(&model, &reference, alignment).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("geometric_mean_error_db", report.geometric_mean_error_db)?;
    d.set_item("max_error_db", report.max_error_db)?;
    d.set_item("cells_compared", report.cells_compared)?;
    d.set_item("alignment", report.alignment.to_string())?;
    Ok(d)
}

#[pymodule]
fn chipfield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(propagation_constants, m)?)?;
    m.add_function(wrap_pyfunction!(fresnel, m)?)?;
    m.add_function(wrap_pyfunction!(near_field_relative_power, m)?)?;
    m.add_function(wrap_pyfunction!(compare_csv, m)?)?;
    m.add_class::<Simulation>()?;
    m.add("SPEED_OF_LIGHT", engine::materials::SPEED_OF_LIGHT)?;
    Ok(())
}
