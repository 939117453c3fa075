//! Python module `thermoforge`: parts, toolpaths, simulation, windows,
//! metrics and the FNO surrogate.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use thermoforge_core as tf;
use tf::fno::{self, FnoConfig, ModeSet, TrainConfig};
use tf::geometry::{self, ShapeFamily};
use tf::windowing::{self, Channel, ExtractOptions};
use tf::{Dims, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::InvalidArgument(_) | Error::Shape(_) | Error::Config(_) | Error::InvalidGeometry(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn dims3(d: (usize, usize, usize)) -> Dims {
    Dims::new(d.0, d.1, d.2)
}

#[pyclass(name = "VoxelPart", module = "thermoforge", from_py_object)]
#[derive(Clone)]
struct PyVoxelPart(geometry::VoxelPart);

#[pymethods]
impl PyVoxelPart {
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn element_size_mm(&self) -> f64 {
        self.0.element_size_mm()
    }

    fn voxel_count(&self) -> usize {
        self.0.voxel_count()
    }

    /// Flat x-fastest occupancy.
    fn occupancy(&self) -> Vec<bool> {
        self.0.occupancy().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("VoxelPart(dims={:?}, voxels={})", self.dims(), self.0.voxel_count())
    }
}

#[pyclass(name = "BuildDomain", module = "thermoforge", from_py_object)]
#[derive(Clone)]
struct PyBuildDomain(geometry::BuildDomain);

#[pymethods]
impl PyBuildDomain {
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d.nx, d.ny, d.nz)
    }

    #[getter]
    fn substrate_layers(&self) -> usize {
        self.0.substrate_layers()
    }

    fn part_voxel_count(&self) -> usize {
        self.0.part_voxel_count()
    }
}

#[pyclass(name = "Schedule", module = "thermoforge", from_py_object)]
#[derive(Clone)]
struct PySchedule(tf::toolpath::ActivationSchedule);

#[pymethods]
impl PySchedule {
    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(i, j, k, time_s)` per event, in deposition order.
    fn events(&self) -> Vec<(usize, usize, usize, f64)> {
        self.0.events.iter().map(|e| (e.element.i, e.element.j, e.element.k, e.time_s)).collect()
    }

    fn total_time(&self) -> f64 {
        self.0.stats().duration_s
    }
}

#[pyclass(name = "History", module = "thermoforge")]
struct PyHistory(tf::thermal::TemperatureHistory);

#[pymethods]
impl PyHistory {
    fn __len__(&self) -> usize {
        self.0.snapshots().len()
    }

    fn max_temperature(&self) -> f32 {
        self.0.max_temperature()
    }

    /// `(time_s, temperatures)` of snapshot `i`.
    fn snapshot(&self, i: usize) -> PyResult<(f64, Vec<f32>)> {
        let s = self.0.snapshots().get(i).ok_or_else(|| PyValueError::new_err("snapshot index out of range"))?;
        Ok((s.time, s.temperature.clone()))
    }
}

#[pyclass(name = "WindowDataset", module = "thermoforge", from_py_object)]
#[derive(Clone)]
struct PyWindowDataset(windowing::WindowDataset);

#[pymethods]
impl PyWindowDataset {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn edge(&self) -> usize {
        self.0.edge
    }

    /// Channel names in storage order.
    #[staticmethod]
    fn channels() -> Vec<&'static str> {
        Channel::ALL.iter().map(|c| c.name()).collect()
    }

    /// `(geometry_id, event, anchor, channel_data)` of window `i`.
    fn sample(&self, i: usize) -> PyResult<(u32, u32, (u16, u16, u16), Vec<f32>)> {
        let s = self.0.samples.get(i).ok_or_else(|| PyValueError::new_err("window index out of range"))?;
        Ok((s.geometry_id, s.event, (s.anchor[0], s.anchor[1], s.anchor[2]), s.data.clone()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        windowing::save_dataset(&self.0, &path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        windowing::load_dataset(&path).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn merge(parts: Vec<PyWindowDataset>) -> PyResult<Self> {
        windowing::WindowDataset::merge(parts.into_iter().map(|p| p.0).collect()).map(Self).map_err(py_err)
    }
}

#[pyclass(name = "FnoModel", module = "thermoforge", from_py_object)]
#[derive(Clone)]
struct PyFnoModel(fno::FnoModel);

#[pymethods]
impl PyFnoModel {
    #[new]
    #[pyo3(signature = (width=32, depth=4, modes=(6, 6, 6), proj_hidden=64, seed=0, linear=false))]
    fn new(width: usize, depth: usize, modes: (usize, usize, usize), proj_hidden: usize, seed: u64, linear: bool) -> PyResult<Self> {
        let cfg = FnoConfig {
            width,
            depth,
            modes: ModeSet::new(modes.0, modes.1, modes.2).map_err(py_err)?,
            proj_hidden,
            activation: if linear { fno::Activation::Identity } else { fno::Activation::Gelu },
            ..FnoConfig::default()
        };
        fno::FnoModel::new(cfg, seed).map(Self).map_err(py_err)
    }

    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    /// One sample: `in_channels * nx*ny*nz` values, x-fastest per channel.
    fn forward(&self, input: Vec<f64>, dims: (usize, usize, usize)) -> PyResult<Vec<f64>> {
        self.0.forward(&input, dims3(dims)).map_err(py_err)
    }

    /// Flat parameter gradient of `sum(upstream * forward(input))`.
    fn gradient(&self, input: Vec<f64>, dims: (usize, usize, usize), upstream: Vec<f64>) -> PyResult<Vec<f64>> {
        let cache = self.0.forward_cached(&input, 1, dims3(dims)).map_err(py_err)?;
        self.0.backward(&cache, &upstream).map_err(py_err)
    }

    fn save(&self, path: PathBuf, dataset: &PyWindowDataset) -> PyResult<()> {
        fno::save_checkpoint(&path, &self.0, dataset.0.normalization, dataset.0.edge, None).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        fno::load_checkpoint(&path).map(|(m, _)| Self(m)).map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (seed, family, dims=(12, 12, 12), element_size_mm=2.0))]
fn generate_shape(seed: u64, family: &str, dims: (usize, usize, usize), element_size_mm: f64) -> PyResult<PyVoxelPart> {
    let fam: ShapeFamily = family.parse().map_err(py_err)?;
    let shape = geometry::generate_shape(seed, fam, dims3(dims)).map_err(py_err)?;
    geometry::VoxelPart::new(shape.dims(), shape.occupancy().to_vec(), element_size_mm)
        .map(PyVoxelPart)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (part, layers=2))]
fn attach_substrate(part: &PyVoxelPart, layers: usize) -> PyResult<PyBuildDomain> {
    geometry::attach_substrate(&part.0, layers).map(PyBuildDomain).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (domain, tool_speed_mm_s=5.0))]
fn plan_zigzag(domain: &PyBuildDomain, tool_speed_mm_s: f64) -> PyResult<PySchedule> {
    tf::toolpath::plan_zigzag(&domain.0, tool_speed_mm_s).map(PySchedule).map_err(py_err)
}

#[pyfunction]
fn simulate(py: Python<'_>, domain: &PyBuildDomain, schedule: &PySchedule) -> PyResult<PyHistory> {
    let (d, s) = (domain.0.clone(), schedule.0.clone());
    py.detach(move || tf::thermal::simulate(&d, &s, &tf::thermal::MaterialModel::default()))
        .map(PyHistory)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (history, domain, schedule, geometry_id=0, max_windows=None, seed=0))]
fn extract_windows(
    history: &PyHistory,
    domain: &PyBuildDomain,
    schedule: &PySchedule,
    geometry_id: u32,
    max_windows: Option<usize>,
    seed: u64,
) -> PyResult<PyWindowDataset> {
    let opts = ExtractOptions { max_windows, sample_seed: seed, ..ExtractOptions::default() };
    windowing::extract_windows(&history.0, &domain.0, &schedule.0, geometry_id, &opts)
        .map(PyWindowDataset)
        .map_err(py_err)
}

#[pyfunction]
fn window_count(event_count: usize, k_recent: usize) -> usize {
    windowing::window_count(event_count, k_recent)
}

#[pyfunction]
fn characteristic_radius(alpha_mm2_s: f64, dt_s: f64) -> PyResult<f64> {
    windowing::characteristic_radius(alpha_mm2_s, dt_s).map_err(py_err)
}

fn mask_or_all(mask: Option<Vec<bool>>, n: usize) -> Vec<bool> {
    mask.unwrap_or_else(|| vec![true; n])
}

#[pyfunction]
#[pyo3(signature = (pred, truth, mask=None))]
fn nl2(pred: Vec<f64>, truth: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<f64> {
    let m = mask_or_all(mask, pred.len());
    tf::metrics::nl2(&pred, &truth, &m).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (pred, truth, mask=None))]
fn mse(pred: Vec<f64>, truth: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<f64> {
    let m = mask_or_all(mask, pred.len());
    tf::metrics::mse(&pred, &truth, &m).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (pred, truth, mask=None))]
fn nrmse(pred: Vec<f64>, truth: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<f64> {
    let m = mask_or_all(mask, pred.len());
    tf::metrics::nrmse(&pred, &truth, &m).map_err(py_err)
}

/// R^2, or `None` for a zero-variance truth that is not matched exactly.
#[pyfunction]
#[pyo3(signature = (pred, truth, mask=None))]
fn r2(pred: Vec<f64>, truth: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<Option<f64>> {
    let m = mask_or_all(mask, pred.len());
    tf::metrics::r2(&pred, &truth, &m).map(|r| r.value()).map_err(py_err)
}

/// Trains `model` on `dataset`; returns the trained model and the epoch
/// history as a JSON string.
#[pyfunction]
#[pyo3(signature = (model, dataset, epochs=50, batch_size=64, lr=1e-3, weight_decay=1e-4, seed=0))]
fn train(
    py: Python<'_>,
    model: &PyFnoModel,
    dataset: &PyWindowDataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    weight_decay: f64,
    seed: u64,
) -> PyResult<(PyFnoModel, String)> {
    let mut cfg = TrainConfig { epochs, batch_size, split_seed: seed, shuffle_seed: seed.wrapping_add(1), ..TrainConfig::default() };
    cfg.adam.lr = lr;
    cfg.adam.weight_decay = weight_decay;
    let (m, ds) = (model.0.clone(), dataset.0.clone());
    let out = py.detach(move || fno::train(m, &ds, &cfg)).map_err(py_err)?;
    let history = serde_json::to_string(&out.history).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((PyFnoModel(out.model), history))
}

/// Runs cross-validation from a JSON run configuration; returns the report JSON.
#[pyfunction]
#[pyo3(signature = (config_json, deterministic=true))]
fn crossval(py: Python<'_>, config_json: &str, deterministic: bool) -> PyResult<String> {
    let cfg = tf::harness::RunConfig::from_json(config_json).map_err(py_err)?;
    let report = py.detach(move || tf::harness::crossval(&cfg, deterministic)).map_err(py_err)?;
    report.to_json().map_err(py_err)
}

#[pymodule]
#[pyo3(name = "thermoforge")]
fn thermoforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVoxelPart>()?;
    m.add_class::<PyBuildDomain>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyHistory>()?;
    m.add_class::<PyWindowDataset>()?;
    m.add_class::<PyFnoModel>()?;
    m.add_function(wrap_pyfunction!(generate_shape, m)?)?;
    m.add_function(wrap_pyfunction!(attach_substrate, m)?)?;
    m.add_function(wrap_pyfunction!(plan_zigzag, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(extract_windows, m)?)?;
    m.add_function(wrap_pyfunction!(window_count, m)?)?;
    m.add_function(wrap_pyfunction!(characteristic_radius, m)?)?;
    m.add_function(wrap_pyfunction!(nl2, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(nrmse, m)?)?;
    m.add_function(wrap_pyfunction!(r2, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(crossval, m)?)?;
    Ok(())
}
