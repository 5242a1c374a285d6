//! Python bindings. Angles cross the boundary in degrees, covariances as
//! nested lists of complex numbers (one `N x N` matrix per band, DL first).

use std::path::PathBuf;

use hrf_core::harness::{self, parse_algorithms, ExperimentSpec, MseRow};
use hrf_core::scene::{band_rng, make_scenario_with_targets, synthesize_band, Scenario};
use hrf_core::{
    crb_targets, estimators, steering_vector, Angle, ArrayGeometry, CMatrix, CrbInputs, EstimateResult, FmlOptions,
    FusedOptions, GridSpec, SearchGrid, C64,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: hrf_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn angle(deg: f64) -> PyResult<Angle> {
    Angle::from_degrees(deg).map_err(err)
}

fn to_matrix(rows: &[Vec<C64>]) -> PyResult<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("covariances must be square"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_matrices(covs: Vec<Vec<Vec<C64>>>) -> PyResult<Vec<CMatrix>> {
    covs.iter().map(|c| to_matrix(c)).collect()
}

fn from_matrix(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn grid(n: usize, step_deg: f64) -> PyResult<SearchGrid> {
    SearchGrid::new(ArrayGeometry::half_wavelength(n).map_err(err)?, GridSpec::with_step_deg(step_deg)).map_err(err)
}

fn full_visibility(q: usize, bands: usize, visibility: Option<Vec<Vec<usize>>>) -> Vec<Vec<usize>> {
    visibility.unwrap_or_else(|| vec![(0..q).collect(); bands])
}

/// Outcome of one estimator run.
#[pyclass(name = "Estimate", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimate {
    #[pyo3(get)]
    targets_deg: Vec<f64>,
    #[pyo3(get)]
    users_deg: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    objective_trace: Vec<f64>,
    #[pyo3(get)]
    flags: Vec<String>,
}

impl From<EstimateResult> for PyEstimate {
    fn from(r: EstimateResult) -> Self {
        Self {
            targets_deg: r.target_angles.iter().map(|a| a.degrees()).collect(),
            users_deg: r.user_angles.iter().map(|a| a.degrees()).collect(),
            iterations: r.iterations,
            converged: r.converged,
            objective_trace: r.objective_trace,
            flags: r.flags.iter().map(|f| format!("{f:?}")).collect(),
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate(targets_deg={:?}, users_deg={:?}, iterations={})", self.targets_deg, self.users_deg, self.iterations)
    }
}

/// Steering vector of an `n`-element half-wavelength ULA.
#[pyfunction]
fn steering(n: usize, theta_deg: f64) -> PyResult<Vec<C64>> {
    let g = ArrayGeometry::half_wavelength(n).map_err(err)?;
    Ok(steering_vector(&g, angle(theta_deg)?).iter().copied().collect())
}

/// Sample covariances of one Monte Carlo trial, DL band first.
#[pyfunction]
#[pyo3(signature = (scenario, users, antennas, targets_deg, snr_db, seed, trial = 0))]
fn synthesize(
    scenario: u8,
    users: usize,
    antennas: usize,
    targets_deg: Vec<f64>,
    snr_db: f64,
    seed: u64,
    trial: usize,
) -> PyResult<Vec<Vec<Vec<C64>>>> {
    let bands = trial_bands(scenario, users, antennas, &targets_deg, snr_db, seed, trial)?.1;
    Ok(bands.iter().map(|b| from_matrix(&b.covariance)).collect())
}

fn trial_bands(
    scenario: u8,
    users: usize,
    antennas: usize,
    targets_deg: &[f64],
    snr_db: f64,
    seed: u64,
    trial: usize,
) -> PyResult<(ArrayGeometry, Vec<hrf_core::BandData>, hrf_core::SceneConfig)> {
    let which = Scenario::try_from(scenario).map_err(err)?;
    let targets = targets_deg.iter().map(|&d| angle(d)).collect::<PyResult<Vec<_>>>()?;
    let (scene, configs) = make_scenario_with_targets(which, users, antennas, targets, snr_db).map_err(err)?;
    let geo = ArrayGeometry::half_wavelength(antennas).map_err(err)?;
    let bands = configs
        .iter()
        .map(|b| synthesize_band(&scene, b, &geo, &mut band_rng(seed, 0, trial, b.band_index)))
        .collect::<hrf_core::Result<Vec<_>>>()
        .map_err(err)?;
    Ok((geo, bands, scene))
}

/// Fused ML estimate by alternating projection. `user_prior_deg` skips the user updates.
#[pyfunction]
#[pyo3(signature = (covariances, q, visibility = None, user_prior_deg = None, eps = 1e-6, max_iters = 30, grid_step_deg = 0.5))]
fn fml(
    covariances: Vec<Vec<Vec<C64>>>,
    q: usize,
    visibility: Option<Vec<Vec<usize>>>,
    user_prior_deg: Option<Vec<f64>>,
    eps: f64,
    max_iters: usize,
    grid_step_deg: f64,
) -> PyResult<PyEstimate> {
    let covs = to_matrices(covariances)?;
    let n = covs.first().map_or(0, |c| c.nrows());
    let vis = full_visibility(q, covs.len(), visibility);
    let opts = FmlOptions {
        eps,
        max_iters,
        user_prior: user_prior_deg.map(|u| u.iter().map(|d| d.to_radians()).collect()),
    };
    let r = estimators::fml_estimate(&covs, q, &vis, &grid(n, grid_step_deg)?, &opts).map_err(err)?;
    Ok(r.into())
}

/// Project-then-fuse subspace estimate.
#[pyfunction]
#[pyo3(signature = (covariances, q, visibility = None, eps = 1e-6, max_iters = 30, grid_step_deg = 0.5))]
fn fused(
    covariances: Vec<Vec<Vec<C64>>>,
    q: usize,
    visibility: Option<Vec<Vec<usize>>>,
    eps: f64,
    max_iters: usize,
    grid_step_deg: f64,
) -> PyResult<PyEstimate> {
    let covs = to_matrices(covariances)?;
    let n = covs.first().map_or(0, |c| c.nrows());
    let vis = full_visibility(q, covs.len(), visibility);
    let opts = FusedOptions { eps, max_iters, record_spectra: false };
    let r = estimators::fused_subspace_estimate(&covs, q, &vis, &grid(n, grid_step_deg)?, &opts).map_err(err)?;
    Ok(r.result.into())
}

/// MUSIC on the average of the band covariances.
#[pyfunction]
#[pyo3(signature = (covariances, q, num_sources, include_dl = true, grid_step_deg = 0.5))]
fn naive_music(
    covariances: Vec<Vec<Vec<C64>>>,
    q: usize,
    num_sources: usize,
    include_dl: bool,
    grid_step_deg: f64,
) -> PyResult<PyEstimate> {
    let covs = to_matrices(covariances)?;
    let n = covs.first().map_or(0, |c| c.nrows());
    let r = estimators::naive_music(&covs, q, num_sources, &grid(n, grid_step_deg)?, include_dl).map_err(err)?;
    Ok(r.into())
}

/// Per-target CRB (rad^2) for the realized symbols of one trial.
#[pyfunction]
#[pyo3(signature = (scenario, users, antennas, targets_deg, snr_db, seed, trial = 0))]
fn crb(
    scenario: u8,
    users: usize,
    antennas: usize,
    targets_deg: Vec<f64>,
    snr_db: f64,
    seed: u64,
    trial: usize,
) -> PyResult<Vec<f64>> {
    let (geo, bands, scene) = trial_bands(scenario, users, antennas, &targets_deg, snr_db, seed, trial)?;
    let inputs = CrbInputs::from_bands(geo, &scene, &bands).map_err(err)?;
    Ok(crb_targets(&inputs).map_err(err)?.per_target_variance)
}

/// Mean squared error in rad^2 after sorted pairing; inputs in degrees.
#[pyfunction]
fn mse(estimates_deg: Vec<Vec<f64>>, truth_deg: Vec<f64>) -> PyResult<f64> {
    let rad = |v: &[f64]| v.iter().map(|d| d.to_radians()).collect::<Vec<_>>();
    let est: Vec<Vec<f64>> = estimates_deg.iter().map(|e| rad(e)).collect();
    hrf_core::mse(&est, &rad(&truth_deg)).map_err(err)
}

fn row_dict<'py>(py: Python<'py>, r: &MseRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("algorithm", &r.algorithm)?;
    d.set_item("snr_db", r.snr_db)?;
    d.set_item("mse_rad2", r.mse_rad2)?;
    d.set_item("crb_rad2", r.crb_rad2)?;
    d.set_item("trials_used", r.trials_used)?;
    d.set_item("failures", r.failures)?;
    Ok(d)
}

/// Monte Carlo sweep; returns one dict per (SNR, algorithm) row. With `out`
/// set, results.csv and spec.json (and any requested dumps) are written there.
#[pyfunction]
#[pyo3(signature = (
    scenario = 1, users = 2, antennas = 5, targets_deg = None, snr_db = None, trials = 200,
    algorithms = "fml,fml-prior,fused,naive", crb = false, seed = 0, out = None,
    dump_spectra = false, dump_trace = false
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    scenario: u8,
    users: usize,
    antennas: usize,
    targets_deg: Option<Vec<f64>>,
    snr_db: Option<Vec<f64>>,
    trials: usize,
    algorithms: &str,
    crb: bool,
    seed: u64,
    out: Option<PathBuf>,
    dump_spectra: bool,
    dump_trace: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let defaults = ExperimentSpec::default();
    let spec = ExperimentSpec {
        scenario,
        users,
        antennas,
        targets_deg: targets_deg.unwrap_or(defaults.targets_deg),
        snr_grid_db: snr_db.unwrap_or(defaults.snr_grid_db),
        trials,
        algorithms: parse_algorithms(algorithms).map_err(err)?,
        include_crb: crb,
        master_seed: seed,
        output_dir: out.clone().unwrap_or(defaults.output_dir),
        dump_spectra,
        dump_trace,
        ..defaults
    };
    let table = py
        .detach(|| if out.is_some() { harness::run_experiment_to_dir(&spec) } else { harness::run_experiment(&spec) })
        .map_err(err)?;
    table.rows.iter().map(|r| row_dict(py, r)).collect()
}

#[pymodule]
fn hrfusion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(steering, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(fml, m)?)?;
    m.add_function(wrap_pyfunction!(fused, m)?)?;
    m.add_function(wrap_pyfunction!(naive_music, m)?)?;
    m.add_function(wrap_pyfunction!(crb, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("RESULTS_HEADER", harness::RESULTS_HEADER)?;
    Ok(())
}
