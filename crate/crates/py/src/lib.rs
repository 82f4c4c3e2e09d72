//! Python bindings: datasets, the full pipeline and the individual estimators.

use std::collections::BTreeSet;
use std::path::PathBuf;

use num_complex::{Complex32, Complex64};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyArray3, PyArrayMethods, PyReadonlyArray1, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use a2g_core::dataset::{self, CsiTensor, RadioMeta, TrajectorySeries};
use a2g_core::delayline::{self, DelayWindow, Pdp};
use a2g_core::fading::{self, KStatus, KfactorSample};
use a2g_core::pipeline::{self, RunConfig, Stage, StageError};
use a2g_core::stationarity::{self, CorrMatrix};
use a2g_core::{metrics, report, synth, Error};

create_exception!(a2g, A2gError, PyException);
create_exception!(a2g, PipelineError, A2gError);

fn err(e: Error) -> PyErr {
    match e {
        Error::ConfigInvalid(_) | Error::UnsupportedPattern(_) => PyValueError::new_err(e.to_string()),
        Error::Io(io) => io.into(),
        e => A2gError::new_err(e.to_string()),
    }
}

fn stage_err(e: StageError) -> PyErr {
    PipelineError::new_err((e.stage.name(), e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| A2gError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Measurement or synthetic dataset: CSI tensor, trajectory and radio metadata.
#[pyclass(module = "a2g", frozen)]
struct Dataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl Dataset {
    /// Builds a dataset from a metadata dict/JSON string, a complex64 CSI
    /// array of shape (N, M, F), timestamps (N,) and positions (N, 3).
    #[new]
    fn new(
        py: Python<'_>,
        meta: &Bound<'_, PyAny>,
        csi: PyReadonlyArray3<'_, Complex32>,
        timestamps: PyReadonlyArray1<'_, f64>,
        positions: PyReadonlyArray2<'_, f64>,
    ) -> PyResult<Self> {
        let text: String = match meta.extract::<String>() {
            Ok(s) => s,
            Err(_) => py.import("json")?.call_method1("dumps", (meta,))?.extract()?,
        };
        let meta: RadioMeta = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let arr = csi.as_array();
        let shape = arr.shape();
        let data = arr.iter().copied().collect();
        let csi = CsiTensor::new(shape[0], shape[1], shape[2], data).map_err(err)?;
        let pos = positions.as_array();
        if pos.ncols() != 3 {
            return Err(PyValueError::new_err("positions must have shape (N, 3)"));
        }
        let positions = pos.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        let traj = TrajectorySeries::new(timestamps.as_array().to_vec(), positions).map_err(err)?;
        Ok(Self {
            inner: dataset::Dataset::new(meta, csi, traj).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::load_dataset(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dataset::write_dataset(path, &self.inner).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.csi.shape()
    }

    #[getter]
    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.meta)
    }

    /// CSI tensor as a complex64 array of shape (N, M, F).
    fn csi<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray3<Complex32>>> {
        let (n, m, f) = self.inner.csi.shape();
        self.inner.csi.data().to_vec().into_pyarray(py).reshape([n, m, f])
    }

    fn timestamps<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        self.inner.trajectory.timestamps.clone().into_pyarray(py)
    }

    fn positions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        let flat: Vec<f64> = self.inner.trajectory.positions.iter().flatten().copied().collect();
        flat.into_pyarray(py).reshape([self.inner.trajectory.len(), 3])
    }

    fn __len__(&self) -> usize {
        self.inner.n_snapshots()
    }

    fn __repr__(&self) -> String {
        let (n, m, f) = self.inner.csi.shape();
        format!("Dataset(n_snapshots={n}, n_antennas={m}, n_subcarriers={f})")
    }
}

/// Generates a synthetic dataset from a synth config (dict or JSON string).
/// Returns `(dataset, ground_truth)`.
#[pyfunction]
fn synthesize<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<(Dataset, Bound<'py, PyAny>)> {
    let text: String = match config.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (config,))?.extract()?,
    };
    let cfg = synth::SynthConfig::from_json(&text).map_err(err)?;
    let (ds, truth) = py.detach(|| synth::generate_dataset(&cfg)).map_err(err)?;
    Ok((Dataset { inner: ds }, to_py(py, &truth)?))
}

#[allow(clippy::too_many_arguments)]
fn run_config(
    gamma: f64,
    ls_window_lambda: f64,
    corr_window: usize,
    snr_db: f64,
    noise_gate_db: f64,
    n_bands: usize,
    anchor_stride: usize,
    h_min_m: f64,
    delay_window: &str,
    fit_max_samples: Option<usize>,
    seed: u64,
    skip: Vec<String>,
    threads: Option<usize>,
) -> PyResult<RunConfig> {
    let skip: BTreeSet<Stage> = skip
        .iter()
        .map(|s| s.parse())
        .collect::<a2g_core::Result<_>>()
        .map_err(err)?;
    let cfg = RunConfig {
        gamma,
        ls_window_lambda,
        corr_window,
        snr_db,
        noise_gate_db,
        n_bands,
        anchor_stride,
        h_min_m,
        delay_window: delay_window.parse().map_err(err)?,
        fit_max_samples,
        seed,
        skip,
        threads,
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Result of a pipeline run. `report` mirrors report.json; the remaining
/// accessors expose per-sample and per-window series.
#[pyclass(module = "a2g", frozen)]
struct Analysis {
    inner: pipeline::Analysis,
}

#[pymethods]
impl Analysis {
    #[getter]
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.report)
    }

    fn report_json(&self) -> PyResult<String> {
        report::to_json(&self.inner.report).map_err(err)
    }

    /// Dict of power series: p, p_clean, p_ls, a_ssf.
    fn power<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let p = &self.inner.power;
        d.set_item("p", p.p.clone().into_pyarray(py))?;
        d.set_item("p_clean", p.p_clean.clone().into_pyarray(py))?;
        d.set_item("p_ls", p.p_ls.clone().into_pyarray(py))?;
        d.set_item("a_ssf", p.a_ssf.clone().into_pyarray(py))?;
        Ok(d)
    }

    fn coherence_bandwidth<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        self.inner
            .coherence
            .iter()
            .map(|c| c.b_coh_hz)
            .collect::<Vec<_>>()
            .into_pyarray(py)
    }

    fn regions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.regions)
    }

    fn window_plan<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.plan)
    }

    fn delay_spread<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.delay)
    }

    fn kfactor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.kfactor)
    }

    fn spectral_efficiency<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.se)
    }

    fn fits<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.fits)
    }
}

macro_rules! with_run_config {
    ($name:ident, $doc:literal, ($($arg:ident : $ty:ty $(= $def:expr)?),*), $body:expr) => {
        #[doc = $doc]
        #[pyfunction]
        #[pyo3(signature = (
            $($arg $(= $def)?,)*
            *,
            gamma = 0.20,
            ls_window_lambda = 60.0,
            corr_window = 50,
            snr_db = 20.0,
            noise_gate_db = 25.0,
            n_bands = 5,
            anchor_stride = 1,
            h_min_m = 10.0,
            delay_window = "rectangular",
            fit_max_samples = None,
            seed = 0,
            skip = Vec::new(),
            threads = None
        ))]
        #[allow(clippy::too_many_arguments)]
        fn $name(
            py: Python<'_>,
            $($arg: $ty,)*
            gamma: f64,
            ls_window_lambda: f64,
            corr_window: usize,
            snr_db: f64,
            noise_gate_db: f64,
            n_bands: usize,
            anchor_stride: usize,
            h_min_m: f64,
            delay_window: &str,
            fit_max_samples: Option<usize>,
            seed: u64,
            skip: Vec<String>,
            threads: Option<usize>,
        ) -> PyResult<Analysis> {
            let cfg = run_config(
                gamma, ls_window_lambda, corr_window, snr_db, noise_gate_db, n_bands,
                anchor_stride, h_min_m, delay_window, fit_max_samples, seed, skip, threads,
            )?;
            let f = $body;
            let inner = py.detach(|| f(&cfg)).map_err(stage_err)?;
            Ok(Analysis { inner })
        }
    };
}

with_run_config!(
    analyze,
    "Runs the pipeline on an in-memory dataset; with `out_dir` the CSVs and report.json are written there.",
    (dataset: PyRef<'_, Dataset>, out_dir: Option<PathBuf> = None),
    {
        let ds: &dataset::Dataset = &dataset.inner;
        move |cfg: &RunConfig| {
            if let Some(dir) = &out_dir {
                std::fs::create_dir_all(dir).map_err(|e| StageError { stage: Stage::Report, source: e.into() })?;
            }
            pipeline::analyze(ds, out_dir.as_deref(), cfg)
        }
    }
);

with_run_config!(
    run_analysis,
    "Loads a dataset directory, runs the pipeline and writes outputs into `out_dir`.",
    (dataset_dir: PathBuf, out_dir: PathBuf),
    |cfg: &RunConfig| pipeline::run_analysis(&dataset_dir, &out_dir, cfg)
);

/// Moment-based Rician K from a window of power samples: `(k_linear, k_db)`.
#[pyfunction]
fn kfactor_moment(power: PyReadonlyArray1<'_, f64>) -> PyResult<(f64, f64)> {
    let k = fading::kfactor_moment(&power.as_array().to_vec()).map_err(err)?;
    Ok((k.k_linear, k.k_db))
}

/// Fits Rayleigh, Rician, Nakagami and lognormal to envelope samples.
#[pyfunction]
fn fit_envelope<'py>(py: Python<'py>, samples: PyReadonlyArray1<'_, f64>) -> PyResult<Bound<'py, PyAny>> {
    let fits = fading::fit_all(&samples.as_array().to_vec()).map_err(err)?;
    to_py(py, &fits)
}

/// Least-squares fit of K_dB(h) = a·ln(h) + b over heights ≥ `h_min`.
#[pyfunction]
#[pyo3(signature = (heights_m, k_db, h_min = 10.0))]
fn fit_k_height<'py>(
    py: Python<'py>,
    heights_m: PyReadonlyArray1<'_, f64>,
    k_db: PyReadonlyArray1<'_, f64>,
    h_min: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (h, k) = (heights_m.as_array(), k_db.as_array());
    if h.len() != k.len() {
        return Err(PyValueError::new_err("heights and K values differ in length"));
    }
    let samples: Vec<KfactorSample> = h
        .iter()
        .zip(k.iter())
        .enumerate()
        .map(|(i, (&height_m, &k_db))| KfactorSample {
            window_index: i,
            t_center: i,
            k_linear: 10f64.powf(k_db / 10.0),
            k_db,
            height_m,
            elevation_rad: f64::NAN,
            azimuth_rad: f64::NAN,
            status: if k_db.is_finite() { KStatus::Valid } else { KStatus::MomentMismatch },
        })
        .collect();
    to_py(py, &fading::fit_k_height(&samples, h_min).map_err(err)?)
}

/// Mean delay and RMS delay spread of a power delay profile, in seconds.
#[pyfunction]
fn delay_moments(pdp: PyReadonlyArray1<'_, f64>, tap_spacing_s: f64) -> PyResult<(f64, f64)> {
    let pdp = Pdp {
        power: pdp.as_array().to_vec(),
        tap_spacing_s,
    };
    let m = delayline::delay_moments(&pdp).map_err(err)?;
    Ok((m.mean_delay_s, m.rms_delay_spread_s))
}

/// Averaged PDP of the window `[t, t + w)`, gated `gate_db` below the peak.
#[pyfunction]
#[pyo3(signature = (dataset, t, w, gate_db = 25.0, window = "rectangular"))]
fn averaged_pdp<'py>(
    py: Python<'py>,
    dataset: PyRef<'_, Dataset>,
    t: usize,
    w: usize,
    gate_db: f64,
    window: &str,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let window: DelayWindow = window.parse().map_err(err)?;
    let ds = &dataset.inner;
    let pdp = delayline::averaged_pdp(&ds.csi, &ds.meta, t, w, gate_db, window).map_err(err)?;
    Ok(pdp.power.into_pyarray(py))
}

/// Frequency correlation of one snapshot, lags −(F−1)..=F−1, and the
/// derived coherence bandwidth.
#[pyfunction]
fn frequency_correlation<'py>(
    py: Python<'py>,
    dataset: PyRef<'_, Dataset>,
    n: usize,
) -> PyResult<(Bound<'py, PyArray1<Complex64>>, Bound<'py, PyAny>)> {
    let ds = &dataset.inner;
    if n >= ds.n_snapshots() {
        return Err(PyValueError::new_err("snapshot index out of range"));
    }
    let r = stationarity::freq_correlation(ds.csi.snapshot(n), ds.meta.n_antennas).map_err(err)?;
    let coh = stationarity::coherence_bandwidth(&r, &ds.meta);
    Ok((r.values().to_vec().into_pyarray(py), to_py(py, &coh)?))
}

fn corr_matrix(a: PyReadonlyArray2<'_, Complex64>) -> PyResult<CorrMatrix> {
    let a = a.as_array();
    if a.nrows() != a.ncols() {
        return Err(PyValueError::new_err("correlation matrix must be square"));
    }
    CorrMatrix::new(a.nrows(), a.iter().copied().collect()).map_err(err)
}

/// Correlation matrix distance between two square complex matrices.
#[pyfunction]
fn cmd(r1: PyReadonlyArray2<'_, Complex64>, r2: PyReadonlyArray2<'_, Complex64>) -> PyResult<f64> {
    stationarity::cmd(&corr_matrix(r1)?, &corr_matrix(r2)?).map_err(err)
}

/// Receive correlation matrix over snapshots `[t, t + w)` and the centered band of `b` subcarriers.
#[pyfunction]
fn receive_corr_matrix<'py>(
    py: Python<'py>,
    dataset: PyRef<'_, Dataset>,
    t: usize,
    w: usize,
    b: usize,
) -> PyResult<Bound<'py, PyArray2<Complex64>>> {
    let r = stationarity::receive_corr_matrix(&dataset.inner.csi, t, w, b).map_err(err)?;
    let m = r.dim();
    r.data().to_vec().into_pyarray(py).reshape([m, m])
}

/// MRC spectral efficiency (bit/s/Hz) averaged over snapshots `[t, t + w)`.
#[pyfunction]
#[pyo3(signature = (dataset, t, w, snr_db = 20.0))]
fn spectral_efficiency(dataset: PyRef<'_, Dataset>, t: usize, w: usize, snr_db: f64) -> PyResult<f64> {
    metrics::spectral_efficiency(&dataset.inner.csi, t, w, snr_db).map_err(err)
}

/// Pearson correlation coefficient.
#[pyfunction]
fn pearson(x: PyReadonlyArray1<'_, f64>, y: PyReadonlyArray1<'_, f64>) -> PyResult<f64> {
    metrics::pearson(&x.as_array().to_vec(), &y.as_array().to_vec()).map_err(err)
}

/// Renders the summary tables of a report JSON string (`md` or `csv`).
#[pyfunction]
#[pyo3(signature = (report_json, format = "md"))]
fn render_report(report_json: &str, format: &str) -> PyResult<String> {
    let value = report::parse_report(report_json).map_err(err)?;
    Ok(report::render_tables(&value, format.parse().map_err(err)?))
}

#[pymodule]
fn a2g(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("A2gError", py.get_type::<A2gError>())?;
    m.add("PipelineError", py.get_type::<PipelineError>())?;
    m.add("REPORT_SCHEMA", report::REPORT_SCHEMA)?;
    m.add("SCHEMA_VERSION", report::SCHEMA_VERSION)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Analysis>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(kfactor_moment, m)?)?;
    m.add_function(wrap_pyfunction!(fit_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(fit_k_height, m)?)?;
    m.add_function(wrap_pyfunction!(delay_moments, m)?)?;
    m.add_function(wrap_pyfunction!(averaged_pdp, m)?)?;
    m.add_function(wrap_pyfunction!(frequency_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(cmd, m)?)?;
    m.add_function(wrap_pyfunction!(receive_corr_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    Ok(())
}
