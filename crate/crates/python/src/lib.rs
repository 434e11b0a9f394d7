//! Python bindings. Rates are entered in GHz (rate / 2π), times in
//! picoseconds, and detunings in units of g.

use blockade_core::blinking::{
    calibrated_background, synthesize_click_stream, BackgroundModel, Click, ClickStream, PeakModel, SynthesisConfig,
    TelegraphParams,
};
use blockade_core::correlations::{cw_statistics, detuning_unit, g2_spectrum, g2_tau_cw, pulsed_statistics};
use blockade_core::dynamics::{calibrate_drive, PulseShape};
use blockade_core::hbt::{build_histogram, fit_envelope, normalize_g2, Normalization};
use blockade_core::units::{ghz_to_rad, rad_to_ghz, NANOSECOND, PICOSECOND};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: blockade_core::Error) -> PyErr {
    match e {
        blockade_core::Error::InvalidParameter(_) | blockade_core::Error::Format(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Emitter-cavity parameters; `drive_ghz` is the coherent drive amplitude.
#[pyclass(name = "SystemParams", module = "blockade", from_py_object)]
#[derive(Clone, Copy)]
struct PySystemParams {
    inner: blockade_core::hilbert::SystemParams,
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (g_ghz=16.0, kappa_ghz=16.0, gamma_ghz=0.1, n_max=6, drive_ghz=0.0))]
    fn new(g_ghz: f64, kappa_ghz: f64, gamma_ghz: f64, n_max: usize, drive_ghz: f64) -> PyResult<Self> {
        let inner = blockade_core::hilbert::SystemParams {
            g: ghz_to_rad(g_ghz),
            kappa: ghz_to_rad(kappa_ghz),
            gamma: ghz_to_rad(gamma_ghz),
            drive_amp: ghz_to_rad(drive_ghz),
            n_max,
            ..Default::default()
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn g_ghz(&self) -> f64 {
        rad_to_ghz(self.inner.g)
    }

    #[getter]
    fn kappa_ghz(&self) -> f64 {
        rad_to_ghz(self.inner.kappa)
    }

    #[getter]
    fn gamma_ghz(&self) -> f64 {
        rad_to_ghz(self.inner.gamma)
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max
    }

    #[getter]
    fn drive_ghz(&self) -> f64 {
        rad_to_ghz(self.inner.drive_amp)
    }

    /// Copy with the drive calibrated to `photons` at `detuning` (units of g).
    #[pyo3(signature = (photons=0.4, detuning=1.0))]
    fn calibrated(&self, photons: f64, detuning: f64) -> PyResult<Self> {
        let e = calibrate_drive(&self.inner, photons, detuning * detuning_unit(&self.inner)).map_err(err)?;
        Ok(Self { inner: self.inner.with_drive(e) })
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(g_ghz={}, kappa_ghz={}, gamma_ghz={}, n_max={}, drive_ghz={})",
            self.g_ghz(),
            self.kappa_ghz(),
            self.gamma_ghz(),
            self.n_max(),
            self.drive_ghz()
        )
    }
}

/// Steady-state `(photons, g2)` at probe detuning `detuning` (units of g).
#[pyfunction]
fn cw(params: &PySystemParams, detuning: f64) -> PyResult<(f64, f64)> {
    let p = &params.inner;
    let s = cw_statistics(p, detuning * detuning_unit(p)).map_err(err)?;
    Ok((s.photons, s.g2))
}

/// `g²(0)` at each detuning (units of g).
#[pyfunction]
fn g2_zero(params: &PySystemParams, detunings: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(g2_spectrum(&params.inner, &detunings).map_err(err)?.values())
}

/// `g²(τ)` for delays in ps.
#[pyfunction]
fn g2_tau(params: &PySystemParams, detuning: f64, tau_ps: Vec<f64>) -> PyResult<Vec<f64>> {
    let p = &params.inner;
    let taus: Vec<f64> = tau_ps.iter().map(|t| t * PICOSECOND).collect();
    Ok(g2_tau_cw(p, detuning * detuning_unit(p), &taus).map_err(err)?.values())
}

/// Single-pulse statistics for a Gaussian pulse whose peak amplitude is the
/// drive in `params`.
#[pyfunction]
#[pyo3(signature = (params, detuning, fwhm_ps=40.0))]
fn pulsed<'py>(py: Python<'py>, params: &PySystemParams, detuning: f64, fwhm_ps: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = &params.inner;
    let pulse = PulseShape::new(fwhm_ps * PICOSECOND, 0.0, p.drive_amp).map_err(err)?;
    let s = pulsed_statistics(p, &pulse, detuning * detuning_unit(p)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mean_photons", s.mean_photons)?;
    d.set_item("pair_counts", s.pair_counts)?;
    d.set_item("g2_bar", s.g2_bar)?;
    d.set_item("g2_equal_time", s.g2_equal_time)?;
    Ok(d)
}

/// Blinking and background settings of a pulsed measurement.
#[pyclass(name = "Measurement", module = "blockade", from_py_object)]
#[derive(Clone, Copy)]
struct PyMeasurement {
    #[pyo3(get, set)]
    fwhm_ps: f64,
    #[pyo3(get, set)]
    period_ns: f64,
    #[pyo3(get, set)]
    bright_fraction: f64,
    #[pyo3(get, set)]
    switch_time_ns: f64,
    #[pyo3(get, set)]
    signal_to_noise: f64,
    #[pyo3(get, set)]
    efficiency: f64,
    #[pyo3(get, set)]
    jitter_ps: f64,
}

#[pymethods]
impl PyMeasurement {
    #[new]
    #[pyo3(signature = (fwhm_ps=40.0, period_ns=12.5, bright_fraction=0.8, switch_time_ns=200.0, signal_to_noise=6.0, efficiency=0.05, jitter_ps=300.0))]
    fn new(
        fwhm_ps: f64,
        period_ns: f64,
        bright_fraction: f64,
        switch_time_ns: f64,
        signal_to_noise: f64,
        efficiency: f64,
        jitter_ps: f64,
    ) -> Self {
        Self { fwhm_ps, period_ns, bright_fraction, switch_time_ns, signal_to_noise, efficiency, jitter_ps }
    }
}

impl PyMeasurement {
    fn parts(&self, p: &blockade_core::hilbert::SystemParams) -> PyResult<(PulseShape, TelegraphParams, f64)> {
        let pulse = PulseShape::new(self.fwhm_ps * PICOSECOND, 0.0, p.drive_amp).map_err(err)?;
        let tp = TelegraphParams::new(self.switch_time_ns * NANOSECOND, self.bright_fraction).map_err(err)?;
        let bg = BackgroundModel::new(self.signal_to_noise).map_err(err)?;
        let photons = calibrated_background(p, &pulse, &tp, &bg, detuning_unit(p)).map_err(err)?;
        Ok((pulse, tp, photons))
    }
}

/// Analytic `(g2_bar0, g2_bar)`: zero-delay peak over the side-peak envelope
/// and over the long-delay plateau.
#[pyfunction]
fn model_g2(params: &PySystemParams, measurement: &PyMeasurement, detuning: f64) -> PyResult<(f64, f64)> {
    let p = &params.inner;
    let (pulse, tp, bg) = measurement.parts(p)?;
    let m = PeakModel::from_pulsed(p, &pulse, detuning * detuning_unit(p), tp, bg).map_err(err)?;
    Ok((m.g2_nearest().map_err(err)?, m.g2_plateau().map_err(err)?))
}

/// Synthesized click stream as `(channel, time_ps)` tuples.
#[pyfunction]
#[pyo3(signature = (params, measurement, detuning, pulses, seed=1, library_size=20000))]
fn synthesize(
    py: Python<'_>,
    params: &PySystemParams,
    measurement: &PyMeasurement,
    detuning: f64,
    pulses: u64,
    seed: u64,
    library_size: usize,
) -> PyResult<Vec<(u8, u64)>> {
    let p = params.inner;
    let (pulse, tp, bg) = measurement.parts(&p)?;
    let cfg = SynthesisConfig {
        params: p,
        pulse,
        detuning: detuning * detuning_unit(&p),
        telegraph: tp,
        background: bg,
        period: measurement.period_ns * NANOSECOND,
        efficiency: measurement.efficiency,
        jitter_fwhm: measurement.jitter_ps * PICOSECOND,
        library_size,
        n_pulses: pulses,
        seed,
    };
    let s = py.detach(|| synthesize_click_stream(&cfg)).map_err(err)?;
    Ok(s.clicks.iter().map(|c| (c.channel, c.time_ps)).collect())
}

/// Histogram, envelope fit and both normalizations of a click stream.
#[pyfunction]
#[pyo3(signature = (clicks, period_ns=12.5, bin_ps=100.0, m_max=40))]
fn analyse<'py>(
    py: Python<'py>,
    clicks: Vec<(u8, u64)>,
    period_ns: f64,
    bin_ps: f64,
    m_max: i64,
) -> PyResult<Bound<'py, PyDict>> {
    let stream =
        ClickStream::new(clicks.into_iter().map(|(channel, time_ps)| Click { channel, time_ps }).collect()).map_err(err)?;
    let period = period_ns * NANOSECOND;
    let (fit, plateau, nearest, areas) = py
        .detach(|| -> blockade_core::Result<_> {
            let h = build_histogram(&stream, bin_ps * PICOSECOND, (m_max as f64 + 0.5) * period, period)?;
            let fit = fit_envelope(&h, (1, m_max))?;
            let plateau = normalize_g2(&h, &fit, Normalization::Plateau)?;
            let nearest = normalize_g2(&h, &fit, Normalization::NearestNeighbor)?;
            let areas: Vec<(i64, f64)> = h.peak_areas.iter().map(|p| (p.m, p.area)).collect();
            Ok((fit, plateau, nearest, areas))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("g2_bar", (plateau.value, plateau.error))?;
    d.set_item("g2_bar0", (nearest.value, nearest.error))?;
    d.set_item("G0", (fit.g0, fit.g0_err))?;
    d.set_item("Ginf", (fit.ginf, fit.ginf_err))?;
    d.set_item("T_ns", (fit.t / NANOSECOND, fit.t_err / NANOSECOND))?;
    d.set_item("peaks", areas)?;
    Ok(d)
}

#[pymodule]
fn blockade(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyMeasurement>()?;
    m.add_function(wrap_pyfunction!(cw, m)?)?;
    m.add_function(wrap_pyfunction!(g2_zero, m)?)?;
    m.add_function(wrap_pyfunction!(g2_tau, m)?)?;
    m.add_function(wrap_pyfunction!(pulsed, m)?)?;
    m.add_function(wrap_pyfunction!(model_g2, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(analyse, m)?)?;
    Ok(())
}
