//! The subcommands. Each computes everything first and then writes its files
//! through an [`OutputSet`], so a numerical failure leaves nothing behind.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use blockade_core::blinking::{
    calibrated_background, synthesize_click_stream, ClickStream, Component, PeakModel, SynthesisConfig,
    TelegraphParams,
};
use blockade_core::correlations::{
    g2_spectrum, g2_tau_cw, pulsed_statistics, transmission_spectrum, CorrelationCurve, PulsedStatistics,
};
use blockade_core::dynamics::PulseShape;
use blockade_core::hbt::{build_histogram, fit_envelope, normalize_g2, Normalization};
use blockade_core::hilbert::SystemParams;
use blockade_core::units::{rad_to_ghz, PICOSECOND};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{col, Cell, OutputSet};
use crate::plot::{line_plot, Series};
use crate::UsageError;

/// Header lines describing the physical parameters of a run.
fn system_notes(cfg: &RunConfig, p: &SystemParams) -> Vec<String> {
    let s = &cfg.system;
    let mut notes = vec![
        format!(
            "g/2pi = {} GHz; kappa/2pi = {} GHz; gamma/2pi = {} GHz; n_max = {}",
            s.g_ghz, s.kappa_ghz, s.gamma_ghz, s.n_max
        ),
        format!(
            "drive E/2pi = {:.6e} GHz, calibrated to <n> = {} at detuning {} (units of g)",
            rad_to_ghz(p.drive_amp),
            s.target_photons,
            s.calibration_detuning
        ),
    ];
    if p.g == 0.0 {
        notes.push("g = 0: detunings are in units of kappa".into());
    }
    notes
}

fn curve_points(c: &CorrelationCurve, x_scale: f64) -> Vec<(f64, f64)> {
    c.samples.iter().map(|s| (s.x * x_scale, s.value)).collect()
}

pub fn spectrum(cfg: &RunConfig, out: &mut OutputSet, plot: bool) -> Result<Vec<String>> {
    let p = cfg.driven_params()?;
    let grid = cfg.detuning_grid();
    let photons = transmission_spectrum(&p, &grid).context("intensity spectrum")?;
    let g2 = g2_spectrum(&p, &grid).context("g2 spectrum")?;
    let rows: Vec<Vec<Cell>> = grid
        .iter()
        .zip(photons.values())
        .zip(g2.values())
        .map(|((&d, n), g)| vec![Cell::F(d), Cell::F(n), Cell::F(g)])
        .collect();
    out.write_csv(
        "spectrum.csv",
        "steady-state output intensity and g2(0) versus probe detuning",
        &system_notes(cfg, &p),
        &[
            col("detuning_over_g", "probe detuning (w_p - w_0)/g, dimensionless"),
            col("photons", "intracavity <a^dag a>, output rate is 2 kappa times this"),
            col("g2_zero", "g2(0), dimensionless"),
        ],
        &rows,
    )?;
    if plot {
        let x = "(w_p - w_0) / g";
        line_plot(
            &out.claim("spectrum_g2.svg"),
            "g2(0)",
            x,
            "g2(0)",
            &[Series { label: "g2(0)", points: curve_points(&g2, 1.0) }],
        )?;
        line_plot(
            &out.claim("spectrum_photons.svg"),
            "output intensity",
            x,
            "<a^dag a>",
            &[Series { label: "<n>", points: curve_points(&photons, 1.0) }],
        )?;
    }
    let mut summary = vec![format!("{} detunings", grid.len())];
    if let Some(m) = g2.argmin_in(1.0, 2.0) {
        summary.push(format!("g2(0) minimum on [g, 2g]: {:.4} at {:.3} g", m.value, m.x));
    }
    Ok(summary)
}

pub fn g2tau(cfg: &RunConfig, out: &mut OutputSet, plot: bool) -> Result<Vec<String>> {
    let p = cfg.driven_params()?;
    let d = cfg.sweep.detuning;
    let curve = g2_tau_cw(&p, d * cfg.unit(), &cfg.tau_grid()).context("g2(tau)")?;
    let rows: Vec<Vec<Cell>> =
        curve.samples.iter().map(|s| vec![Cell::F(s.x / PICOSECOND), Cell::F(s.value)]).collect();
    let mut notes = system_notes(cfg, &p);
    notes.push(format!("probe detuning {d} (units of g)"));
    out.write_csv(
        "g2tau.csv",
        "steady-state g2(tau) of the cavity output",
        &notes,
        &[col("tau_ps", "delay, ps"), col("g2", "g2(tau), dimensionless")],
        &rows,
    )?;
    if plot {
        line_plot(
            &out.claim("g2tau.svg"),
            &format!("g2(tau) at detuning {d} g"),
            "tau (ps)",
            "g2(tau)",
            &[Series { label: "g2", points: curve_points(&curve, 1.0 / PICOSECOND) }],
        )?;
    }
    Ok(vec![format!("g2(0) = {:.6} at detuning {d} g", curve.samples[0].value)])
}

/// Background photons per pulse fixed by the configured SNR.
fn background_photons(cfg: &RunConfig, p: &SystemParams, pulse: &PulseShape, tp: &TelegraphParams) -> Result<f64> {
    match cfg.background_model()? {
        Some(bg) => Ok(calibrated_background(p, pulse, tp, &bg, cfg.background.calibration_detuning * cfg.unit())
            .context("background calibration")?),
        None => Ok(0.0),
    }
}

/// Analytic peak model at one detuning (rad/s) together with the bright-state
/// single-pulse statistics it was built from.
pub fn pulsed_model(
    p: &SystemParams,
    pulse: &PulseShape,
    detuning: f64,
    tp: TelegraphParams,
    background: f64,
) -> Result<(PeakModel, PulsedStatistics)> {
    let bright = pulsed_statistics(p, pulse, detuning)?;
    let dark = pulsed_statistics(&p.with_coupling(0.0), pulse, detuning)?;
    let c = |s: &PulsedStatistics| Component::new(s.mean_photons, s.pair_counts.max(0.0));
    let model = PeakModel::new(c(&bright)?, c(&dark)?, background, tp)?;
    Ok((model, bright))
}

fn read_stream(path: &Path) -> Result<ClickStream> {
    let f = File::open(path).map_err(|e| UsageError(format!("cannot open {}: {e}", path.display())))?;
    let s = if path.extension().is_some_and(|e| e == "csv") {
        ClickStream::read_csv(BufReader::new(f))
    } else {
        ClickStream::read_binary(BufReader::new(f))
    };
    s.with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HbtOptions<'a> {
    /// Analyse this click stream instead of synthesizing one.
    pub input: Option<&'a Path>,
    /// Also write the synthesized stream to `clicks.bin`.
    pub write_stream: bool,
}

pub fn hbt(cfg: &RunConfig, out: &mut OutputSet, plot: bool, opts: HbtOptions) -> Result<Vec<String>> {
    let start = Instant::now();
    let p = cfg.driven_params()?;
    let pulse = cfg.pulse(&p)?;
    let tp = cfg.telegraph()?;
    let period = cfg.period();
    let d = cfg.sweep.detuning;
    let bg = background_photons(cfg, &p, &pulse, &tp)?;
    let (model, _) = pulsed_model(&p, &pulse, d * cfg.unit(), tp, bg).context("peak model")?;

    let det = &cfg.detection;
    let stream = match opts.input {
        Some(path) => read_stream(path)?,
        None => synthesize_click_stream(&SynthesisConfig {
            params: p,
            pulse,
            detuning: d * cfg.unit(),
            telegraph: tp,
            background: bg,
            period,
            efficiency: det.efficiency,
            jitter_fwhm: det.jitter_ps * PICOSECOND,
            library_size: det.library_size,
            n_pulses: det.pulses,
            seed: cfg.seed,
        })
        .context("click synthesis")?,
    };
    let max_lag = (det.m_max as f64 + 0.5) * period;
    let hist = build_histogram(&stream, det.bin_ps * PICOSECOND, max_lag, period).context("histogram")?;
    let fit = fit_envelope(&hist, (1, det.m_max)).context("envelope fit")?;
    let plateau = normalize_g2(&hist, &fit, Normalization::Plateau)?;
    let nearest = normalize_g2(&hist, &fit, Normalization::NearestNeighbor)?;

    let mut notes = system_notes(cfg, &p);
    notes.push(format!(
        "probe detuning {d} (units of g); pulse FWHM {} ps; period {} ns; {} pulses; {} clicks",
        cfg.pulse.fwhm_ps,
        cfg.pulse.period_ns,
        det.pulses,
        stream.len()
    ));
    let hist_rows: Vec<Vec<Cell>> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| vec![Cell::F(hist.bin_start(i) * 1e9), Cell::I(c as i64)])
        .collect();
    let peak_rows: Vec<Vec<Cell>> = hist
        .peak_areas
        .iter()
        .map(|pk| {
            let n_pulses = if opts.input.is_some() { None } else { Some(det.pulses) };
            vec![
                Cell::I(pk.m),
                Cell::F(pk.m as f64 * period * 1e9),
                Cell::F(pk.area),
                Cell::F(if pk.m == 0 { f64::NAN } else { fit.at(pk.m.unsigned_abs() as f64) }),
                Cell::F(n_pulses.map_or(f64::NAN, |n| model.expected_counts(pk.m, period, n, det.efficiency))),
            ]
        })
        .collect();

    out.write_csv(
        "hbt_histogram.csv",
        "coincidence histogram, delay t1 - t0 between detector 1 and detector 0",
        &notes,
        &[col("lag_start_ns", "lower bin edge, ns"), col("counts", "coincidences per bin")],
        &hist_rows,
    )?;
    out.write_csv(
        "hbt_peaks.csv",
        "integrated coincidence peaks",
        &notes,
        &[
            col("m", "peak index, delay m * period"),
            col("lag_ns", "peak centre, ns"),
            col("area", "coincidences within a quarter period of the centre"),
            col("envelope", "fitted envelope G(|m|), coincidences"),
            col("model", "analytic expectation, coincidences"),
        ],
        &peak_rows,
    )?;

    let mut report = Vec::new();
    report.extend_from_slice(format!("# config_sha256: {}\n", cfg.hash()).as_bytes());
    report.extend_from_slice(b"# times in seconds, detuning in units of g, g2 values dimensionless\n");
    report.extend_from_slice(format!("detuning_over_g={d}\n").as_bytes());
    report.extend_from_slice(format!("pulses={}\nclicks={}\n", det.pulses, stream.len()).as_bytes());
    report.extend_from_slice(format!("background_photons_per_pulse={bg:.10e}\n").as_bytes());
    fit.write_report(&mut report)?;
    for (k, v) in [
        ("g2_bar", plateau.value),
        ("g2_bar_err", plateau.error),
        ("g2_bar0", nearest.value),
        ("g2_bar0_err", nearest.error),
        ("model_g2_bar", model.g2_plateau()?),
        ("model_g2_bar0", model.g2_nearest()?),
    ] {
        report.extend_from_slice(format!("{k}={v:.10e}\n").as_bytes());
    }
    out.write_bytes("hbt_fit.txt", &report)?;

    if opts.write_stream && opts.input.is_none() {
        let path = out.claim("clicks.bin");
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        stream.write_binary(BufWriter::new(f))?;
    }
    if plot {
        let pts: Vec<(f64, f64)> = hist.peak_areas.iter().map(|pk| (pk.m as f64, pk.area)).collect();
        let env: Vec<(f64, f64)> =
            hist.peak_areas.iter().filter(|pk| pk.m != 0).map(|pk| (pk.m as f64, fit.at(pk.m.abs() as f64))).collect();
        line_plot(
            &out.claim("hbt_peaks.svg"),
            &format!("coincidence peaks at detuning {d} g"),
            "peak index m",
            "coincidences",
            &[Series { label: "peak area", points: pts }, Series { label: "envelope fit", points: env }],
        )?;
    }

    Ok(vec![
        format!("g2_bar  = {:.4} ± {:.4} (model {:.4})", plateau.value, plateau.error, model.g2_plateau()?),
        format!("g2_bar0 = {:.4} ± {:.4} (model {:.4})", nearest.value, nearest.error, model.g2_nearest()?),
        format!("{} clicks, {:.1} s", stream.len(), start.elapsed().as_secs_f64()),
    ])
}

pub fn g2map(cfg: &RunConfig, out: &mut OutputSet, plot: bool) -> Result<Vec<String>> {
    g2map_named(cfg, out, plot, "g2map")
}

fn g2map_named(cfg: &RunConfig, out: &mut OutputSet, plot: bool, stem: &str) -> Result<Vec<String>> {
    let p = cfg.driven_params()?;
    let pulse = cfg.pulse(&p)?;
    let tp = cfg.telegraph()?;
    let bg = background_photons(cfg, &p, &pulse, &tp)?;
    let grid = cfg.detuning_grid();
    let unit = cfg.unit();
    let results: Vec<_> = grid
        .par_iter()
        .map(|&d| -> Result<[f64; 5]> {
            let (model, bright) = pulsed_model(&p, &pulse, d * unit, tp, bg)?;
            Ok([model.g2_nearest()?, model.g2_plateau()?, bright.g2_bar, bright.g2_equal_time, bright.mean_photons])
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures == grid.len() {
        let first = results.into_iter().find_map(Result::err).expect("at least one point");
        return Err(first.context("every sweep point failed"));
    }

    let rows: Vec<Vec<Cell>> = grid
        .iter()
        .zip(&results)
        .map(|(&d, r)| {
            let mut row = vec![Cell::F(d)];
            match r {
                Ok(v) => {
                    row.extend(v.iter().map(|&x| Cell::F(x)));
                    row.push(Cell::S("ok".into()));
                }
                Err(e) => {
                    row.extend((0..5).map(|_| Cell::F(f64::NAN)));
                    row.push(Cell::S(format!("error: {e:#}")));
                }
            }
            row
        })
        .collect();
    let mut notes = system_notes(cfg, &p);
    notes.push(format!(
        "pulse FWHM {} ps; period {} ns; blinking {}; background {:.6e} photons per pulse",
        cfg.pulse.fwhm_ps,
        cfg.pulse.period_ns,
        if cfg.blinking.enabled {
            format!("bright fraction {} switch time {} ns", cfg.blinking.bright_fraction, cfg.blinking.switch_time_ns)
        } else {
            "off".into()
        },
        bg
    ));
    out.write_csv(
        &format!("{stem}.csv"),
        "full-model pulsed zero-delay correlation versus probe detuning",
        &notes,
        &[
            col("detuning_over_g", "probe detuning (w_p - w_0)/g, dimensionless"),
            col("g2_bar0", "zero-delay peak over the side-peak envelope at m -> 0, dimensionless"),
            col("g2_bar", "zero-delay peak over the long-delay plateau, dimensionless"),
            col("g2_pulse", "bright-state pulse-integrated g2, dimensionless"),
            col("g2_equal_time", "bright-state pulse-averaged equal-time g2, dimensionless"),
            col("photons_per_pulse", "bright-state output photons per pulse"),
            col("status", "ok or the failure diagnostic"),
        ],
        &rows,
    )?;
    if plot {
        let pts = |k: usize| -> Vec<(f64, f64)> {
            grid.iter().zip(&results).filter_map(|(&d, r)| r.as_ref().ok().map(|v| (d, v[k]))).collect()
        };
        line_plot(
            &out.claim(&format!("{stem}.svg")),
            "pulsed g2 versus detuning",
            "(w_p - w_0) / g",
            "g2",
            &[Series { label: "g2_bar0", points: pts(0) }, Series { label: "g2_bar", points: pts(1) }],
        )?;
    }
    Ok(vec![format!("{} detunings, {failures} failed", grid.len())])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Fig2b,
    Fig2c,
    Fig2d,
    Fig4,
    TransistorSweep,
}

pub fn reproduce(cfg: &RunConfig, out: &mut OutputSet, plot: bool, preset: Preset) -> Result<Vec<String>> {
    match preset {
        Preset::Fig2b => fig2b(cfg, out, plot),
        Preset::Fig2c => {
            let mut summary = spectrum(cfg, out, plot)?;
            rename(out, "spectrum.csv", "fig2c.csv")?;
            summary.push("wrote fig2c.csv".into());
            Ok(summary)
        }
        Preset::Fig2d => fig2d(cfg, out, plot),
        Preset::Fig4 => {
            let mut c = cfg.clone();
            c.sweep.points = 61;
            g2map_named(&c, out, plot, "fig4")
        }
        Preset::TransistorSweep => crate::transistor::sweep(cfg, out, plot),
    }
}

fn rename(out: &mut OutputSet, from: &str, to: &str) -> Result<()> {
    let target = out.claim(to);
    std::fs::rename(out.path(from), &target).with_context(|| format!("renaming {from}"))?;
    Ok(())
}

/// Output intensity of the coupled system next to the empty cavity at the
/// same drive.
fn fig2b(cfg: &RunConfig, out: &mut OutputSet, plot: bool) -> Result<Vec<String>> {
    let p = cfg.driven_params()?;
    let grid = cfg.detuning_grid();
    let coupled = transmission_spectrum(&p, &grid).context("coupled spectrum")?;
    // Same detuning axis for both curves.
    let empty_grid: Vec<f64> = grid.iter().map(|d| d * cfg.unit() / p.kappa).collect();
    let empty = transmission_spectrum(&p.with_coupling(0.0), &empty_grid).context("empty-cavity spectrum")?;
    let rows: Vec<Vec<Cell>> = grid
        .iter()
        .zip(coupled.values())
        .zip(empty.values())
        .map(|((&d, a), b)| vec![Cell::F(d), Cell::F(a), Cell::F(b)])
        .collect();
    out.write_csv(
        "fig2b.csv",
        "steady-state output intensity versus probe detuning",
        &system_notes(cfg, &p),
        &[
            col("detuning_over_g", "probe detuning (w_p - w_0)/g, dimensionless"),
            col("photons", "intracavity <a^dag a> with the emitter"),
            col("photons_empty", "intracavity <a^dag a> of the empty cavity"),
        ],
        &rows,
    )?;
    if plot {
        line_plot(
            &out.claim("fig2b.svg"),
            "output intensity",
            "(w_p - w_0) / g",
            "<a^dag a>",
            &[
                Series { label: "coupled", points: grid.iter().copied().zip(coupled.values()).collect() },
                Series { label: "empty cavity", points: grid.iter().copied().zip(empty.values()).collect() },
            ],
        )?;
    }
    Ok(vec!["wrote fig2b.csv".into()])
}

/// g2(τ) on resonance and at the blockade detuning.
fn fig2d(cfg: &RunConfig, out: &mut OutputSet, plot: bool) -> Result<Vec<String>> {
    let p = cfg.driven_params()?;
    let taus = cfg.tau_grid();
    let unit = cfg.unit();
    let detunings = [0.0, 1.5];
    let curves: Vec<CorrelationCurve> = detunings
        .par_iter()
        .map(|&d| g2_tau_cw(&p, d * unit, &taus))
        .collect::<blockade_core::Result<_>>()
        .context("g2(tau)")?;
    let rows: Vec<Vec<Cell>> = (0..taus.len())
        .map(|i| vec![Cell::F(taus[i] / PICOSECOND), Cell::F(curves[0].samples[i].value), Cell::F(curves[1].samples[i].value)])
        .collect();
    out.write_csv(
        "fig2d.csv",
        "steady-state g2(tau) on resonance and at 1.5 g",
        &system_notes(cfg, &p),
        &[
            col("tau_ps", "delay, ps"),
            col("g2_detuning_0", "g2(tau) at (w_p - w_0)/g = 0"),
            col("g2_detuning_1.5", "g2(tau) at (w_p - w_0)/g = 1.5"),
        ],
        &rows,
    )?;
    if plot {
        line_plot(
            &out.claim("fig2d.svg"),
            "g2(tau)",
            "tau (ps)",
            "g2(tau)",
            &[
                Series { label: "detuning 0", points: curve_points(&curves[0], 1.0 / PICOSECOND) },
                Series { label: "detuning 1.5 g", points: curve_points(&curves[1], 1.0 / PICOSECOND) },
            ],
        )?;
    }
    Ok(vec![format!("g2(0) = {:.4} (0), {:.4} (1.5 g)", curves[0].samples[0].value, curves[1].samples[0].value)])
}

/// Rejects configurations that cannot run a preset.
pub fn require_coupling(cfg: &RunConfig) -> Result<()> {
    if cfg.system.g_ghz <= 0.0 {
        bail!(UsageError("this preset needs g > 0".into()));
    }
    Ok(())
}
