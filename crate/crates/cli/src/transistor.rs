//! Exploratory two-tone preset: a gate laser on the upper first-manifold
//! polariton (ω₀ + g) and a weak signal laser at ω₀ + g(√2 − 1), where two
//! gate-assisted signal photons would reach the second manifold. Reports the
//! coherent signal transmission with the gate on relative to gate off.

use std::f64::consts::{PI, SQRT_2};

use anyhow::{Context, Result};
use blockade_core::dynamics::ode::{integrate, OdeOptions};
use blockade_core::dynamics::{calibrate_drive, steady_state, CollapseSet, DrivenHamiltonian, MasterEquation};
use blockade_core::hilbert::{jc_hamiltonian, SystemParams};
use blockade_core::units::rad_to_ghz;
use blockade_core::C64;
use nalgebra::{DMatrix, DMatrixView};
use rayon::prelude::*;

use crate::commands::require_coupling;
use crate::config::RunConfig;
use crate::output::{col, Cell, OutputSet};
use crate::plot::{line_plot, Series};

const SIGNAL_PHOTONS: f64 = 0.01;
const GATE_STEPS: usize = 11;
const SETTLE_BEATS: usize = 30;
const SAMPLES: usize = 64;

struct TwoTone {
    /// |⟨a⟩|² of the component oscillating at the signal frequency.
    signal: f64,
    /// Time-averaged ⟨a†a⟩.
    photons: f64,
}

/// Periodic steady state in the signal frame, averaged over one beat period.
fn two_tone(p: &SystemParams, e_sig: f64, d_sig: f64, e_gate: f64, d_gate: f64) -> Result<TwoTone> {
    let q = p.with_probe_detuning(d_sig).with_drive(e_sig);
    let h = jc_hamiltonian(&q)?;
    let c = CollapseSet::cavity_and_emitter(&q)?;
    let s = q.space()?;
    let a = s.destroy().0;
    let n = s.number().0;
    let rho0 = steady_state(&h, &c)?.to_density();
    let moments = |rho: &DMatrix<C64>| ((&a * rho).trace(), (&n * rho).trace().re);
    if e_gate == 0.0 {
        let (alpha, photons) = moments(&rho0);
        return Ok(TwoTone { signal: alpha.norm_sqr(), photons });
    }

    let mut me = MasterEquation::new(&DrivenHamiltonian::from(h), &c)?;
    let d = s.dim();
    // gate term E (a e^{iδt} + a† e^{−iδt}) with δ = ω_gate − ω_signal
    let delta = d_gate - d_sig;
    let beat = 2.0 * PI / delta.abs();
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        me.apply(t, y, dy);
        let rho = DMatrixView::from_slice(y, d, d);
        let x = &a * C64::from_polar(e_gate, delta * t);
        let hg = &x + x.adjoint();
        let comm = &hg * rho - rho * &hg;
        for (o, v) in dy.iter_mut().zip(comm.iter()) {
            *o += C64::new(0.0, -1.0) * v;
        }
    };
    let t_out: Vec<f64> = (0..SAMPLES).map(|k| (SETTLE_BEATS as f64 + k as f64 / SAMPLES as f64) * beat).collect();
    let states = integrate(rhs, 0.0, rho0.as_slice(), &t_out, OdeOptions::default())?;
    let (mut alpha, mut photons) = (C64::new(0.0, 0.0), 0.0);
    for y in &states {
        let (al, ph) = moments(&DMatrix::from_column_slice(d, d, y));
        alpha += al / SAMPLES as f64;
        photons += ph / SAMPLES as f64;
    }
    Ok(TwoTone { signal: alpha.norm_sqr(), photons })
}

pub fn sweep(cfg: &RunConfig, out: &mut OutputSet, plot: bool) -> Result<Vec<String>> {
    require_coupling(cfg)?;
    let p = cfg.system_params();
    let (d_gate, d_sig) = (p.g, p.g * (SQRT_2 - 1.0));
    let e_sig = calibrate_drive(&p, SIGNAL_PHOTONS, d_sig).context("signal calibration")?;
    let targets: Vec<f64> =
        (0..GATE_STEPS).map(|i| cfg.system.target_photons * i as f64 / (GATE_STEPS - 1) as f64).collect();
    let results: Vec<(f64, TwoTone)> = targets
        .par_iter()
        .map(|&n| -> Result<(f64, TwoTone)> {
            let e_gate = if n == 0.0 { 0.0 } else { calibrate_drive(&p, n, d_gate).context("gate calibration")? };
            Ok((e_gate, two_tone(&p, e_sig, d_sig, e_gate, d_gate)?))
        })
        .collect::<Result<_>>()?;
    let off = results[0].1.signal;
    let rows: Vec<Vec<Cell>> = targets
        .iter()
        .zip(&results)
        .map(|(&n, (e, r))| {
            vec![Cell::F(n), Cell::F(rad_to_ghz(*e)), Cell::F(r.signal), Cell::F(r.signal / off), Cell::F(r.photons)]
        })
        .collect();
    let notes = vec![
        "EXPLORATORY: single-photon transistor sweep, not a validated observable".to_string(),
        format!(
            "g/2pi = {} GHz; kappa/2pi = {} GHz; gamma/2pi = {} GHz; n_max = {}",
            cfg.system.g_ghz, cfg.system.kappa_ghz, cfg.system.gamma_ghz, cfg.system.n_max
        ),
        format!(
            "gate at (w - w_0)/g = 1; signal at (w - w_0)/g = {:.6}, E_signal/2pi = {:.6e} GHz (<n> = {SIGNAL_PHOTONS} alone)",
            SQRT_2 - 1.0,
            rad_to_ghz(e_sig)
        ),
        format!("averaged over one beat period after {SETTLE_BEATS} beat periods"),
    ];
    out.write_csv(
        "transistor_sweep.csv",
        "signal transmission with and without the gate laser",
        &notes,
        &[
            col("gate_photons", "gate-only steady-state <a^dag a> used to set the gate amplitude"),
            col("gate_amp_ghz", "gate amplitude E/2pi, GHz"),
            col("signal_coherent", "|<a>|^2 at the signal frequency, intracavity photons"),
            col("signal_ratio", "signal_coherent relative to gate off, dimensionless"),
            col("photons", "time-averaged intracavity <a^dag a>"),
        ],
        &rows,
    )?;
    if plot {
        line_plot(
            &out.claim("transistor_sweep.svg"),
            "signal transmission versus gate strength (exploratory)",
            "gate <n>",
            "signal on / off",
            &[Series { label: "ratio", points: targets.iter().zip(&results).map(|(&n, r)| (n, r.1.signal / off)).collect() }],
        )?;
    }
    let last = &results[GATE_STEPS - 1].1;
    Ok(vec![format!("signal on/off at gate <n> = {}: {:.4}", targets[GATE_STEPS - 1], last.signal / off)])
}
