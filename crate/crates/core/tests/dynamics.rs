use blockade_core::correlations::{cw_statistics, g2_tau_cw, pulse_grid, pulsed_statistics};
use blockade_core::dynamics::{
    calibrate_drive, evolve_master, steady_state, steady_state_residual, CollapseSet, DrivenHamiltonian, PulseShape,
    QuantumState,
};
use blockade_core::hilbert::{jc_hamiltonian, SystemParams};
use blockade_core::units::{ghz_to_rad, PICOSECOND};
use blockade_core::C64;

fn paper() -> SystemParams {
    let p = SystemParams::default();
    p.with_drive(calibrate_drive(&p, 0.4, p.g).unwrap())
}

#[test]
fn vacuum_rabi_oscillation() {
    let p = SystemParams { kappa: 1e-300, gamma: 0.0, ..Default::default() };
    let s = p.space().unwrap();
    let h: DrivenHamiltonian = jc_hamiltonian(&p).unwrap().into();
    let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.5 * PICOSECOND).collect();
    let states = evolve_master(&QuantumState::basis(&s, true, 0), &h, &CollapseSet::empty(), &grid).unwrap();
    for (t, rho) in grid.iter().zip(&states) {
        let n = rho.expect(&s.number());
        assert!((n - (p.g * t).sin().powi(2)).abs() < 1e-6, "t = {t}: {n}");
        assert!((rho.purity() - 1.0).abs() < 1e-7, "purity {}", rho.purity());
    }
}

#[test]
fn pulsed_evolution_keeps_a_physical_state() {
    let p = paper();
    let pulse = PulseShape::new(40.0 * PICOSECOND, 0.0, p.drive_amp).unwrap();
    for d in [0.0, 1.5] {
        let q = p.with_probe_detuning(d * p.g);
        let s = q.space().unwrap();
        let grid = pulse_grid(&q, &pulse);
        let h = DrivenHamiltonian::pulsed(&q, pulse).unwrap();
        let c = CollapseSet::cavity_and_emitter(&q).unwrap();
        let states = evolve_master(&QuantumState::vacuum(&s), &h, &c, &grid).unwrap();
        for rho in &states {
            assert!((rho.trace() - 1.0).abs() < 1e-7);
            assert!(rho.min_eigenvalue() > -1e-7);
        }
    }
}

#[test]
fn steady_state_is_the_long_time_limit() {
    let p = paper();
    for d in [0.0, 1.5] {
        let q = p.with_probe_detuning(d * p.g);
        let h = jc_hamiltonian(&q).unwrap();
        let c = CollapseSet::cavity_and_emitter(&q).unwrap();
        let ss = steady_state(&h, &c).unwrap();
        assert!(steady_state_residual(&h, &c, &ss).unwrap() < 1e-10);
        ss.validate(1e-9).unwrap();
        // Half-light half-matter polaritons relax at about κ, half the photon
        // rate 2κ, and the driven system slower still; 1e-6 needs ~60 photon
        // lifetimes.
        let lifetime = 1.0 / (2.0 * q.kappa);
        let grid = [0.0, 20.0 * lifetime, 60.0 * lifetime];
        let states = evolve_master(&QuantumState::vacuum(&q.space().unwrap()), &h.into(), &c, &grid).unwrap();
        let dist = |k: usize| (states[k].to_density() - ss.to_density()).iter().fold(0.0f64, |a, x| a.max(x.norm()));
        assert!(dist(1) < 1e-2);
        assert!(dist(2) < 1e-6, "distance {:e} at detuning {d}g", dist(2));
    }
}

#[test]
fn truncation_is_converged() {
    let p = paper();
    for d in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let lo = cw_statistics(&p, d * p.g).unwrap();
        let hi = cw_statistics(&p.with_n_max(2 * p.n_max), d * p.g).unwrap();
        assert!((lo.photons / hi.photons - 1.0).abs() < 5e-3);
        assert!((lo.g2 / hi.g2 - 1.0).abs() < 5e-3, "{d}: {} vs {}", lo.g2, hi.g2);
    }
}

#[test]
fn empty_cavity_steady_state_is_analytic() {
    let base = SystemParams { g: 0.0, gamma: 0.0, n_max: 14, ..Default::default() };
    for (e_ghz, d) in [(4.0, 0.0), (8.0, 0.7), (2.0, -2.0)] {
        let e = ghz_to_rad(e_ghz);
        let p = base.with_drive(e).with_probe_detuning(d * base.kappa);
        let ss = steady_state(&jc_hamiltonian(&p).unwrap(), &CollapseSet::cavity_and_emitter(&p).unwrap()).unwrap();
        let n = ss.expect(&p.space().unwrap().number());
        let exact = e * e / ((d * base.kappa).powi(2) + base.kappa.powi(2));
        assert!((n / exact - 1.0).abs() < 1e-8);
    }
}

/// Linear cavity response `α(t) = −i ∫ E(s) e^{−(iδ+κ)(t−s)} ds` by direct
/// quadrature.
fn coherent_amplitude(pulse: &PulseShape, delta: f64, kappa: f64, t: f64, t0: f64) -> C64 {
    let n = 20_000;
    let h = (t - t0) / n as f64;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..=n {
        let s = t0 + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += C64::new(-kappa * (t - s), -delta * (t - s)).exp() * (pulse.amplitude(s) * w * h);
    }
    -C64::i() * acc
}

#[test]
fn pulse_on_empty_cavity_matches_convolution() {
    let p = SystemParams { g: 0.0, gamma: 0.0, n_max: 10, ..Default::default() };
    let pulse = PulseShape::new(40.0 * PICOSECOND, 0.0, ghz_to_rad(6.0)).unwrap();
    for d in [0.0, 1.0] {
        let q = p.with_probe_detuning(d * p.kappa);
        let stats = pulsed_statistics(&p, &pulse, d * p.kappa).unwrap();
        let t0 = stats.times[0];
        for (k, (&t, &n)) in stats.times.iter().zip(&stats.photons).enumerate().step_by(37) {
            if k == 0 {
                continue;
            }
            let alpha = coherent_amplitude(&pulse, q.delta_c, q.kappa, t, t0);
            assert!((n - alpha.norm_sqr()).abs() < 1e-6 * (1.0 + alpha.norm_sqr()), "t = {t}");
        }
        assert!((stats.g2_bar - 1.0).abs() < 1e-4);
    }
}

#[test]
fn long_weak_pulse_approaches_cw_statistics() {
    let p = SystemParams::default();
    let drive = calibrate_drive(&p, 0.02, p.g).unwrap();
    let pulse = PulseShape::new(1000.0 * PICOSECOND, 0.0, drive).unwrap();
    // At Δ = 0 the response is set by the slow emitter decay and no
    // nanosecond pulse is quasi-stationary; the polariton side is.
    for d in [1.0, 1.5] {
        let cw = cw_statistics(&p.with_drive(drive), d * p.g).unwrap();
        let pulsed = pulsed_statistics(&p, &pulse, d * p.g).unwrap();
        assert!((pulsed.g2_equal_time / cw.g2 - 1.0).abs() < 0.02, "{} vs {}", pulsed.g2_equal_time, cw.g2);

        // Quasi-stationary pairs: ḡ² − 1 ≈ 2 ∫n² dt ∫₀^∞ (g²(τ) − 1) dτ / (∫n dt)².
        let taus: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.05 * PICOSECOND).collect();
        let curve = g2_tau_cw(&p.with_drive(drive), d * p.g, &taus).unwrap();
        let excess: f64 = curve
            .values()
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1] - 2.0) * 0.05 * PICOSECOND)
            .sum();
        let dt = pulsed.times[1] - pulsed.times[0];
        let n1: f64 = pulsed.photons.iter().sum::<f64>() * dt;
        let n2: f64 = pulsed.photons.iter().map(|x| x * x).sum::<f64>() * dt;
        let predicted = 2.0 * n2 * excess / (n1 * n1);
        let got = pulsed.g2_bar - 1.0;
        assert!((got - predicted).abs() < 0.05 * predicted.abs(), "{got} vs {predicted}");
    }
}

#[test]
fn calibrated_drive_round_trips() {
    let p = SystemParams::default();
    let e = calibrate_drive(&p, 0.4, p.g).unwrap();
    let n = cw_statistics(&p.with_drive(e), p.g).unwrap().photons;
    assert!((n - 0.4).abs() < 1e-4 * 0.4);
}
