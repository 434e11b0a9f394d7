use blockade_core::correlations::{pulse_grid, pulsed_statistics};
use blockade_core::dynamics::{
    calibrate_drive, evolve_master, mc_trajectory, CollapseSet, DrivenHamiltonian, McSolver, PulseShape, QuantumState,
    TrajectoryOptions,
};
use blockade_core::hilbert::SystemParams;
use blockade_core::units::PICOSECOND;
use rayon::prelude::*;

/// Kolmogorov-Smirnov distance between samples and `1 − exp(−rate·t)`.
fn ks_exponential(mut xs: Vec<f64>, rate: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn single_photon_emission_times_are_exponential() {
    let p = SystemParams { g: 0.0, gamma: 0.0, ..Default::default() };
    let s = p.space().unwrap();
    let h: DrivenHamiltonian = s.zero().into();
    let c = CollapseSet::cavity_and_emitter(&p).unwrap();
    let psi0 = QuantumState::basis(&s, false, 1);
    let window = 40.0 / (2.0 * p.kappa);
    let times: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|seed| {
            let rec = mc_trajectory(&psi0, &h, &c, (0.0, window), seed).unwrap();
            assert_eq!(rec.events.len(), 1);
            rec.events[0].0
        })
        .collect();
    let d = ks_exponential(times, 2.0 * p.kappa);
    // 1% critical value of the one-sample KS statistic
    assert!(d < 1.628 / 10_000f64.sqrt(), "KS distance {d}");
}

fn paper() -> SystemParams {
    let p = SystemParams::default();
    p.with_drive(calibrate_drive(&p, 0.4, p.g).unwrap())
}

#[test]
fn trajectory_ensemble_matches_master_equation() {
    let p = paper();
    let pulse = PulseShape::new(40.0 * PICOSECOND, 0.0, p.drive_amp).unwrap();
    let k = 10_000u64;
    for d in [0.0, 1.5] {
        let q = p.with_probe_detuning(d * p.g);
        let s = q.space().unwrap();
        let grid = pulse_grid(&q, &pulse);
        let h = DrivenHamiltonian::pulsed(&q, pulse).unwrap();
        let c = CollapseSet::cavity_and_emitter(&q).unwrap();
        let samples: Vec<f64> = grid.iter().step_by(grid.len() / 12).copied().collect();
        let exact: Vec<f64> = evolve_master(&QuantumState::vacuum(&s), &h, &c, &samples)
            .unwrap()
            .iter()
            .map(|r| r.expect(&s.number()))
            .collect();

        let solver = McSolver::new(&h, &c, TrajectoryOptions::default()).unwrap();
        let number = [s.number()];
        let runs: Vec<(Vec<f64>, f64)> = (0..k)
            .into_par_iter()
            .map(|seed| {
                let (rec, obs) = solver
                    .run_observed(&QuantumState::vacuum(&s), grid[0], grid[grid.len() - 1], seed, &samples, &number)
                    .unwrap();
                let n = rec.channel_times(0).count() as f64;
                (obs.into_iter().map(|o| o[0]).collect(), n * (n - 1.0))
            })
            .collect();

        for (i, &want) in exact.iter().enumerate().skip(1) {
            let xs: Vec<f64> = runs.iter().map(|r| r.0[i]).collect();
            let (mean, se) = mean_se(&xs);
            // Before the first jumps all trajectories coincide and only the
            // integrator tolerance separates them from the master equation.
            assert!((mean - want).abs() < 3.0 * se + 1e-5 * want, "detuning {d}g, t = {}: {mean} ± {se} vs {want}", samples[i]);
        }
        let pairs: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let (mean, se) = mean_se(&pairs);
        let want = pulsed_statistics(&p, &pulse, d * p.g).unwrap().pair_counts;
        assert!((mean - want).abs() < 3.0 * se, "detuning {d}g pairs: {mean} ± {se} vs {want}");
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
