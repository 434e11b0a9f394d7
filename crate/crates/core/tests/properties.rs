use blockade_core::blinking::{
    mixture_g2, telegraph_envelope, Click, ClickStream, Component, MixtureComponents, MixtureWeights, TelegraphParams,
};
use blockade_core::dynamics::{lindblad_rhs, steady_state, CollapseSet, QuantumState};
use blockade_core::hbt::{build_histogram, fit_peaks, normalize_area, Normalization, PeakArea};
use blockade_core::hilbert::{build_space, jc_hamiltonian, SystemParams};
use blockade_core::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;

const PERIOD: f64 = 12.5e-9;

fn params() -> impl Strategy<Value = SystemParams> {
    (0.0..3e11f64, 1e9..3e11f64, 0.0..5e9f64, -4e11..4e11f64, -4e11..4e11f64, 0.0..2e11f64, 1usize..6).prop_map(
        |(g, kappa, gamma, delta_c, delta_a, drive_amp, n_max)| SystemParams {
            g,
            kappa,
            gamma,
            delta_c,
            delta_a,
            drive_amp,
            n_max,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_hermitian(p in params()) {
        let h = jc_hamiltonian(&p).unwrap();
        prop_assert!(h.hermiticity_error() <= 1e-12 * h.max_abs().max(1.0));
    }

    #[test]
    fn basis_labels_round_trip(n_max in 1usize..20, excited: bool, n in 0usize..20) {
        let s = build_space(n_max).unwrap();
        let n = n % (n_max + 1);
        prop_assert_eq!(s.label(s.index(excited, n)), (excited, n));
    }

    #[test]
    fn generator_is_traceless(p in params(), seed in 0u64..1000) {
        let s = p.space().unwrap();
        let d = s.dim();
        // random positive matrix B B† normalized to unit trace
        let b = DMatrix::<C64>::from_fn(d, d, |i, j| {
            let x = ((seed as usize * 31 + i * 7 + j * 13) % 97) as f64 / 97.0 - 0.5;
            C64::new(x, (i as f64 - j as f64) * 0.01)
        });
        let mut rho = &b * b.adjoint();
        let tr = rho.trace();
        rho /= tr;
        let dr = lindblad_rhs(&jc_hamiltonian(&p).unwrap(), &CollapseSet::cavity_and_emitter(&p).unwrap(), &QuantumState::Density(rho)).unwrap();
        let scale = dr.iter().fold(1.0f64, |a, x| a.max(x.norm()));
        prop_assert!(dr.trace().norm() <= 1e-12 * scale);
    }

    #[test]
    fn steady_state_is_a_state(p in params()) {
        let p = SystemParams { n_max: p.n_max.min(4), ..p };
        let ss = steady_state(&jc_hamiltonian(&p).unwrap(), &CollapseSet::cavity_and_emitter(&p).unwrap()).unwrap();
        prop_assert!(ss.validate(1e-9).is_ok());
    }

    #[test]
    fn envelope_is_monotone_and_bounded(t in 1e-9..1e-6f64, f in 0.01..=1.0f64, a in 0.0..1e-5f64, b in 0.0..1e-5f64) {
        let tp = TelegraphParams::new(t, f).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (c_lo, c_hi) = (telegraph_envelope(&tp, lo), telegraph_envelope(&tp, hi));
        prop_assert!(c_hi <= c_lo);
        prop_assert!(c_hi >= 1.0 && c_lo <= 1.0 / f * (1.0 + 1e-15));
    }

    #[test]
    fn coherent_mixtures_are_coherent(i in prop::array::uniform3(0.01..10.0f64), w in prop::array::uniform3(0.0..1.0f64)) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-3);
        let w = MixtureWeights::new(w[0] / total, w[1] / total, 1.0 - w[0] / total - w[1] / total);
        prop_assume!(w.is_ok());
        let c = MixtureComponents {
            bright: Component::coherent(i[0]),
            background: Component::coherent(i[1]),
            dark: Component::coherent(i[2]),
        };
        let m = mixture_g2(&c, &w.unwrap()).unwrap();
        prop_assert!((m.g2().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_reject_bad_sums(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
        prop_assert_eq!(MixtureWeights::new(a, b, c).is_ok(), (a + b + c - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn histogram_counts_every_pair(times in prop::collection::vec((0u8..2, 0u64..2_000_000), 1..400)) {
        let clicks: Vec<Click> = times.iter().map(|&(channel, time_ps)| Click { channel, time_ps }).collect();
        let s = ClickStream::new(clicks).unwrap();
        let (c0, c1) = (s.channel(0), s.channel(1));
        prop_assume!(!c0.is_empty() && !c1.is_empty());
        let max_lag = 300e-9;
        let h = build_histogram(&s, 0.5e-9, max_lag, PERIOD).unwrap();
        let brute = c0.iter().flat_map(|&a| c1.iter().map(move |&b| b as i64 - a as i64)).filter(|d| d.abs() <= 300_000).count();
        prop_assert_eq!(h.total(), brute as u64);
    }

    #[test]
    fn fit_is_scale_invariant(g0 in 1000.0..5000.0f64, ratio in 0.5..0.99f64, t in 50e-9..400e-9f64, c in 2u32..1000, seed in 0u64..1000) {
        let ginf = g0 * ratio;
        let peaks: Vec<PeakArea> = (-40i64..=40)
            .map(|m| {
                let jitter = (((seed as i64 * 7919 + m * 104_729) % 1000) as f64 / 1000.0 - 0.5) * ginf.sqrt();
                PeakArea { m, area: ((g0 - ginf) * (-(m.abs() as f64) * PERIOD / t).exp() + ginf + jitter).round() }
            })
            .collect();
        let scaled: Vec<PeakArea> = peaks.iter().map(|p| PeakArea { m: p.m, area: p.area * c as f64 }).collect();
        let a = fit_peaks(&peaks, PERIOD, (1, 40)).unwrap();
        let b = fit_peaks(&scaled, PERIOD, (1, 40)).unwrap();
        prop_assert_eq!(a.t_identifiable, b.t_identifiable);
        let rel = |x: f64, y: f64| if x == y { 0.0 } else { ((x - y) / x).abs() };
        prop_assert!(rel(b.g0, a.g0 * c as f64) < 1e-10);
        prop_assert!(rel(b.ginf, a.ginf * c as f64) < 1e-10);
        prop_assert!(rel(a.t, b.t) < 1e-10);
        let area0 = peaks.iter().find(|p| p.m == 0).unwrap().area;
        for mode in [Normalization::Plateau, Normalization::NearestNeighbor] {
            let x = normalize_area(area0, &a, mode).unwrap().value;
            let y = normalize_area(area0 * c as f64, &b, mode).unwrap().value;
            prop_assert!(rel(x, y) < 1e-10);
        }
    }

    #[test]
    fn nearest_never_exceeds_plateau(g0 in 1000.0..5000.0f64, ratio in 0.5..1.0f64, t in 50e-9..400e-9f64, area0 in 100.0..10000.0f64) {
        let ginf = g0 * ratio;
        let peaks: Vec<PeakArea> = (-30i64..=30)
            .map(|m| PeakArea { m, area: (g0 - ginf) * (-(m.abs() as f64) * PERIOD / t).exp() + ginf })
            .collect();
        let fit = fit_peaks(&peaks, PERIOD, (1, 30)).unwrap();
        let plateau = normalize_area(area0, &fit, Normalization::Plateau).unwrap().value;
        let nearest = normalize_area(area0, &fit, Normalization::NearestNeighbor).unwrap().value;
        prop_assert!(nearest <= plateau * (1.0 + 1e-12));
    }
}
