//! Photon statistics of the cavity output channel.
//!
//! Continuous-wave quantities come from the Liouvillian steady state and the
//! quantum regression theorem. Pulsed quantities integrate the two-time
//! correlation `G²(t, t') = ⟨a†(t) a†(t') a(t') a(t)⟩` over a single pulse;
//! the inner time integral is carried by a backward Heisenberg-picture
//! solution so that each pulse costs two master-equation sweeps.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::ode::{integrate, OdeOptions};
use crate::dynamics::{
    propagate_operator, steady_state, CollapseSet, DrivenHamiltonian, MasterEquation, PulseShape, QuantumState,
};
use crate::hilbert::{jc_hamiltonian, SystemParams};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    TauSeconds,
    DetuningOverG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    G2,
    Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub value: f64,
    pub error: Option<f64>,
}

/// Sampled `g²(τ)`, `g²(0)` versus detuning, or intensity versus detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub axis: Axis,
    pub kind: CurveKind,
    pub samples: Vec<CurvePoint>,
    pub params: SystemParams,
}

impl CorrelationCurve {
    pub fn new(axis: Axis, kind: CurveKind, samples: Vec<CurvePoint>, params: SystemParams) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::InvalidParameter("curve abscissae must be strictly increasing".into()));
        }
        if let Some(bad) = samples.iter().find(|p| !(p.value >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative curve value {} at x = {}", bad.value, bad.x)));
        }
        Ok(Self { axis, kind, samples, params })
    }

    pub fn xs(&self) -> Vec<f64> {
        self.samples.iter().map(|p| p.x).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|p| p.value).collect()
    }

    /// Sample with the smallest value among those with `x` in `[lo, hi]`.
    pub fn argmin_in(&self, lo: f64, hi: f64) -> Option<CurvePoint> {
        self.samples
            .iter()
            .filter(|p| p.x >= lo && p.x <= hi)
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .copied()
    }
}

/// Rate used to make detunings dimensionless: `g`, or `κ` in the decoupled
/// limit `g = 0`.
pub fn detuning_unit(params: &SystemParams) -> f64 {
    if params.g > 0.0 {
        params.g
    } else {
        params.kappa
    }
}

/// Steady-state cavity population and `g²(0)` of the output field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwStatistics {
    pub photons: f64,
    pub g2: f64,
}

struct CwSolution {
    h: DrivenHamiltonian,
    c_ops: CollapseSet,
    rho: DMatrix<C64>,
    a: DMatrix<C64>,
    n_op: DMatrix<C64>,
    photons: f64,
}

fn solve_cw(params: &SystemParams, detuning: f64) -> Result<CwSolution> {
    let p = params.with_probe_detuning(detuning);
    let space = p.space()?;
    let h = jc_hamiltonian(&p)?;
    let c_ops = CollapseSet::cavity_and_emitter(&p)?;
    let rho = steady_state(&h, &c_ops)?.to_density();
    let a = space.destroy().0;
    let n_op = space.number().0;
    let photons = (&n_op * &rho).trace().re;
    Ok(CwSolution { h: h.into(), c_ops, rho, a, n_op, photons })
}

fn require_light(photons: f64) -> Result<()> {
    if !(photons >= 1e-12) {
        return Err(Error::UndefinedRatio(format!("mean photon number {photons:e} below 1e-12")));
    }
    Ok(())
}

pub fn cw_statistics(params: &SystemParams, detuning: f64) -> Result<CwStatistics> {
    let sol = solve_cw(params, detuning)?;
    require_light(sol.photons)?;
    let ad = sol.a.adjoint();
    let pairs = (&ad * &ad * &sol.a * &sol.a * &sol.rho).trace().re;
    Ok(CwStatistics { photons: sol.photons, g2: pairs / sol.photons.powi(2) })
}

/// `⟨a†a†aa⟩ / ⟨a†a⟩²` in the steady state at probe detuning `detuning` (rad/s),
/// with the drive amplitude taken from `params`.
pub fn g2_zero_cw(params: &SystemParams, detuning: f64) -> Result<f64> {
    cw_statistics(params, detuning).map(|s| s.g2)
}

/// Steady-state `g²(τ)` by the quantum regression theorem.
pub fn g2_tau_cw(params: &SystemParams, detuning: f64, tau_grid: &[f64]) -> Result<CorrelationCurve> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidParameter("empty delay grid".into()));
    }
    if tau_grid[0] < 0.0 || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("delays must be >= 0 and strictly increasing".into()));
    }
    let sol = solve_cw(params, detuning)?;
    require_light(sol.photons)?;
    let x0 = &sol.a * &sol.rho * sol.a.adjoint();
    let prepend = tau_grid[0] > 0.0;
    let mut grid = Vec::with_capacity(tau_grid.len() + 1);
    if prepend {
        grid.push(0.0);
    }
    grid.extend_from_slice(tau_grid);
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-14, ..Default::default() };
    let xs = propagate_operator(&x0, &sol.h, &sol.c_ops, &grid, opts)?;
    let norm = sol.photons.powi(2);
    let samples = xs
        .iter()
        .skip(usize::from(prepend))
        .zip(tau_grid)
        .map(|(x, &tau)| CurvePoint { x: tau, value: (&sol.n_op * x).trace().re.max(0.0) / norm, error: None })
        .collect();
    CorrelationCurve::new(Axis::TauSeconds, CurveKind::G2, samples, params.with_probe_detuning(detuning))
}

fn sweep(
    params: &SystemParams,
    detuning_grid: &[f64],
    kind: CurveKind,
) -> Result<CorrelationCurve> {
    let unit = detuning_unit(params);
    let values: Vec<Result<f64>> = detuning_grid
        .par_iter()
        .map(|&x| {
            let sol = solve_cw(params, x * unit)?;
            match kind {
                CurveKind::Intensity => Ok(sol.photons),
                CurveKind::G2 => {
                    require_light(sol.photons)?;
                    let ad = sol.a.adjoint();
                    Ok((&ad * &ad * &sol.a * &sol.a * &sol.rho).trace().re / sol.photons.powi(2))
                }
            }
        })
        .collect();
    let samples = detuning_grid
        .iter()
        .zip(values)
        .map(|(&x, v)| v.map(|value| CurvePoint { x, value: value.max(0.0), error: None }))
        .collect::<Result<Vec<_>>>()?;
    CorrelationCurve::new(Axis::DetuningOverG, kind, samples, *params)
}

/// Steady-state `⟨a†a⟩` versus Δω_p / g at the fixed drive in `params`.
pub fn transmission_spectrum(params: &SystemParams, detuning_grid: &[f64]) -> Result<CorrelationCurve> {
    sweep(params, detuning_grid, CurveKind::Intensity)
}

/// CW `g²(0)` versus Δω_p / g at the fixed drive in `params`.
pub fn g2_spectrum(params: &SystemParams, detuning_grid: &[f64]) -> Result<CorrelationCurve> {
    sweep(params, detuning_grid, CurveKind::G2)
}

/// Single-pulse photon statistics of the output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsedStatistics {
    /// Expected photons leaving through the output channel, `2κ ∫⟨n⟩dt`.
    pub mean_photons: f64,
    /// Expected ordered photon pairs, `(2κ)² ∫∫ G²(t, t') dt dt'`.
    pub pair_counts: f64,
    /// `∫∫ G² / (∫⟨n⟩)²`: the zero-delay peak of a pulsed HBT histogram
    /// relative to uncorrelated pulses.
    pub g2_bar: f64,
    /// `∫ G²(t, t) dt / ∫ ⟨n⟩² dt`: the equal-time correlation averaged over
    /// the pulse.
    pub g2_equal_time: f64,
    pub times: Vec<f64>,
    pub photons: Vec<f64>,
}

/// Uniform evaluation grid covering `[c − 2 FWHM, c + 2 FWHM + 10/(2κ)]`.
pub fn pulse_grid(params: &SystemParams, pulse: &PulseShape) -> Vec<f64> {
    let t0 = pulse.center - 2.0 * pulse.fwhm;
    let t1 = pulse.center + 2.0 * pulse.fwhm + 10.0 / (2.0 * params.kappa);
    let mut fastest = pulse.fwhm.min(1.0 / (2.0 * params.kappa));
    if params.g > 0.0 {
        fastest = fastest.min(1.0 / params.g);
    }
    let mut n = ((t1 - t0) / (fastest / 8.0)).ceil() as usize + 1;
    n = n.max(401);
    if n.is_multiple_of(2) {
        n += 1;
    }
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}

/// Composite Simpson rule on a uniform grid with an odd number of points.
pub(crate) fn simpson(h: f64, f: &[f64]) -> f64 {
    debug_assert!(f.len() % 2 == 1 && f.len() >= 3);
    let n = f.len();
    let mut s = f[0] + f[n - 1];
    for (i, v) in f.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// Full single-pulse statistics for a probe detuned by `detuning` (rad/s).
pub fn pulsed_statistics(params: &SystemParams, pulse: &PulseShape, detuning: f64) -> Result<PulsedStatistics> {
    let p = params.with_probe_detuning(detuning);
    let space = p.space()?;
    let h = DrivenHamiltonian::pulsed(&p, *pulse)?;
    let c_ops = CollapseSet::cavity_and_emitter(&p)?;
    let grid = pulse_grid(&p, pulse);
    let d = space.dim();
    let step = grid[1] - grid[0];
    let opts = OdeOptions { rtol: 1e-9, atol: 1e-13, ..Default::default() };

    let rho0 = QuantumState::vacuum(&space).to_density();
    let rhos = propagate_operator(&rho0, &h, &c_ops, &grid, opts)?;

    // R(t) = ∫_t^end V(t', t)† n dt' solves dR/dt = −L†R − n with R(end) = 0.
    let n_op = space.number().0;
    let mut me = MasterEquation::new(&h, &c_ops)?;
    let reversed: Vec<f64> = grid.iter().rev().copied().collect();
    let zero = vec![C64::new(0.0, 0.0); d * d];
    let n_slice = n_op.as_slice().to_vec();
    let rs = integrate(
        |t, y, dy| {
            me.apply_adjoint(t, y, dy);
            for (o, nv) in dy.iter_mut().zip(&n_slice) {
                *o = -*o - nv;
            }
        },
        reversed[0],
        &zero,
        &reversed,
        opts,
    )?;

    let a = space.destroy().0;
    let ad = a.adjoint();
    let pair_op = &ad * &ad * &a * &a;
    let mut photons = Vec::with_capacity(grid.len());
    let mut inner = Vec::with_capacity(grid.len());
    let mut equal = Vec::with_capacity(grid.len());
    let mut photons_sq = Vec::with_capacity(grid.len());
    for (i, rho) in rhos.iter().enumerate() {
        let r = DMatrix::from_column_slice(d, d, &rs[grid.len() - 1 - i]);
        let n = (&n_op * rho).trace().re;
        photons.push(n);
        photons_sq.push(n * n);
        inner.push((&ad * &r * &a * rho).trace().re);
        equal.push((&pair_op * rho).trace().re);
    }
    let n_int = simpson(step, &photons);
    let two_kappa = 2.0 * p.kappa;
    let mean_photons = two_kappa * n_int;
    if !(mean_photons >= 1e-14) {
        return Err(Error::UndefinedRatio(format!("pulse delivers {mean_photons:e} photons")));
    }
    let pairs = 2.0 * simpson(step, &inner);
    let g2_equal_time = simpson(step, &equal) / simpson(step, &photons_sq);
    Ok(PulsedStatistics {
        mean_photons,
        pair_counts: two_kappa * two_kappa * pairs,
        g2_bar: pairs / (n_int * n_int),
        g2_equal_time,
        times: grid,
        photons,
    })
}

/// Pulse-averaged `ḡ²(0) = ∫∫ G²(t, t') dt dt' / (∫⟨n⟩dt)²`.
pub fn pulsed_g2(params: &SystemParams, pulse: &PulseShape, detuning: f64) -> Result<f64> {
    pulsed_statistics(params, pulse, detuning).map(|s| s.g2_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::calibrate_drive;
    use crate::units::{ghz_to_rad, PICOSECOND};

    fn paper() -> SystemParams {
        let p = SystemParams::default();
        p.with_drive(calibrate_drive(&p, 0.4, p.g).unwrap())
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.2).collect();
        let f: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x).collect();
        let exact = 2f64.powi(4) / 4.0 - 4.0;
        assert!((simpson(0.2, &f) - exact).abs() < 1e-12);
    }

    #[test]
    fn curve_validation() {
        let p = SystemParams::default();
        let pt = |x, v| CurvePoint { x, value: v, error: None };
        assert!(CorrelationCurve::new(Axis::TauSeconds, CurveKind::G2, vec![pt(1.0, 1.0), pt(0.5, 1.0)], p).is_err());
        assert!(CorrelationCurve::new(Axis::TauSeconds, CurveKind::G2, vec![pt(0.0, -0.1)], p).is_err());
    }

    #[test]
    fn empty_cavity_is_coherent() {
        let p = SystemParams { g: 0.0, n_max: 12, ..Default::default() }.with_drive(ghz_to_rad(8.0));
        for d in [0.0, 0.5, -1.3] {
            assert!((g2_zero_cw(&p, d * p.kappa).unwrap() - 1.0).abs() < 1e-6);
        }
        let taus: Vec<f64> = (0..20).map(|i| i as f64 * 2.0 * PICOSECOND).collect();
        let curve = g2_tau_cw(&p, 0.0, &taus).unwrap();
        assert!(curve.values().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn undriven_ratio_is_undefined() {
        let p = SystemParams::default();
        assert!(matches!(g2_zero_cw(&p, 0.0), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn bunching_and_blockade() {
        let p = paper();
        let at_zero = g2_zero_cw(&p, 0.0).unwrap();
        let at_blockade = g2_zero_cw(&p, 1.5 * p.g).unwrap();
        assert!(at_zero > 1.0);
        assert!(at_blockade < 1.0);
        assert!(at_zero > at_blockade);
    }

    #[test]
    fn regression_starts_at_equal_time_value() {
        let p = paper();
        let taus: Vec<f64> = (0..=60).map(|i| i as f64 * PICOSECOND).collect();
        let curve = g2_tau_cw(&p, 0.0, &taus).unwrap();
        let g0 = g2_zero_cw(&p, 0.0).unwrap();
        assert!((curve.samples[0].value - g0).abs() < 1e-9);
        let late = g2_tau_cw(&p, 0.0, &[500.0 * PICOSECOND]).unwrap();
        assert!((late.samples[0].value - 1.0).abs() < 1e-4);
    }

    #[test]
    fn spectrum_is_symmetric() {
        let p = paper();
        let grid: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.25).collect();
        for curve in [transmission_spectrum(&p, &grid).unwrap(), g2_spectrum(&p, &grid).unwrap()] {
            let v = curve.values();
            for i in 0..v.len() {
                let j = v.len() - 1 - i;
                assert!((v[i] - v[j]).abs() <= 1e-6 * v[i].abs().max(v[j].abs()));
            }
        }
    }

    #[test]
    fn coherent_pulse_stays_coherent() {
        let p = SystemParams { g: 0.0, ..Default::default() };
        let pulse = PulseShape::new(40.0 * PICOSECOND, 0.0, ghz_to_rad(10.0)).unwrap();
        for d in [0.0, 1.0] {
            let s = pulsed_statistics(&p, &pulse, d * p.kappa).unwrap();
            assert!((s.g2_bar - 1.0).abs() < 1e-4, "g2_bar = {}", s.g2_bar);
            assert!((s.g2_equal_time - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn dark_pulse_is_undefined() {
        let p = SystemParams::default();
        let pulse = PulseShape::new(40.0 * PICOSECOND, 0.0, 0.0).unwrap();
        assert!(matches!(pulsed_g2(&p, &pulse, 0.0), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn pulse_grid_covers_tail() {
        let p = SystemParams::default();
        let pulse = PulseShape::new(40.0 * PICOSECOND, 0.0, 1.0).unwrap();
        let g = pulse_grid(&p, &pulse);
        assert!(g.len() >= 401 && g.len() % 2 == 1);
        assert!((g[0] + 80.0 * PICOSECOND).abs() < 1e-18);
        assert!((g[g.len() - 1] - (80.0 * PICOSECOND + 10.0 / (2.0 * p.kappa))).abs() < 1e-18);
    }
}
