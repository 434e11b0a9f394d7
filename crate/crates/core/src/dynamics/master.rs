//! Lindblad master equation: right-hand side, steady state and
//! time-dependent evolution.
//!
//! With `K = Σ C†C` and `H_eff = H − (i/2) K` the generator is
//! `L(ρ) = −i H_eff ρ + i ρ H_eff† + Σ C ρ C†`, and its adjoint acting on
//! observables is `L†(A) = i H_eff† A − i A H_eff + Σ C† A C`.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use super::ode::{integrate, OdeOptions};
use super::{CollapseSet, DrivenHamiltonian, Envelope, QuantumState};
use crate::hilbert::QuantumOperator;
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Precomputed generator for a (possibly time-dependent) Hamiltonian and a
/// fixed set of collapse operators.
#[derive(Clone)]
pub struct MasterEquation {
    dim: usize,
    heff_base: DMatrix<C64>,
    drive: DMatrix<C64>,
    envelope: Envelope,
    jumps: Vec<(DMatrix<C64>, DMatrix<C64>)>,
    // scratch
    heff: DMatrix<C64>,
    heff_adj: DMatrix<C64>,
    tmp: DMatrix<C64>,
}

impl MasterEquation {
    pub fn new(h: &DrivenHamiltonian, c_ops: &CollapseSet) -> Result<Self> {
        let dim = h.dim();
        if h.drive.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: h.drive.dim() });
        }
        let mut k = DMatrix::<C64>::zeros(dim, dim);
        let mut jumps = Vec::new();
        for c in c_ops.ops() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: c.dim() });
            }
            if c.max_abs() == 0.0 {
                continue;
            }
            k += c.0.adjoint() * &c.0;
            jumps.push((c.0.clone(), c.0.adjoint()));
        }
        let heff_base = &h.base.0 - k.map(|x| x * I * 0.5);
        Ok(Self {
            dim,
            heff: heff_base.clone(),
            heff_adj: heff_base.adjoint(),
            heff_base,
            drive: h.drive.0.clone(),
            envelope: h.envelope,
            jumps,
            tmp: DMatrix::zeros(dim, dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest rate appearing in the generator; residuals are reported relative to it.
    pub fn rate_scale(&self) -> f64 {
        let h = self.heff_base.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        let d = self.drive.iter().fold(0.0f64, |m, x| m.max(x.norm())) * self.max_envelope();
        let j = self
            .jumps
            .iter()
            .map(|(c, _)| c.iter().fold(0.0f64, |m, x| m.max(x.norm())).powi(2))
            .fold(0.0, f64::max);
        h.max(d).max(j).max(f64::MIN_POSITIVE)
    }

    fn max_envelope(&self) -> f64 {
        match self.envelope {
            Envelope::Constant(e) => e.abs(),
            Envelope::Pulse(p) => p.peak_amp,
        }
    }

    fn update_heff(&mut self, t: f64) {
        let e = self.envelope.value(t);
        self.heff.copy_from(&self.heff_base);
        if e != 0.0 {
            self.heff.zip_apply(&self.drive, |h, d| *h += d * e);
        }
        self.heff_adj.copy_from(&self.heff.adjoint());
    }

    /// `out = L_t(x)` for an arbitrary (not necessarily Hermitian) operator `x`,
    /// both stored column-major.
    pub fn apply(&mut self, t: f64, x: &[C64], out: &mut [C64]) {
        self.update_heff(t);
        let d = self.dim;
        let x = DMatrixView::from_slice(x, d, d);
        let mut out = DMatrixViewMut::from_slice(out, d, d);
        out.gemm(-I, &self.heff, &x, ZERO);
        out.gemm(I, &x, &self.heff_adj, ONE);
        for (c, cd) in &self.jumps {
            self.tmp.gemm(ONE, c, &x, ZERO);
            out.gemm(ONE, &self.tmp, cd, ONE);
        }
    }

    /// `out = L_t†(a)`, the Heisenberg-picture generator.
    pub fn apply_adjoint(&mut self, t: f64, a: &[C64], out: &mut [C64]) {
        self.update_heff(t);
        let d = self.dim;
        let a = DMatrixView::from_slice(a, d, d);
        let mut out = DMatrixViewMut::from_slice(out, d, d);
        out.gemm(I, &self.heff_adj, &a, ZERO);
        out.gemm(-I, &a, &self.heff, ONE);
        for (c, cd) in &self.jumps {
            self.tmp.gemm(ONE, cd, &a, ZERO);
            out.gemm(ONE, &self.tmp, c, ONE);
        }
    }

    /// Dense `d² × d²` superoperator at time `t` acting on column-major `vec(ρ)`.
    pub fn superoperator(&mut self, t: f64) -> DMatrix<C64> {
        self.update_heff(t);
        let d = self.dim;
        let id = DMatrix::<C64>::identity(d, d);
        let mut l = id.kronecker(&self.heff).map(|x| -I * x);
        l += self.heff.map(|x| x.conj()).kronecker(&id).map(|x| I * x);
        for (c, _) in &self.jumps {
            l += c.map(|x| x.conj()).kronecker(c);
        }
        l
    }
}

fn check_density(rho: &QuantumState, dim: usize) -> Result<DMatrix<C64>> {
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: rho.dim() });
    }
    Ok(rho.to_density())
}

/// `dρ/dt = −i[H, ρ] + Σ (C ρ C† − ½{C†C, ρ})`.
pub fn lindblad_rhs(h: &QuantumOperator, c_ops: &CollapseSet, rho: &QuantumState) -> Result<DMatrix<C64>> {
    let dh: DrivenHamiltonian = h.clone().into();
    let mut me = MasterEquation::new(&dh, c_ops)?;
    let rho = check_density(rho, me.dim())?;
    let mut out = DMatrix::zeros(me.dim(), me.dim());
    me.apply(0.0, rho.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Largest entry of `L(ρ)` divided by the generator's rate scale.
pub fn steady_state_residual(h: &QuantumOperator, c_ops: &CollapseSet, rho: &QuantumState) -> Result<f64> {
    let dh: DrivenHamiltonian = h.clone().into();
    let me = MasterEquation::new(&dh, c_ops)?;
    let scale = me.rate_scale();
    let r = lindblad_rhs(h, c_ops, rho)?;
    Ok(r.iter().fold(0.0f64, |m, x| m.max(x.norm())) / scale)
}

/// Unique stationary state of a time-independent generator, found by
/// replacing one row of `L vec(ρ) = 0` with the trace condition.
pub fn steady_state(h: &QuantumOperator, c_ops: &CollapseSet) -> Result<QuantumState> {
    if c_ops.is_empty() {
        return Err(Error::NonUniqueSteadyState("no dissipation: every eigenstate of H is stationary".into()));
    }
    let dh: DrivenHamiltonian = h.clone().into();
    let mut me = MasterEquation::new(&dh, c_ops)?;
    let d = me.dim();
    let scale = me.rate_scale();
    let mut l = me.superoperator(0.0);
    let mut b = nalgebra::DVector::<C64>::zeros(d * d);
    for c in 0..d * d {
        l[(0, c)] = ZERO;
    }
    for k in 0..d {
        l[(0, k * (d + 1))] = C64::new(scale, 0.0);
    }
    b[0] = C64::new(scale, 0.0);
    let x = l
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NonUniqueSteadyState("Liouvillian kernel is degenerate".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonUniqueSteadyState("Liouvillian kernel is degenerate".into()));
    }
    let rho = DMatrix::from_column_slice(d, d, x.as_slice());
    let mut rho = (&rho + rho.adjoint()).map(|v| v * 0.5);
    let tr = rho.trace();
    rho /= tr;
    let state = QuantumState::Density(rho);
    let residual = steady_state_residual(h, c_ops, &state)?;
    if residual > 1e-8 {
        return Err(Error::NonUniqueSteadyState(format!("relative residual {residual:e} after solve")));
    }
    Ok(state)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Evolves `rho0`, taken to be the state at `t_grid[0]`, and returns the
/// density matrix at every grid time.
pub fn evolve_master(
    rho0: &QuantumState,
    h: &DrivenHamiltonian,
    c_ops: &CollapseSet,
    t_grid: &[f64],
) -> Result<Vec<QuantumState>> {
    evolve_master_with(rho0, h, c_ops, t_grid, OdeOptions::default())
}

pub fn evolve_master_with(
    rho0: &QuantumState,
    h: &DrivenHamiltonian,
    c_ops: &CollapseSet,
    t_grid: &[f64],
    opts: OdeOptions,
) -> Result<Vec<QuantumState>> {
    check_grid(t_grid)?;
    let rho0 = check_density(rho0, h.dim())?;
    let out = propagate_operator(&rho0, h, c_ops, t_grid, opts)?;
    Ok(out.into_iter().map(QuantumState::Density).collect())
}

/// Evolves an arbitrary operator `x0` (given at `t_grid[0]`) under the
/// generator. Used for regression-theorem correlations where `x0` is not a
/// state.
pub fn propagate_operator(
    x0: &DMatrix<C64>,
    h: &DrivenHamiltonian,
    c_ops: &CollapseSet,
    t_grid: &[f64],
    opts: OdeOptions,
) -> Result<Vec<DMatrix<C64>>> {
    check_grid(t_grid)?;
    let mut me = MasterEquation::new(h, c_ops)?;
    let d = me.dim();
    if x0.nrows() != d || x0.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x0.nrows() });
    }
    let ys = integrate(|t, y, dy| me.apply(t, y, dy), t_grid[0], x0.as_slice(), t_grid, opts)?;
    Ok(ys.into_iter().map(|y| DMatrix::from_column_slice(d, d, &y)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_space, jc_hamiltonian, SystemParams};
    use crate::units::ghz_to_rad;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().fold(0.0, |a, x| a.max(x.norm()))
    }

    #[test]
    fn zero_generator() {
        let s = build_space(2).unwrap();
        let rho = QuantumState::basis(&s, true, 1);
        let r = lindblad_rhs(&s.zero(), &CollapseSet::empty(), &rho).unwrap();
        assert_eq!(max_abs(&r), 0.0);
    }

    #[test]
    fn vacuum_is_dark() {
        let p = SystemParams::default();
        let s = p.space().unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        let r = lindblad_rhs(&s.zero(), &c, &QuantumState::vacuum(&s)).unwrap();
        assert_eq!(max_abs(&r), 0.0);
    }

    #[test]
    fn single_photon_decay_rate() {
        let p = SystemParams::default();
        let s = p.space().unwrap();
        let c = CollapseSet::new(vec![s.destroy().scaled((2.0 * p.kappa).sqrt())], Some(0)).unwrap();
        let rho = QuantumState::basis(&s, false, 1);
        let r = lindblad_rhs(&s.zero(), &c, &rho).unwrap();
        let dn = (s.number().0 * &r).trace().re;
        assert!((dn / (-2.0 * p.kappa) - 1.0).abs() < 1e-12);
        assert!(r.trace().norm() < 1e-12 * 2.0 * p.kappa);
    }

    #[test]
    fn rhs_traceless_for_driven_system() {
        let p = SystemParams::default().with_probe_detuning(ghz_to_rad(9.0)).with_drive(ghz_to_rad(8.0));
        let s = p.space().unwrap();
        let h = jc_hamiltonian(&p).unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        let mut v = nalgebra::DVector::<C64>::from_fn(s.dim(), |i, _| C64::new(1.0 / (1.0 + i as f64), 0.3 * i as f64));
        v /= C64::new(v.norm(), 0.0);
        let r = lindblad_rhs(&h, &c, &QuantumState::Ket(v)).unwrap();
        assert!(r.trace().norm() < 1e-12 * p.g);
    }

    #[test]
    fn rhs_rejects_dimension_mismatch() {
        let p = SystemParams::default();
        let h = jc_hamiltonian(&p).unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        let other = build_space(2).unwrap();
        assert!(matches!(
            lindblad_rhs(&h, &c, &QuantumState::vacuum(&other)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn superoperator_matches_matrix_form() {
        let p = SystemParams::default().with_probe_detuning(ghz_to_rad(-5.0)).with_drive(ghz_to_rad(4.0)).with_n_max(2);
        let h = DrivenHamiltonian::cw(&p).unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        let mut me = MasterEquation::new(&h, &c).unwrap();
        let d = me.dim();
        let x = DMatrix::<C64>::from_fn(d, d, |r, c| C64::new((r * 3 + c) as f64, (r as f64) - (c as f64) * 0.5));
        let l = me.superoperator(0.0);
        let via_super = &l * nalgebra::DVector::from_column_slice(x.as_slice());
        let mut via_matrix = vec![ZERO; d * d];
        me.apply(0.0, x.as_slice(), &mut via_matrix);
        let scale = me.rate_scale();
        for (a, b) in via_super.iter().zip(&via_matrix) {
            assert!((a - b).norm() < 1e-12 * scale * 40.0);
        }
    }

    #[test]
    fn adjoint_is_dual_to_generator() {
        let p = SystemParams::default().with_probe_detuning(ghz_to_rad(3.0)).with_drive(ghz_to_rad(6.0)).with_n_max(3);
        let h = DrivenHamiltonian::cw(&p).unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        let mut me = MasterEquation::new(&h, &c).unwrap();
        let d = me.dim();
        let x = DMatrix::<C64>::from_fn(d, d, |r, c| C64::new((r + 2 * c) as f64 * 0.1, (r * c) as f64 * 0.05));
        let a = DMatrix::<C64>::from_fn(d, d, |r, c| C64::new(1.0 / (1.0 + (r + c) as f64), r as f64 * 0.2));
        let mut lx = vec![ZERO; d * d];
        let mut la = vec![ZERO; d * d];
        me.apply(0.0, x.as_slice(), &mut lx);
        me.apply_adjoint(0.0, a.as_slice(), &mut la);
        let lx = DMatrix::from_column_slice(d, d, &lx);
        let la = DMatrix::from_column_slice(d, d, &la);
        let lhs = (&a * &lx).trace();
        let rhs = (&la * &x).trace();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn undriven_steady_state_is_vacuum() {
        let p = SystemParams::default();
        let h = jc_hamiltonian(&p).unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        let rho = steady_state(&h, &c).unwrap();
        let s = p.space().unwrap();
        assert!((rho.expect(&s.number())).abs() < 1e-14);
        let vac = s.index(false, 0);
        assert!((rho.to_density()[(vac, vac)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_needs_dissipation() {
        let p = SystemParams::default();
        let h = jc_hamiltonian(&p).unwrap();
        assert!(matches!(steady_state(&h, &CollapseSet::empty()), Err(Error::NonUniqueSteadyState(_))));
    }

    #[test]
    fn driven_empty_cavity_is_coherent() {
        let kappa = ghz_to_rad(16.0);
        for (e, delta) in [(0.3, 0.0), (0.5, 0.7), (0.2, -1.9)] {
            let p = SystemParams { g: 0.0, gamma: 0.0, ..Default::default() }
                .with_probe_detuning(delta * kappa)
                .with_drive(e * kappa);
            let h = jc_hamiltonian(&p).unwrap();
            let c = CollapseSet::cavity_and_emitter(&p).unwrap();
            let rho = steady_state(&h, &c).unwrap();
            let n = rho.expect(&p.space().unwrap().number());
            let want = e * e / (delta * delta + 1.0);
            assert!((n / want - 1.0).abs() < 1e-6, "n = {n}, want {want}");
            assert!(steady_state_residual(&h, &c, &rho).unwrap() < 1e-10);
        }
    }

    #[test]
    fn evolve_rejects_bad_grid() {
        let p = SystemParams::default();
        let s = p.space().unwrap();
        let h = DrivenHamiltonian::cw(&p).unwrap();
        let c = CollapseSet::cavity_and_emitter(&p).unwrap();
        assert!(evolve_master(&QuantumState::vacuum(&s), &h, &c, &[0.0, 1e-12, 1e-12]).is_err());
        assert!(evolve_master(&QuantumState::vacuum(&s), &h, &c, &[]).is_err());
    }
}
