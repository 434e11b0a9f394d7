//! Quantum-jump (Monte Carlo wavefunction) unraveling of the master equation.
//!
//! Between jumps the unnormalized state evolves under `H_eff = H − (i/2) Σ C†C`.
//! A jump fires when `‖ψ‖²` falls to a uniform random threshold; the crossing
//! time is located by bisection on the integrator's continuous extension, the
//! channel is drawn with probability proportional to `‖C_k ψ‖²`, and the state
//! is renormalized.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ode::{DormandPrince, OdeOptions};
use super::{CollapseSet, DrivenHamiltonian, Envelope, JumpRecord, QuantumState};
use crate::hilbert::QuantumOperator;
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryOptions {
    pub ode: OdeOptions,
    /// Jump-time bisection stops once the bracket is below this fraction of
    /// the enclosing step.
    pub time_rtol: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { ode: OdeOptions { rtol: 1e-7, atol: 1e-9, ..Default::default() }, time_rtol: 1e-3 }
    }
}

/// Reusable trajectory integrator for one Hamiltonian and collapse set.
#[derive(Clone)]
pub struct McSolver {
    dim: usize,
    /// `−i H_eff` and `−i (a + a†)` as coordinate lists; both are very sparse.
    base: Vec<(usize, usize, C64)>,
    drive: Vec<(usize, usize, C64)>,
    envelope: Envelope,
    /// (original channel index, operator)
    jumps: Vec<(usize, DMatrix<C64>)>,
    opts: TrajectoryOptions,
}

impl McSolver {
    pub fn new(h: &DrivenHamiltonian, c_ops: &CollapseSet, opts: TrajectoryOptions) -> Result<Self> {
        let dim = h.dim();
        let mut k = DMatrix::<C64>::zeros(dim, dim);
        let mut jumps = Vec::new();
        for (idx, c) in c_ops.ops().iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: c.dim() });
            }
            if c.max_abs() == 0.0 {
                continue;
            }
            k += c.0.adjoint() * &c.0;
            jumps.push((idx, c.0.clone()));
        }
        let heff = &h.base.0 - k.map(|x| x * I * 0.5);
        Ok(Self {
            dim,
            base: nonzeros(&heff.map(|x| -I * x)),
            drive: nonzeros(&h.drive.0.map(|x| -I * x)),
            envelope: h.envelope,
            jumps,
            opts,
        })
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        dy.fill(ZERO);
        for &(i, j, v) in &self.base {
            dy[i] += v * y[j];
        }
        let e = self.envelope.value(t);
        if e != 0.0 {
            for &(i, j, v) in &self.drive {
                dy[i] += v * e * y[j];
            }
        }
    }

    /// Runs one trajectory over `[t0, t1]`.
    pub fn run(&self, psi0: &QuantumState, t0: f64, t1: f64, seed: u64) -> Result<JumpRecord> {
        self.run_observed(psi0, t0, t1, seed, &[], &[]).map(|(r, _)| r)
    }

    /// Runs one trajectory and records `⟨A⟩` of the normalized state for every
    /// operator at every sample time (which must lie in `[t0, t1]`, increasing).
    /// The result is indexed `[sample][operator]`.
    pub fn run_observed(
        &self,
        psi0: &QuantumState,
        t0: f64,
        t1: f64,
        seed: u64,
        samples: &[f64],
        ops: &[QuantumOperator],
    ) -> Result<(JumpRecord, Vec<Vec<f64>>)> {
        let QuantumState::Ket(psi0) = psi0 else {
            return Err(Error::InvalidParameter("trajectories start from a ket".into()));
        };
        if psi0.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: psi0.len() });
        }
        if !(t1 > t0) {
            return Err(Error::InvalidParameter("trajectory window must have t1 > t0".into()));
        }
        if samples.windows(2).any(|w| w[1] <= w[0]) || samples.iter().any(|&s| s < t0 || s > t1) {
            return Err(Error::InvalidParameter("sample times must increase inside the window".into()));
        }
        let n0 = psi0.norm();
        if n0 == 0.0 {
            return Err(Error::InvalidParameter("zero initial state".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = &mut |t: f64, y: &[C64], dy: &mut [C64]| self.rhs(t, y, dy);
        let start: Vec<C64> = psi0.iter().map(|x| x / n0).collect();
        let mut dp = DormandPrince::new(t0, start, 1.0, self.opts.ode);
        let mut threshold: f64 = rng.random();
        let mut events = Vec::new();
        let mut observed = Vec::with_capacity(samples.len());
        let mut next_sample = 0;
        let mut buf = vec![ZERO; self.dim];

        let record = |psi: &[C64], observed: &mut Vec<Vec<f64>>| {
            let v = DVectorView::from_slice(psi, psi.len());
            let nrm = v.norm_squared();
            observed.push(ops.iter().map(|op| (v.dotc(&(op.matrix() * v)) / nrm).re).collect());
        };

        if !samples.is_empty() && samples[0] == t0 {
            record(&dp.y, &mut observed);
            next_sample = 1;
        }

        while dp.t < t1 {
            dp.step(f, t1)?;
            let norm_sq = |y: &[C64]| y.iter().map(|c| c.norm_sqr()).sum::<f64>();
            let end_norm = norm_sq(&dp.y);
            if !end_norm.is_finite() || end_norm < 1e-300 {
                return Err(Error::Integrator { time: dp.t, reason: "norm underflow without a resolved jump".into() });
            }
            let jump_at = if end_norm <= threshold && !self.jumps.is_empty() {
                let (mut lo, mut hi) = (dp.t_prev(), dp.t);
                let tol = self.opts.time_rtol * (hi - lo);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    dp.dense(mid, &mut buf);
                    if norm_sq(&buf) > threshold {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(hi)
            } else {
                None
            };
            let horizon = jump_at.unwrap_or(dp.t);
            while next_sample < samples.len() && samples[next_sample] <= horizon {
                if samples[next_sample] == dp.t {
                    record(&dp.y, &mut observed);
                } else {
                    dp.dense(samples[next_sample], &mut buf);
                    record(&buf, &mut observed);
                }
                next_sample += 1;
            }
            if let Some(tj) = jump_at {
                dp.dense(tj, &mut buf);
                let psi = DVector::from_column_slice(&buf);
                let weights: Vec<f64> = self.jumps.iter().map(|(_, c)| (c * &psi).norm_squared()).collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Integrator { time: tj, reason: "norm decayed with no jump channel populated".into() });
                }
                let mut pick = rng.random::<f64>() * total;
                let mut chosen = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if pick < *w {
                        chosen = i;
                        break;
                    }
                    pick -= w;
                }
                let (channel, op) = &self.jumps[chosen];
                let mut after = op * &psi;
                let nrm = after.norm();
                after /= C64::new(nrm, 0.0);
                events.push((tj, *channel));
                dp.restart(tj, after.as_slice());
                threshold = rng.random();
            }
        }
        while next_sample < samples.len() {
            record(&dp.y, &mut observed);
            next_sample += 1;
        }
        let mut fin = DVector::from_column_slice(&dp.y);
        let nrm = fin.norm();
        fin /= C64::new(nrm, 0.0);
        Ok((JumpRecord { events, final_state: QuantumState::Ket(fin) }, observed))
    }
}

fn nonzeros(m: &DMatrix<C64>) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// Single quantum-jump trajectory over `t_window`; bit-identical for a fixed seed.
pub fn mc_trajectory(
    psi0: &QuantumState,
    h: &DrivenHamiltonian,
    c_ops: &CollapseSet,
    t_window: (f64, f64),
    seed: u64,
) -> Result<JumpRecord> {
    McSolver::new(h, c_ops, TrajectoryOptions::default())?.run(psi0, t_window.0, t_window.1, seed)
}
