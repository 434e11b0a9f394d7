//! Open-system dynamics of the driven emitter-cavity system.

mod calibrate;
mod master;
pub mod ode;
mod trajectory;

pub use calibrate::{calibrate_drive, saturation_fraction};
pub use master::{
    evolve_master, evolve_master_with, lindblad_rhs, propagate_operator, steady_state,
    steady_state_residual, MasterEquation,
};
pub use trajectory::{mc_trajectory, McSolver, TrajectoryOptions};

use nalgebra::{DMatrix, DVector};

use crate::hilbert::{drive_operator, undriven_hamiltonian, QuantumOperator, SystemParams, TruncatedSpace};
use crate::{Error, Result, C64};

/// Pure state vector or density matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Ket(DVector<C64>),
    Density(DMatrix<C64>),
}

impl QuantumState {
    /// `|g, 0⟩`.
    pub fn vacuum(space: &TruncatedSpace) -> Self {
        Self::basis(space, false, 0)
    }

    pub fn basis(space: &TruncatedSpace, excited: bool, n: usize) -> Self {
        let mut v = DVector::zeros(space.dim());
        v[space.index(excited, n)] = C64::new(1.0, 0.0);
        QuantumState::Ket(v)
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Ket(v) => v.len(),
            QuantumState::Density(m) => m.nrows(),
        }
    }

    pub fn to_density(&self) -> DMatrix<C64> {
        match self {
            QuantumState::Ket(v) => v * v.adjoint(),
            QuantumState::Density(m) => m.clone(),
        }
    }

    pub fn into_density(self) -> QuantumState {
        match self {
            QuantumState::Ket(_) => QuantumState::Density(self.to_density()),
            d => d,
        }
    }

    /// `⟨A⟩` including the imaginary part; kets are not assumed normalized.
    pub fn expect_complex(&self, op: &QuantumOperator) -> C64 {
        match self {
            QuantumState::Ket(v) => {
                let num = v.dotc(&(op.matrix() * v));
                num / v.norm_squared()
            }
            QuantumState::Density(m) => (op.matrix() * m).trace(),
        }
    }

    pub fn expect(&self, op: &QuantumOperator) -> f64 {
        self.expect_complex(op).re
    }

    pub fn trace(&self) -> f64 {
        match self {
            QuantumState::Ket(v) => v.norm_squared(),
            QuantumState::Density(m) => m.trace().re,
        }
    }

    pub fn purity(&self) -> f64 {
        match self {
            QuantumState::Ket(_) => 1.0,
            QuantumState::Density(m) => (m * m).trace().re,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            QuantumState::Ket(_) => 0.0,
            QuantumState::Density(m) => {
                let herm = (m + m.adjoint()).map(|x| x * 0.5);
                herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Checks normalization, Hermiticity and positivity to within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        match self {
            QuantumState::Ket(v) => {
                let n = v.norm();
                if (n - 1.0).abs() > tol {
                    return Err(Error::InvalidParameter(format!("ket norm {n} differs from 1")));
                }
            }
            QuantumState::Density(m) => {
                if !m.is_square() {
                    return Err(Error::InvalidParameter("density matrix is not square".into()));
                }
                let herm = (m - m.adjoint()).iter().fold(0.0f64, |a, x| a.max(x.norm()));
                if herm > tol {
                    return Err(Error::InvalidParameter(format!("density matrix not Hermitian ({herm:e})")));
                }
                let tr = m.trace().re;
                if (tr - 1.0).abs() > tol {
                    return Err(Error::InvalidParameter(format!("trace {tr} differs from 1")));
                }
                let min = self.min_eigenvalue();
                if min < -tol {
                    return Err(Error::InvalidParameter(format!("negative eigenvalue {min:e}")));
                }
            }
        }
        Ok(())
    }
}

/// Dissipators with their rates folded in. One operator is the cavity output
/// channel on which photons are counted.
#[derive(Debug, Clone)]
pub struct CollapseSet {
    ops: Vec<QuantumOperator>,
    output: Option<usize>,
}

impl CollapseSet {
    /// `output` must index into `ops` whenever `ops` is non-empty.
    pub fn new(ops: Vec<QuantumOperator>, output: Option<usize>) -> Result<Self> {
        match output {
            None if !ops.is_empty() => {
                return Err(Error::InvalidParameter("a non-empty collapse set needs an output channel".into()))
            }
            Some(i) if i >= ops.len() => {
                return Err(Error::InvalidParameter(format!("output channel {i} out of range")))
            }
            _ => {}
        }
        if let Some(first) = ops.first() {
            let d = first.dim();
            if let Some(bad) = ops.iter().find(|o| o.dim() != d) {
                return Err(Error::DimensionMismatch { expected: d, actual: bad.dim() });
            }
        }
        Ok(Self { ops, output })
    }

    pub fn empty() -> Self {
        Self { ops: Vec::new(), output: None }
    }

    /// `√(2κ) a` (output channel, index 0) and `√γ σ` (free-space loss, index 1).
    pub fn cavity_and_emitter(params: &SystemParams) -> Result<Self> {
        let space = params.space()?;
        let cavity = space.destroy().scaled((2.0 * params.kappa).sqrt());
        let emitter = space.sigma_minus().scaled(params.gamma.sqrt());
        Self::new(vec![cavity, emitter], Some(0))
    }

    pub fn ops(&self) -> &[QuantumOperator] {
        &self.ops
    }

    pub fn output(&self) -> Option<usize> {
        self.output
    }

    pub fn output_op(&self) -> Option<&QuantumOperator> {
        self.output.map(|i| &self.ops[i])
    }

    pub fn is_empty(&self) -> bool {
        self.ops.iter().all(|o| o.max_abs() == 0.0)
    }
}

/// Gaussian probe pulse. `fwhm` is the full width at half maximum of the
/// *intensity* `|E(t)|²`, so the field amplitude is
/// `peak_amp · exp(−2 ln2 (t − center)² / fwhm²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    pub fwhm: f64,
    pub center: f64,
    pub peak_amp: f64,
}

impl PulseShape {
    pub fn new(fwhm: f64, center: f64, peak_amp: f64) -> Result<Self> {
        if !(fwhm > 0.0) || !fwhm.is_finite() {
            return Err(Error::InvalidParameter(format!("pulse fwhm {fwhm} must be > 0")));
        }
        if !(peak_amp >= 0.0) {
            return Err(Error::InvalidParameter(format!("pulse amplitude {peak_amp} must be >= 0")));
        }
        Ok(Self { fwhm, center, peak_amp })
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.fwhm;
        self.peak_amp * (-2.0 * std::f64::consts::LN_2 * x * x).exp()
    }

    /// Full width at half maximum of the intensity spectrum (Hz) of the
    /// transform-limited pulse.
    pub fn spectral_fwhm_hz(&self) -> f64 {
        2.0 * std::f64::consts::LN_2 / (std::f64::consts::PI * self.fwhm)
    }
}

/// Time dependence of the drive amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Constant(f64),
    Pulse(PulseShape),
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant(e) => *e,
            Envelope::Pulse(p) => p.amplitude(t),
        }
    }
}

/// `H(t) = base + envelope(t) · drive`.
#[derive(Debug, Clone)]
pub struct DrivenHamiltonian {
    pub base: QuantumOperator,
    pub drive: QuantumOperator,
    pub envelope: Envelope,
}

impl DrivenHamiltonian {
    /// Continuous-wave drive at `params.drive_amp`.
    pub fn cw(params: &SystemParams) -> Result<Self> {
        Ok(Self {
            base: undriven_hamiltonian(params)?,
            drive: drive_operator(&params.space()?),
            envelope: Envelope::Constant(params.drive_amp),
        })
    }

    /// Pulsed drive; `params.drive_amp` is ignored.
    pub fn pulsed(params: &SystemParams, pulse: PulseShape) -> Result<Self> {
        Ok(Self {
            base: undriven_hamiltonian(params)?,
            drive: drive_operator(&params.space()?),
            envelope: Envelope::Pulse(pulse),
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn at(&self, t: f64) -> QuantumOperator {
        let e = self.envelope.value(t);
        QuantumOperator(&self.base.0 + self.drive.0.map(|x| x * e))
    }
}

impl From<QuantumOperator> for DrivenHamiltonian {
    fn from(h: QuantumOperator) -> Self {
        let d = h.dim();
        Self { base: h, drive: QuantumOperator(DMatrix::zeros(d, d)), envelope: Envelope::Constant(0.0) }
    }
}

/// Output of a quantum-jump trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    /// `(time, collapse-operator index)` in strictly increasing time order.
    pub events: Vec<(f64, usize)>,
    pub final_state: QuantumState,
}

impl JumpRecord {
    /// Times of the jumps on a given channel.
    pub fn channel_times(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().filter(move |e| e.1 == channel).map(|e| e.0)
    }
}
