//! Truncated emitter ⊗ cavity Hilbert space and the driven Jaynes-Cummings
//! Hamiltonian.
//!
//! Basis ordering: the emitter index varies slowest, so the basis vector
//! `|e, n⟩` (e = 0 ground, e = 1 excited; n = photon number) sits at index
//! `e * (n_max + 1) + n`.
//!
//! Hamiltonians are written in the frame rotating at the probe frequency,
//! so every detuning is measured relative to the probe.

use nalgebra::DMatrix;

use crate::units::ghz_to_rad;
use crate::{Error, Result, C64};

/// Physical parameters of the driven, damped emitter-cavity system.
///
/// All rates are angular frequencies in rad/s. `kappa` is the cavity *field*
/// decay rate, so the intracavity photon number decays at `2 * kappa`.
/// `gamma` is the emitter energy decay rate into free space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Cavity detuning from the probe, ω₀ − ω_p.
    pub delta_c: f64,
    /// Emitter detuning from the probe, ω_a − ω_p.
    pub delta_a: f64,
    /// Coherent drive amplitude coupling to the cavity field.
    pub drive_amp: f64,
    pub n_max: usize,
}

impl Default for SystemParams {
    /// Measured device: g/2π = κ/2π = 16 GHz, γ/2π = 0.1 GHz, probe on the
    /// bare cavity, no drive, six-photon cutoff.
    fn default() -> Self {
        Self {
            g: ghz_to_rad(16.0),
            kappa: ghz_to_rad(16.0),
            gamma: ghz_to_rad(0.1),
            delta_c: 0.0,
            delta_a: 0.0,
            drive_amp: 0.0,
            n_max: 6,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.g, self.kappa, self.gamma, self.delta_c, self.delta_a, self.drive_amp]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite rate".into()));
        }
        // g = 0 is the decoupled (dark / empty-cavity) limit and stays legal.
        if self.g < 0.0 {
            return Err(Error::InvalidParameter(format!("g = {} must be >= 0", self.g)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!("kappa = {} must be > 0", self.kappa)));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!("gamma = {} must be >= 0", self.gamma)));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Places emitter and cavity together at ω₀ and the probe at ω₀ + `probe_detuning`
    /// (that is, Δω_p = ω_p − ω₀).
    pub fn with_probe_detuning(mut self, probe_detuning: f64) -> Self {
        self.delta_c = -probe_detuning;
        self.delta_a = -probe_detuning;
        self
    }

    pub fn with_drive(mut self, drive_amp: f64) -> Self {
        self.drive_amp = drive_amp;
        self
    }

    pub fn with_coupling(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    /// Probe detuning Δω_p = ω_p − ω₀ implied by the cavity detuning.
    pub fn probe_detuning(&self) -> f64 {
        -self.delta_c
    }

    /// True when g exceeds half of both κ and γ. Reported, never enforced.
    pub fn is_strongly_coupled(&self) -> bool {
        self.g > 0.5 * self.kappa && self.g > 0.5 * self.gamma
    }

    pub fn space(&self) -> Result<TruncatedSpace> {
        build_space(self.n_max)
    }
}

/// Finite emitter ⊗ Fock basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncatedSpace {
    n_max: usize,
}

pub fn build_space(n_max: usize) -> Result<TruncatedSpace> {
    if n_max == 0 {
        return Err(Error::InvalidParameter(
            "n_max = 0 cannot represent a single excitation".into(),
        ));
    }
    Ok(TruncatedSpace { n_max })
}

impl TruncatedSpace {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    pub fn index(&self, excited: bool, n: usize) -> usize {
        debug_assert!(n <= self.n_max);
        usize::from(excited) * (self.n_max + 1) + n
    }

    /// Inverse of [`TruncatedSpace::index`]: `(excited, photon number)`.
    pub fn label(&self, index: usize) -> (bool, usize) {
        debug_assert!(index < self.dim());
        (index > self.n_max, index % (self.n_max + 1))
    }

    fn operator_from(&self, f: impl Fn(usize, usize) -> f64) -> QuantumOperator {
        let d = self.dim();
        QuantumOperator(DMatrix::from_fn(d, d, |r, c| C64::new(f(r, c), 0.0)))
    }

    /// Cavity annihilation operator `a`.
    pub fn destroy(&self) -> QuantumOperator {
        self.operator_from(|r, c| {
            let (er, nr) = self.label(r);
            let (ec, nc) = self.label(c);
            if er == ec && nc >= 1 && nr == nc - 1 {
                (nc as f64).sqrt()
            } else {
                0.0
            }
        })
    }

    /// Emitter lowering operator `σ = |g⟩⟨e|`.
    pub fn sigma_minus(&self) -> QuantumOperator {
        self.operator_from(|r, c| {
            let (er, nr) = self.label(r);
            let (ec, nc) = self.label(c);
            if !er && ec && nr == nc {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Cavity photon number `a†a`.
    pub fn number(&self) -> QuantumOperator {
        self.operator_from(|r, c| if r == c { self.label(r).1 as f64 } else { 0.0 })
    }

    /// Emitter excitation `σ†σ`.
    pub fn excitation(&self) -> QuantumOperator {
        self.operator_from(|r, c| if r == c && self.label(r).0 { 1.0 } else { 0.0 })
    }

    pub fn identity(&self) -> QuantumOperator {
        QuantumOperator(DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn zero(&self) -> QuantumOperator {
        QuantumOperator(DMatrix::zeros(self.dim(), self.dim()))
    }
}

/// Dense complex operator on a [`TruncatedSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumOperator(pub DMatrix<C64>);

impl QuantumOperator {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn dagger(&self) -> QuantumOperator {
        QuantumOperator(self.0.adjoint())
    }

    pub fn scaled(&self, s: f64) -> QuantumOperator {
        QuantumOperator(self.0.map(|x| x * s))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, x| m.max(x.norm()))
    }

    /// Largest entry of `|A − A†|` relative to the largest entry of `A`.
    pub fn hermiticity_error(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let diff = &self.0 - self.0.adjoint();
        diff.iter().fold(0.0f64, |m, x| m.max(x.norm())) / scale
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.0.is_square() && self.hermiticity_error() <= rel_tol
    }

    /// Real eigenvalues in ascending order. Only meaningful for Hermitian operators.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl std::ops::Add for &QuantumOperator {
    type Output = QuantumOperator;
    fn add(self, rhs: &QuantumOperator) -> QuantumOperator {
        QuantumOperator(&self.0 + &rhs.0)
    }
}

impl std::ops::Mul for &QuantumOperator {
    type Output = QuantumOperator;
    fn mul(self, rhs: &QuantumOperator) -> QuantumOperator {
        QuantumOperator(&self.0 * &rhs.0)
    }
}

/// Drive-free part of the Hamiltonian:
/// `delta_c a†a + delta_a σ†σ + g (a†σ + aσ†)`.
pub fn undriven_hamiltonian(params: &SystemParams) -> Result<QuantumOperator> {
    params.validate()?;
    let space = params.space()?;
    let a = space.destroy();
    let sm = space.sigma_minus();
    let coupling = &(&a.dagger() * &sm) + &(&a * &sm.dagger());
    let h = space.number().scaled(params.delta_c).0
        + space.excitation().scaled(params.delta_a).0
        + coupling.scaled(params.g).0;
    Ok(QuantumOperator(h))
}

/// Field quadrature `a + a†` to which the probe couples.
pub fn drive_operator(space: &TruncatedSpace) -> QuantumOperator {
    let a = space.destroy();
    &a + &a.dagger()
}

/// Driven Jaynes-Cummings Hamiltonian in the probe frame:
/// `H = delta_c a†a + delta_a σ†σ + g (a†σ + aσ†) + E (a + a†)`.
pub fn jc_hamiltonian(params: &SystemParams) -> Result<QuantumOperator> {
    let h0 = undriven_hamiltonian(params)?;
    let drive = drive_operator(&params.space()?).scaled(params.drive_amp);
    Ok(&h0 + &drive)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Upper,
    Lower,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Upper => 1.0,
            Branch::Lower => -1.0,
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Upper => "+",
            Branch::Lower => "-",
        })
    }
}

/// One dressed eigenstate `|n, ±⟩` of the undriven ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldLevel {
    pub n: usize,
    pub branch: Branch,
    /// Energy in rad/s, in the probe frame.
    pub energy: f64,
}

fn require_resonant(params: &SystemParams) -> Result<()> {
    let scale = params.g.max(params.kappa).max(1.0);
    if (params.delta_a - params.delta_c).abs() > 1e-12 * scale {
        return Err(Error::InvalidParameter(
            "dressed ladder is evaluated at zero emitter-cavity detuning".into(),
        ));
    }
    Ok(())
}

fn level(params: &SystemParams, n: usize, branch: Branch) -> f64 {
    n as f64 * params.delta_c + branch.sign() * params.g * (n as f64).sqrt()
}

/// Analytic energies of the manifold `n`: `n ω₀ ± g √n` (ω₀ → delta_c in the probe frame).
pub fn dressed_energies(params: &SystemParams, n: usize) -> Result<(ManifoldLevel, ManifoldLevel)> {
    params.validate()?;
    if n < 1 || n > params.n_max {
        return Err(Error::OutOfRange { n, max: params.n_max });
    }
    require_resonant(params)?;
    Ok((
        ManifoldLevel { n, branch: Branch::Upper, energy: level(params, n, Branch::Upper) },
        ManifoldLevel { n, branch: Branch::Lower, energy: level(params, n, Branch::Lower) },
    ))
}

/// Same-branch transition frequencies `|n,±⟩ → |n+1,±⟩`.
///
/// For `n_from = 0` the initial state is the unique ground state and the two
/// entries are the first-manifold polariton frequencies `ω₀ ± g`.
pub fn transition_frequencies(params: &SystemParams, n_from: usize) -> Result<Vec<(Branch, f64)>> {
    params.validate()?;
    if n_from >= params.n_max {
        return Err(Error::OutOfRange { n: n_from, max: params.n_max - 1 });
    }
    require_resonant(params)?;
    Ok([Branch::Upper, Branch::Lower]
        .into_iter()
        .map(|b| {
            let lower = if n_from == 0 { 0.0 } else { level(params, n_from, b) };
            (b, level(params, n_from + 1, b) - lower)
        })
        .collect())
}
