use super::{steady_state, CollapseSet, QuantumState};
use crate::hilbert::{jc_hamiltonian, SystemParams};
use crate::{Error, Result};

fn steady(params: &SystemParams) -> Result<QuantumState> {
    let h = jc_hamiltonian(params)?;
    let c = CollapseSet::cavity_and_emitter(params)?;
    steady_state(&h, &c)
}

fn steady_photons(params: &SystemParams) -> Result<f64> {
    let n = params.space()?.number();
    Ok(steady(params)?.expect(&n))
}

/// Drive amplitude for which the steady-state cavity population at probe
/// detuning `at_detuning` (Δω_p, rad/s) equals `target_n`.
///
/// Bisection on the weak-drive branch, where `⟨a†a⟩` grows monotonically with
/// the drive. Fails if the population stops growing before the target is hit.
pub fn calibrate_drive(params: &SystemParams, target_n: f64, at_detuning: f64) -> Result<f64> {
    params.validate()?;
    if !(target_n > 0.0) {
        return Err(Error::InvalidParameter(format!("target photon number {target_n} must be > 0")));
    }
    let bound = params.n_max as f64 / 3.0;
    if target_n >= bound {
        return Err(Error::InvalidParameter(format!(
            "target {target_n} too close to the {} photon cutoff",
            params.n_max
        )));
    }
    let base = params.with_probe_detuning(at_detuning);
    let n_at = |e: f64| steady_photons(&base.with_drive(e));

    // Empty-cavity estimate E = sqrt(n (Δ² + κ²)) as a starting bracket.
    let mut hi = (target_n * (at_detuning.powi(2) + base.kappa.powi(2))).sqrt();
    let mut lo = 0.0;
    let mut n_hi = n_at(hi)?;
    let mut grown = 0;
    while n_hi < target_n {
        if grown > 60 {
            return Err(Error::Unreachable { target: target_n, reason: "no bracket found".into() });
        }
        let next = 2.0 * hi;
        let n_next = n_at(next)?;
        if n_next <= n_hi {
            return Err(Error::Unreachable {
                target: target_n,
                reason: format!("population saturates at {n_hi:.4}"),
            });
        }
        lo = hi;
        hi = next;
        n_hi = n_next;
        grown += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let n_mid = n_at(mid)?;
        if (n_mid - target_n).abs() <= 1e-8 * target_n {
            return Ok(mid);
        }
        if n_mid < target_n {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Steady-state emitter excitation `⟨σ†σ⟩` as a fraction of its saturated
/// value ½. Diagnostic only.
pub fn saturation_fraction(params: &SystemParams) -> Result<f64> {
    let e = params.space()?.excitation();
    Ok(steady(params)?.expect(&e) / 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ghz_to_rad;

    #[test]
    fn empty_cavity_inversion() {
        // n_max = 12 keeps the coherent-state truncation error below 1e-9
        let p = SystemParams { g: 0.0, gamma: 0.0, n_max: 12, ..Default::default() };
        let e = calibrate_drive(&p, 0.4, 0.0).unwrap();
        assert!((e / (p.kappa * 0.4f64.sqrt()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_targets() {
        let p = SystemParams::default();
        assert!(calibrate_drive(&p, 0.0, 0.0).is_err());
        assert!(calibrate_drive(&p, -1.0, 0.0).is_err());
        assert!(calibrate_drive(&p, 2.5, 0.0).is_err());
    }

    #[test]
    fn polariton_round_trip() {
        let p = SystemParams::default();
        let e = calibrate_drive(&p, 0.4, p.g).unwrap();
        let n = steady_photons(&p.with_probe_detuning(p.g).with_drive(e)).unwrap();
        assert!((n - 0.4).abs() < 1e-4 * 0.4);
        let sat = saturation_fraction(&p.with_probe_detuning(p.g).with_drive(e)).unwrap();
        assert!(sat > 0.0 && sat < 1.0);
        assert!(e > 0.0 && e < ghz_to_rad(100.0));
    }
}
