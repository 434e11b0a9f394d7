//! Run configuration in TOML with human units (GHz, ps, ns).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blockade_core::blinking::{BackgroundModel, TelegraphParams};
use blockade_core::correlations::detuning_unit;
use blockade_core::dynamics::{calibrate_drive, PulseShape};
use blockade_core::hilbert::SystemParams;
use blockade_core::units::{ghz_to_rad, NANOSECOND, PICOSECOND};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub system: SystemConfig,
    pub pulse: PulseConfig,
    pub blinking: BlinkingConfig,
    pub background: BackgroundConfig,
    pub sweep: SweepConfig,
    pub detection: DetectionConfig,
}

/// Rates as ordinary frequencies in GHz (rate / 2π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub g_ghz: f64,
    pub kappa_ghz: f64,
    pub gamma_ghz: f64,
    pub n_max: usize,
    /// Steady-state ⟨a†a⟩ that fixes the drive amplitude.
    pub target_photons: f64,
    /// Probe detuning, in units of g, at which the drive is calibrated.
    pub calibration_detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub fwhm_ps: f64,
    pub period_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkingConfig {
    pub enabled: bool,
    pub bright_fraction: f64,
    pub switch_time_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub enabled: bool,
    pub signal_to_noise: f64,
    /// Probe detuning, in units of g, where the SNR is measured.
    pub calibration_detuning: f64,
}

/// Detuning grid in units of g, the single detuning used by `g2tau` and
/// `hbt`, and the delay grid of `g2tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub detuning: f64,
    pub tau_max_ps: f64,
    pub tau_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub efficiency: f64,
    pub jitter_ps: f64,
    pub pulses: u64,
    pub library_size: usize,
    pub bin_ps: f64,
    /// Largest peak index entering the envelope fit.
    pub m_max: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: PathBuf::from("out"),
            workers: 0,
            system: SystemConfig::default(),
            pulse: PulseConfig::default(),
            blinking: BlinkingConfig::default(),
            background: BackgroundConfig::default(),
            sweep: SweepConfig::default(),
            detection: DetectionConfig::default(),
        }
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { g_ghz: 16.0, kappa_ghz: 16.0, gamma_ghz: 0.1, n_max: 6, target_photons: 0.4, calibration_detuning: 1.0 }
    }
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { fwhm_ps: 40.0, period_ns: 12.5 }
    }
}

impl Default for BlinkingConfig {
    fn default() -> Self {
        Self { enabled: true, bright_fraction: 0.8, switch_time_ns: 200.0 }
    }
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self { enabled: true, signal_to_noise: 6.0, calibration_detuning: 1.0 }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { start: -3.0, stop: 3.0, points: 121, detuning: 0.0, tau_max_ps: 50.0, tau_points: 201 }
    }
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { efficiency: 0.05, jitter_ps: 300.0, pulses: 10_000_000, library_size: 200_000, bin_ps: 100.0, m_max: 40 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, in hex. The output directory and
    /// worker count do not change results and are left out.
    pub fn hash(&self) -> String {
        let canonical = Self { output: PathBuf::new(), workers: 0, ..self.clone() };
        Sha256::digest(canonical.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let bad = |msg: &str| Err(UsageError(msg.to_string()).into());
        if !(s.g_ghz >= 0.0 && s.kappa_ghz > 0.0 && s.gamma_ghz >= 0.0) {
            return bad("need g ≥ 0, κ > 0 and γ ≥ 0");
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 || self.detection.pulses > i64::MAX as u64 {
            return bad("seed and pulses must not exceed 2^63 - 1");
        }
        if s.n_max == 0 {
            return bad("n_max must be ≥ 1");
        }
        if !(s.target_photons > 0.0) {
            return bad("target_photons must be > 0");
        }
        if !(self.pulse.fwhm_ps > 0.0 && self.pulse.period_ns > 0.0) {
            return bad("pulse width and period must be > 0");
        }
        if self.blinking.enabled && !(self.blinking.bright_fraction > 0.0 && self.blinking.bright_fraction <= 1.0) {
            return bad("bright_fraction must lie in (0, 1]");
        }
        if self.blinking.enabled && !(self.blinking.switch_time_ns > 0.0) {
            return bad("switch_time_ns must be > 0");
        }
        if self.background.enabled && !(self.background.signal_to_noise > 0.0) {
            return bad("signal_to_noise must be > 0");
        }
        let w = &self.sweep;
        if w.points == 0 || (w.points > 1 && !(w.stop > w.start)) {
            return bad("sweep needs points ≥ 1 and stop > start");
        }
        if w.tau_points < 2 || !(w.tau_max_ps > 0.0) {
            return bad("tau grid needs tau_points ≥ 2 and tau_max_ps > 0");
        }
        let d = &self.detection;
        if !(d.efficiency > 0.0 && d.efficiency <= 1.0) {
            return bad("efficiency must lie in (0, 1]");
        }
        if !(d.jitter_ps >= 0.0 && d.bin_ps > 0.0) || d.pulses == 0 || d.library_size == 0 || d.m_max < 4 {
            return bad("detection needs jitter ≥ 0, bin > 0, pulses ≥ 1, library ≥ 1 and m_max ≥ 4");
        }
        Ok(())
    }

    /// Undriven system in rad/s.
    pub fn system_params(&self) -> SystemParams {
        let s = &self.system;
        SystemParams {
            g: ghz_to_rad(s.g_ghz),
            kappa: ghz_to_rad(s.kappa_ghz),
            gamma: ghz_to_rad(s.gamma_ghz),
            n_max: s.n_max,
            ..SystemParams::default()
        }
    }

    /// Rate dividing every reported detuning.
    pub fn unit(&self) -> f64 {
        detuning_unit(&self.system_params())
    }

    /// System with the calibrated drive amplitude.
    pub fn driven_params(&self) -> Result<SystemParams> {
        let p = self.system_params();
        let e = calibrate_drive(&p, self.system.target_photons, self.system.calibration_detuning * self.unit())
            .context("drive calibration")?;
        Ok(p.with_drive(e))
    }

    /// Gaussian probe centred at t = 0 with the calibrated peak amplitude.
    pub fn pulse(&self, driven: &SystemParams) -> Result<PulseShape> {
        Ok(PulseShape::new(self.pulse.fwhm_ps * PICOSECOND, 0.0, driven.drive_amp)?)
    }

    pub fn period(&self) -> f64 {
        self.pulse.period_ns * NANOSECOND
    }

    pub fn telegraph(&self) -> Result<TelegraphParams> {
        if self.blinking.enabled {
            Ok(TelegraphParams::new(self.blinking.switch_time_ns * NANOSECOND, self.blinking.bright_fraction)?)
        } else {
            Ok(TelegraphParams::always_bright())
        }
    }

    pub fn background_model(&self) -> Result<Option<BackgroundModel>> {
        if self.background.enabled {
            Ok(Some(BackgroundModel::new(self.background.signal_to_noise)?))
        } else {
            Ok(None)
        }
    }

    /// Detunings Δω_p / g of the sweep.
    pub fn detuning_grid(&self) -> Vec<f64> {
        let w = &self.sweep;
        if w.points == 1 {
            return vec![w.start];
        }
        let step = (w.stop - w.start) / (w.points - 1) as f64;
        (0..w.points).map(|i| w.start + i as f64 * step).collect()
    }

    /// Delays in seconds, starting at zero.
    pub fn tau_grid(&self) -> Vec<f64> {
        let w = &self.sweep;
        let step = w.tau_max_ps * PICOSECOND / (w.tau_points - 1) as f64;
        (0..w.tau_points).map(|i| i as f64 * step).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[system]\ng_ghz = 8.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.system.g_ghz, 8.0);
        assert_eq!(cfg.system.kappa_ghz, 16.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[system]\ng = 8.0\n").is_err());
    }

    #[test]
    fn ghz_conversion_is_exact() {
        let p = RunConfig::default().system_params();
        assert_eq!(p.g, 16.0 * (2.0 * std::f64::consts::PI * 1e9));
        assert_eq!(p.gamma, 0.1 * (2.0 * std::f64::consts::PI * 1e9));
    }

    #[test]
    fn grid_hits_its_endpoints() {
        let g = RunConfig::default().detuning_grid();
        assert_eq!(g.len(), 121);
        assert_eq!(g[0], -3.0);
        assert!((g[120] - 3.0).abs() < 1e-12);
        assert!((g[90] - 1.5).abs() < 1e-12);
    }
}
