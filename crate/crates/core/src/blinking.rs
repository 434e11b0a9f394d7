//! Classical intermittency of the emitter and laser background.
//!
//! The emitter switches between a bright state (coupled with strength `g`) and
//! a dark state (`g = 0`) on a time scale of hundreds of nanoseconds, long
//! compared with a single pulse. Each pulse therefore sees one of the two
//! states, and consecutive pulses are correlated through a two-state Markov
//! chain. Leaked laser light adds an always-present coherent component.

use std::io::{BufRead, BufWriter, Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::correlations::{pulse_grid, pulsed_statistics};
use crate::dynamics::{CollapseSet, DrivenHamiltonian, McSolver, PulseShape, QuantumState, TrajectoryOptions};
use crate::hilbert::SystemParams;
use crate::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// Relative contributions of the bright-emitter, background and dark-emitter
/// sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureWeights {
    p_bright: f64,
    p_background: f64,
    p_dark: f64,
}

impl MixtureWeights {
    pub fn new(p_bright: f64, p_background: f64, p_dark: f64) -> Result<Self> {
        for (name, p) in [("bright", p_bright), ("background", p_background), ("dark", p_dark)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} weight {p} outside [0, 1]")));
            }
        }
        let sum = p_bright + p_background + p_dark;
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { p_bright, p_background, p_dark })
    }

    pub fn p_bright(&self) -> f64 {
        self.p_bright
    }

    pub fn p_background(&self) -> f64 {
        self.p_background
    }

    pub fn p_dark(&self) -> f64 {
        self.p_dark
    }
}

/// Per-pulse photon-number moments of one source: mean `⟨N⟩` and unnormalized
/// zero-delay correlation `⟨N(N−1)⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub intensity: f64,
    pub pairs: f64,
}

impl Component {
    pub fn new(intensity: f64, pairs: f64) -> Result<Self> {
        if !(intensity >= 0.0) || !(pairs >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "component moments must be >= 0 (intensity {intensity}, pairs {pairs})"
            )));
        }
        Ok(Self { intensity, pairs })
    }

    /// Poissonian light of the given mean.
    pub fn coherent(intensity: f64) -> Self {
        Self { intensity, pairs: intensity * intensity }
    }

    pub fn from_g2(intensity: f64, g2: f64) -> Result<Self> {
        Self::new(intensity, g2 * intensity * intensity)
    }

    /// Normalized `⟨N(N−1)⟩ / ⟨N⟩²`.
    pub fn g2(&self) -> Result<f64> {
        if !(self.intensity > 0.0) {
            return Err(Error::UndefinedRatio("component carries no light".into()));
        }
        Ok(self.pairs / (self.intensity * self.intensity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponents {
    pub bright: Component,
    pub background: Component,
    pub dark: Component,
}

/// Superposition of statistically independent sources, source `i` passed with
/// transmission `pᵢ`. Intensities add as `Σ pᵢIᵢ`; the pair moment is
/// `Σ pᵢ² G²ᵢ + Σ_{i≠j} pᵢIᵢ pⱼIⱼ`, the cross terms being those of
/// uncorrelated streams.
pub fn mixture_g2(components: &MixtureComponents, weights: &MixtureWeights) -> Result<Component> {
    let parts = [
        (components.bright, weights.p_bright),
        (components.background, weights.p_background),
        (components.dark, weights.p_dark),
    ];
    for (c, _) in &parts {
        Component::new(c.intensity, c.pairs)?;
    }
    let w: Vec<f64> = parts.iter().map(|(c, p)| p * c.intensity).collect();
    let intensity: f64 = w.iter().sum();
    if !(intensity > 0.0) {
        return Err(Error::UndefinedRatio("all weighted intensities are zero".into()));
    }
    let own: f64 = parts.iter().map(|(c, p)| p * p * c.pairs).sum();
    let cross = intensity * intensity - w.iter().map(|x| x * x).sum::<f64>();
    Ok(Component { intensity, pairs: own + cross })
}

/// Two-state telegraph process for the emitter's bright/dark switching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelegraphParams {
    pub mean_switch_time: f64,
    pub bright_fraction: f64,
}

impl TelegraphParams {
    pub fn new(mean_switch_time: f64, bright_fraction: f64) -> Result<Self> {
        let tp = Self { mean_switch_time, bright_fraction };
        tp.validate()?;
        Ok(tp)
    }

    /// An emitter that never leaves the bright state.
    pub fn always_bright() -> Self {
        Self { mean_switch_time: 1.0, bright_fraction: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_switch_time > 0.0) {
            return Err(Error::InvalidParameter(format!("switch time {} must be > 0", self.mean_switch_time)));
        }
        if !(self.bright_fraction > 0.0 && self.bright_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!("bright fraction {} outside (0, 1]", self.bright_fraction)));
        }
        Ok(())
    }

    /// Correlation factor `exp(−lag/T)` of the bright indicator.
    pub fn decay(&self, lag: f64) -> f64 {
        (-lag / self.mean_switch_time).exp()
    }

    /// Per-pulse transition probabilities `(bright→dark, dark→bright)` at
    /// repetition period `period`.
    pub fn transition_probabilities(&self, period: f64) -> (f64, f64) {
        let f = self.bright_fraction;
        let stay = self.decay(period);
        ((1.0 - f) * (1.0 - stay), f * (1.0 - stay))
    }
}

/// Normalized bright-indicator autocorrelation
/// `⟨b(0) b(lag)⟩ / ⟨b⟩² = 1 + ((1 − f)/f) exp(−lag/T)`.
pub fn telegraph_envelope(tp: &TelegraphParams, lag: f64) -> f64 {
    let f = tp.bright_fraction;
    1.0 + (1.0 - f) / f * tp.decay(lag.max(0.0))
}

/// Laser leakage relative to the emitter signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundModel {
    pub signal_to_noise: f64,
}

impl BackgroundModel {
    pub fn new(signal_to_noise: f64) -> Result<Self> {
        if !(signal_to_noise > 0.0) {
            return Err(Error::InvalidParameter(format!("signal-to-noise {signal_to_noise} must be > 0")));
        }
        Ok(Self { signal_to_noise })
    }

    /// Background photons per pulse for a given mean signal per pulse.
    pub fn photons_for(&self, signal: f64) -> f64 {
        signal / self.signal_to_noise
    }
}

/// Everything needed to predict the pulsed coincidence peaks: bright and dark
/// single-pulse moments, background photons per pulse and the switching law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakModel {
    pub bright: Component,
    pub dark: Component,
    pub background: f64,
    pub telegraph: TelegraphParams,
}

impl PeakModel {
    pub fn new(bright: Component, dark: Component, background: f64, telegraph: TelegraphParams) -> Result<Self> {
        Component::new(bright.intensity, bright.pairs)?;
        Component::new(dark.intensity, dark.pairs)?;
        if !(background >= 0.0) {
            return Err(Error::InvalidParameter(format!("background {background} must be >= 0")));
        }
        telegraph.validate()?;
        Ok(Self { bright, dark, background, telegraph })
    }

    /// Bright and dark moments from the pulsed master equation at probe
    /// detuning `detuning` (rad/s); the dark state is the same system with
    /// `g = 0`.
    pub fn from_pulsed(
        params: &SystemParams,
        pulse: &PulseShape,
        detuning: f64,
        telegraph: TelegraphParams,
        background: f64,
    ) -> Result<Self> {
        let bright = pulsed_component(params, pulse, detuning)?;
        let dark = pulsed_component(&params.with_coupling(0.0), pulse, detuning)?;
        Self::new(bright, dark, background, telegraph)
    }

    /// Mean emitter-channel photons per pulse, averaged over the switching.
    pub fn mean_signal(&self) -> f64 {
        let f = self.telegraph.bright_fraction;
        f * self.bright.intensity + (1.0 - f) * self.dark.intensity
    }

    pub fn mean_total(&self) -> f64 {
        self.mean_signal() + self.background
    }

    /// Fraction of detected photons from each source.
    pub fn weights(&self) -> Result<MixtureWeights> {
        let f = self.telegraph.bright_fraction;
        let total = self.mean_total();
        if !(total > 0.0) {
            return Err(Error::UndefinedRatio("no light in any component".into()));
        }
        let pb = f * self.bright.intensity / total;
        let pbg = self.background / total;
        MixtureWeights::new(pb, pbg, (1.0 - pb - pbg).max(0.0))
    }

    fn switching_variance(&self) -> f64 {
        let f = self.telegraph.bright_fraction;
        f * (1.0 - f) * (self.bright.intensity - self.dark.intensity).powi(2)
    }

    /// `⟨N_k (N_k − 1)⟩` including background cross terms.
    pub fn zero_delay(&self) -> f64 {
        let f = self.telegraph.bright_fraction;
        let dot = f * self.bright.pairs + (1.0 - f) * self.dark.pairs;
        let s = self.mean_signal();
        dot + 2.0 * s * self.background + self.background.powi(2)
    }

    /// `⟨N_k N_{k+m}⟩` for `m ≥ 1`.
    pub fn at_lag(&self, lag: f64) -> f64 {
        self.plateau() + self.switching_variance() * self.telegraph.decay(lag)
    }

    /// `m → ∞` limit `⟨N⟩²`.
    pub fn plateau(&self) -> f64 {
        self.mean_total().powi(2)
    }

    /// Extrapolation of the `m ≥ 1` envelope back to zero lag.
    pub fn envelope_origin(&self) -> f64 {
        self.plateau() + self.switching_variance()
    }

    /// Zero-delay peak over the long-lag plateau.
    pub fn g2_plateau(&self) -> Result<f64> {
        ratio(self.zero_delay(), self.plateau())
    }

    /// Zero-delay peak over the envelope extrapolated from the side peaks.
    pub fn g2_nearest(&self) -> Result<f64> {
        ratio(self.zero_delay(), self.envelope_origin())
    }

    /// Expected cross-channel coincidences in the peak at `m·period` for
    /// `n_pulses` pulses, detection efficiency `efficiency` and a 50/50 split.
    pub fn expected_counts(&self, m: i64, period: f64, n_pulses: u64, efficiency: f64) -> f64 {
        let m_abs = m.unsigned_abs();
        if m_abs >= n_pulses {
            return 0.0;
        }
        let moment = if m == 0 { self.zero_delay() } else { self.at_lag(m_abs as f64 * period) };
        (n_pulses - m_abs) as f64 * efficiency * efficiency / 4.0 * moment
    }
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) {
        return Err(Error::UndefinedRatio("zero normalization".into()));
    }
    Ok(num / den)
}

fn pulsed_component(params: &SystemParams, pulse: &PulseShape, detuning: f64) -> Result<Component> {
    if pulse.peak_amp == 0.0 {
        return Ok(Component::coherent(0.0));
    }
    let s = pulsed_statistics(params, pulse, detuning)?;
    Component::new(s.mean_photons, s.pair_counts.max(0.0))
}

/// Expected coincidence peak heights, in units of photon pairs per pulse, for
/// `m = 0..=m_max` at repetition period `period`.
pub fn peak_heights(model: &PeakModel, m_max: usize, period: f64) -> Result<Vec<f64>> {
    if m_max < 3 {
        return Err(Error::InvalidParameter(format!("m_max = {m_max} must be >= 3")));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidParameter(format!("period {period} must be > 0")));
    }
    model.weights()?;
    Ok((0..=m_max)
        .map(|m| if m == 0 { model.zero_delay() } else { model.at_lag(m as f64 * period) })
        .collect())
}

/// Samples the bright (`true`) / dark state of each pulse from the stationary
/// telegraph chain.
pub fn sample_telegraph(tp: &TelegraphParams, period: f64, n_pulses: usize, seed: u64) -> Vec<bool> {
    let mut rng = stream_rng(seed, STREAM_TELEGRAPH, 0);
    let (to_dark, to_bright) = tp.transition_probabilities(period);
    let mut bright = rng.random::<f64>() < tp.bright_fraction;
    let mut out = Vec::with_capacity(n_pulses);
    for _ in 0..n_pulses {
        out.push(bright);
        let u: f64 = rng.random();
        bright = if bright { u >= to_dark } else { u < to_bright };
    }
    out
}

const STREAM_TELEGRAPH: u64 = 1;
const STREAM_LIBRARY: u64 = 2;
const STREAM_BLOCK: u64 = 3;

fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 48) ^ index);
    rng
}

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Click {
    pub time_ps: u64,
    pub channel: u8,
}

/// Time-ordered two-channel click record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClickStream {
    pub clicks: Vec<Click>,
}

const MAGIC: &[u8; 8] = b"CLICKS01";

impl ClickStream {
    pub fn new(mut clicks: Vec<Click>) -> Result<Self> {
        if let Some(c) = clicks.iter().find(|c| c.channel > 1) {
            return Err(Error::InvalidParameter(format!("channel {} is not 0 or 1", c.channel)));
        }
        clicks.sort_unstable();
        Ok(Self { clicks })
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    /// Sorted times (ps) of one channel.
    pub fn channel(&self, channel: u8) -> Vec<u64> {
        self.clicks.iter().filter(|c| c.channel == channel).map(|c| c.time_ps).collect()
    }

    /// Binary layout: the 8 bytes `CLICKS01`, a little-endian `u64` record
    /// count, then per click one `u8` channel and a little-endian `u64` time
    /// in picoseconds.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&(self.clicks.len() as u64).to_le_bytes())?;
        for c in &self.clicks {
            w.write_all(&[c.channel])?;
            w.write_all(&c.time_ps.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a click-stream file".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != 9 * n {
            return Err(Error::Format(format!("expected {} record bytes, found {}", 9 * n, body.len())));
        }
        let clicks = body
            .chunks_exact(9)
            .map(|rec| Click { channel: rec[0], time_ps: u64::from_le_bytes(rec[1..9].try_into().unwrap()) })
            .collect();
        Self::new(clicks)
    }

    /// CSV with header `channel,time_ps`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "channel,time_ps")?;
        for c in &self.clicks {
            writeln!(w, "{},{}", c.channel, c.time_ps)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut clicks = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("channel")) {
                continue;
            }
            let bad = || Error::Format(format!("line {}: expected `channel,time_ps`", i + 1));
            let (ch, t) = line.split_once(',').ok_or_else(bad)?;
            clicks.push(Click {
                channel: ch.trim().parse().map_err(|_| bad())?,
                time_ps: t.trim().parse().map_err(|_| bad())?,
            });
        }
        Self::new(clicks)
    }
}

/// Settings for pulse-train synthesis. Times are in seconds, rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub params: SystemParams,
    pub pulse: PulseShape,
    pub detuning: f64,
    pub telegraph: TelegraphParams,
    /// Background photons per pulse before detection.
    pub background: f64,
    pub period: f64,
    /// Probability that an output photon is detected at all.
    pub efficiency: f64,
    /// FWHM of the Gaussian timing jitter.
    pub jitter_fwhm: f64,
    /// Number of distinct bright-state trajectories sampled from.
    pub library_size: usize,
    pub n_pulses: u64,
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.telegraph.validate()?;
        if self.n_pulses < 1 {
            return Err(Error::InvalidParameter("need at least one pulse".into()));
        }
        if !(self.period > 0.0) {
            return Err(Error::InvalidParameter(format!("period {} must be > 0", self.period)));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidParameter(format!("efficiency {} outside (0, 1]", self.efficiency)));
        }
        if !(self.background >= 0.0) || !(self.jitter_fwhm >= 0.0) {
            return Err(Error::InvalidParameter("background and jitter must be >= 0".into()));
        }
        if self.library_size == 0 {
            return Err(Error::InvalidParameter("trajectory library must be non-empty".into()));
        }
        Ok(())
    }
}

/// Output-photon emission times (relative to the pulse center) from
/// `count` independent quantum-jump trajectories.
pub fn trajectory_library(
    params: &SystemParams,
    pulse: &PulseShape,
    detuning: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let p = params.with_probe_detuning(detuning);
    let grid = pulse_grid(&p, pulse);
    let h = DrivenHamiltonian::pulsed(&p, *pulse)?;
    let c_ops = CollapseSet::cavity_and_emitter(&p)?;
    let output = c_ops.output().unwrap_or(0);
    let solver = McSolver::new(&h, &c_ops, TrajectoryOptions::default())?;
    let psi0 = QuantumState::vacuum(&p.space()?);
    let (t0, t1) = (grid[0], grid[grid.len() - 1]);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let traj_seed = stream_rng(seed, STREAM_LIBRARY, i as u64).next_u64();
            let rec = solver.run(&psi0, t0, t1, traj_seed)?;
            Ok(rec.channel_times(output).map(|t| t - pulse.center).collect())
        })
        .collect()
}

/// Inverse-CDF sampler over a tabulated non-negative profile.
struct ProfileSampler {
    times: Vec<f64>,
    cdf: Vec<f64>,
}

impl ProfileSampler {
    fn new(times: &[f64], weight: &[f64]) -> Option<Self> {
        let mut cdf = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..times.len() {
            acc += 0.5 * (weight[i].max(0.0) + weight[i - 1].max(0.0)) * (times[i] - times[i - 1]);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return None;
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Some(Self { times: times.to_vec(), cdf })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let x = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.times[i - 1] + x * (self.times[i] - self.times[i - 1])
    }
}

const BLOCK: u64 = 1 << 16;

/// Stochastic two-detector record of `n_pulses` pulses.
///
/// The telegraph state is drawn per pulse. Bright pulses take their output
/// photons from a library of quantum-jump trajectories; dark pulses are the
/// coherent output of the bare cavity and background is coherent light with
/// the pulse's intensity profile, so both are sampled as Poisson processes.
/// Each photon is detected with probability `efficiency`, sent to either
/// detector with equal probability and blurred by Gaussian jitter. Pulse `k`
/// is centered at `(k + 1)·period`.
pub fn synthesize_click_stream(cfg: &SynthesisConfig) -> Result<ClickStream> {
    cfg.validate()?;
    let n_pulses = usize::try_from(cfg.n_pulses)
        .map_err(|_| Error::InvalidParameter("pulse count exceeds address space".into()))?;
    let states = sample_telegraph(&cfg.telegraph, cfg.period, n_pulses, cfg.seed);
    let any_bright = states.iter().any(|&b| b);
    let any_dark = states.iter().any(|&b| !b);

    let library = if any_bright && cfg.pulse.peak_amp > 0.0 {
        trajectory_library(&cfg.params, &cfg.pulse, cfg.detuning, cfg.library_size, cfg.seed)?
    } else {
        vec![Vec::new()]
    };

    let dark_params = cfg.params.with_coupling(0.0);
    let (dark_mean, dark_sampler) = if any_dark && cfg.pulse.peak_amp > 0.0 {
        let s = pulsed_statistics(&dark_params, &cfg.pulse, cfg.detuning)?;
        let rel: Vec<f64> = s.times.iter().map(|t| t - cfg.pulse.center).collect();
        (s.mean_photons, ProfileSampler::new(&rel, &s.photons))
    } else {
        (0.0, None)
    };

    let dark_counts = poisson(cfg.efficiency * dark_mean)?;
    let bg_counts = poisson(cfg.efficiency * cfg.background)?;
    // Intensity |E(t)|² of the Gaussian pulse has standard deviation fwhm / (2√(2 ln 2)).
    let bg_times = Normal::new(0.0, cfg.pulse.fwhm / (8.0 * std::f64::consts::LN_2).sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let jitter = Normal::new(0.0, cfg.jitter_fwhm / (8.0 * std::f64::consts::LN_2).sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let n_blocks = cfg.n_pulses.div_ceil(BLOCK);
    let blocks: Vec<Vec<Click>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(cfg.seed, STREAM_BLOCK, b);
            let mut out = Vec::new();
            let first = b * BLOCK;
            let last = (first + BLOCK).min(cfg.n_pulses);
            let mut emit = |rng: &mut ChaCha8Rng, k: u64, offset: f64| {
                let t = (k + 1) as f64 * cfg.period + offset + jitter.sample(rng);
                let channel = u8::from(rng.random::<bool>());
                out.push(Click { time_ps: (t * 1e12).round().max(0.0) as u64, channel });
            };
            for k in first..last {
                if states[k as usize] {
                    let photons = &library[rng.random_range(0..library.len())];
                    for &t in photons {
                        if rng.random::<f64>() < cfg.efficiency {
                            emit(&mut rng, k, t);
                        }
                    }
                } else if let (Some(d), Some(sampler)) = (&dark_counts, &dark_sampler) {
                    let n = d.sample(&mut rng) as u64;
                    for _ in 0..n {
                        let t = sampler.sample(&mut rng);
                        emit(&mut rng, k, t);
                    }
                }
                if let Some(bg) = &bg_counts {
                    let n = bg.sample(&mut rng) as u64;
                    for _ in 0..n {
                        let t = bg_times.sample(&mut rng);
                        emit(&mut rng, k, t);
                    }
                }
            }
            out
        })
        .collect();
    ClickStream::new(blocks.concat())
}

fn poisson(mean: f64) -> Result<Option<Poisson<f64>>> {
    if mean > 0.0 {
        Poisson::new(mean).map(Some).map_err(|e| Error::InvalidParameter(e.to_string()))
    } else {
        Ok(None)
    }
}

/// Background photons per pulse fixed by the signal-to-noise ratio measured at
/// `calibration_detuning` (rad/s).
pub fn calibrated_background(
    params: &SystemParams,
    pulse: &PulseShape,
    telegraph: &TelegraphParams,
    bg: &BackgroundModel,
    calibration_detuning: f64,
) -> Result<f64> {
    let m = PeakModel::from_pulsed(params, pulse, calibration_detuning, *telegraph, 0.0)?;
    Ok(bg.photons_for(m.mean_signal()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_must_sum_to_one() {
        assert!(MixtureWeights::new(0.8, 0.1, 0.1).is_ok());
        assert!(MixtureWeights::new(0.8, 0.1, 0.2).is_err());
        assert!(MixtureWeights::new(1.2, -0.2, 0.0).is_err());
    }

    #[test]
    fn pure_bright_mixture_is_unchanged() {
        let c = MixtureComponents {
            bright: Component::from_g2(1.3, 0.7).unwrap(),
            background: Component::coherent(0.4),
            dark: Component::coherent(2.0),
        };
        let m = mixture_g2(&c, &MixtureWeights::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(m, c.bright);
        let m = mixture_g2(&c, &MixtureWeights::new(0.0, 1.0, 0.0).unwrap()).unwrap();
        assert_relative_eq!(m.g2().unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_needs_light() {
        let c = MixtureComponents {
            bright: Component::coherent(0.0),
            background: Component::coherent(0.0),
            dark: Component::coherent(1.0),
        };
        let w = MixtureWeights::new(0.5, 0.5, 0.0).unwrap();
        assert!(matches!(mixture_g2(&c, &w), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn envelope_values() {
        let tp = TelegraphParams::new(200e-9, 0.8).unwrap();
        assert_relative_eq!(telegraph_envelope(&tp, 0.0), 1.25, epsilon = 1e-15);
        assert_relative_eq!(telegraph_envelope(&tp, 1e-6), 1.0 + 0.25 * (-5.0f64).exp(), epsilon = 1e-15);
        let never = TelegraphParams::always_bright();
        assert_eq!(telegraph_envelope(&never, 0.0), 1.0);
    }

    #[test]
    fn peak_ratio_follows_switching_time() {
        let model = PeakModel::new(
            Component::from_g2(1.4, 1.76).unwrap(),
            Component::coherent(3.8),
            0.3,
            TelegraphParams::new(200e-9, 0.8).unwrap(),
        )
        .unwrap();
        let h = peak_heights(&model, 5, 12.5e-9).unwrap();
        let inf = model.plateau();
        assert_relative_eq!((h[1] - inf) / (h[2] - inf), (12.5f64 / 200.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn without_blinking_or_background_side_peaks_are_flat() {
        let model = PeakModel::new(
            Component::from_g2(2.0, 0.9).unwrap(),
            Component::coherent(1.0),
            0.0,
            TelegraphParams::always_bright(),
        )
        .unwrap();
        let h = peak_heights(&model, 10, 12.5e-9).unwrap();
        assert!(h[1..].iter().all(|&x| (x - h[1]).abs() < 1e-12));
        assert_relative_eq!(h[0] / h[1], 0.9, epsilon = 1e-12);
        assert_relative_eq!(model.g2_nearest().unwrap(), model.g2_plateau().unwrap());
        assert!(peak_heights(&model, 2, 12.5e-9).is_err());
    }

    #[test]
    fn click_file_round_trips() {
        let s = ClickStream::new(vec![
            Click { channel: 1, time_ps: 15_000 },
            Click { channel: 0, time_ps: 12_500 },
            Click { channel: 0, time_ps: u64::MAX },
        ])
        .unwrap();
        assert_eq!(s.clicks[0].time_ps, 12_500);
        let mut bin = Vec::new();
        s.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 16 + 27);
        assert_eq!(ClickStream::read_binary(&bin[..]).unwrap(), s);
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        assert_eq!(ClickStream::read_csv(&csv[..]).unwrap(), s);
        assert!(ClickStream::read_binary(&b"NOTCLICK"[..]).is_err());
        assert!(ClickStream::new(vec![Click { channel: 2, time_ps: 0 }]).is_err());
    }

    #[test]
    fn profile_sampler_matches_uniform() {
        let t = [0.0, 1.0, 2.0];
        let s = ProfileSampler::new(&t, &[1.0, 1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean: f64 = (0..20000).map(|_| s.sample(&mut rng)).sum::<f64>() / 20000.0;
        assert!((mean - 1.0).abs() < 0.02);
        assert!(ProfileSampler::new(&t, &[0.0; 3]).is_none());
    }
}
