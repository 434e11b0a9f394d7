//! Coincidence analysis of a two-detector click record.
//!
//! The histogram holds every cross-channel pair with `|t₁ − t₀| ≤ max_lag`,
//! binned by the directed delay `t₁ − t₀`. Peaks sit at multiples of the pulse
//! period; their areas feed an exponential envelope fit whose two limits give
//! the plateau and nearest-neighbor normalizations of the zero-delay peak.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::blinking::ClickStream;
use crate::{Error, Result};

const PS: f64 = 1e-12;

/// Integrated counts of the peak at delay `m·period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakArea {
    pub m: i64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub max_lag: f64,
    pub period: f64,
    /// Bin `i` covers `[(i − half)·bin_width, (i − half + 1)·bin_width)`.
    pub counts: Vec<u64>,
    pub peak_areas: Vec<PeakArea>,
    half: usize,
}

impl CoincidenceHistogram {
    pub fn from_counts(bin_width: f64, max_lag: f64, period: f64, counts: Vec<u64>) -> Result<Self> {
        check_geometry(bin_width, max_lag, period)?;
        let half = (max_lag / bin_width).ceil() as usize;
        if counts.len() != 2 * half {
            return Err(Error::DimensionMismatch { expected: 2 * half, actual: counts.len() });
        }
        let mut h = Self { bin_width, max_lag, period, counts, peak_areas: Vec::new(), half };
        h.peak_areas = h.integrate_peaks();
        Ok(h)
    }

    /// Lower edge (seconds) of bin `i`.
    pub fn bin_start(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Histogram of `|t₁ − t₀|` mirrored onto both signs: each bin holds its
    /// own counts plus those of the bin reflected through zero delay.
    pub fn symmetrized(&self) -> Vec<u64> {
        let n = self.counts.len();
        (0..n).map(|i| self.counts[i] + self.counts[n - 1 - i]).collect()
    }

    pub fn peak(&self, m: i64) -> Option<f64> {
        self.peak_areas.iter().find(|p| p.m == m).map(|p| p.area)
    }

    /// Counts within `±period/4` of each `m·period` that fits inside the lag
    /// window.
    fn integrate_peaks(&self) -> Vec<PeakArea> {
        let quarter = 0.25 * self.period;
        let m_max = ((self.max_lag - quarter) / self.period).floor().max(0.0) as i64;
        let mut areas: Vec<PeakArea> = (-m_max..=m_max).map(|m| PeakArea { m, area: 0.0 }).collect();
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let x = self.bin_center(i);
            let m = (x / self.period).round();
            if (x - m * self.period).abs() < quarter && m.abs() <= m_max as f64 {
                areas[(m as i64 + m_max) as usize].area += c as f64;
            }
        }
        areas
    }

    /// CSV of the histogram: lag (ns) of each bin's lower edge and its count.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lag_start_ns,counts")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:.4},{}", self.bin_start(i) * 1e9, c)?;
        }
        Ok(())
    }
}

fn check_geometry(bin_width: f64, max_lag: f64, period: f64) -> Result<()> {
    if !(bin_width > 0.0) || !(max_lag > 0.0) || !(period > 0.0) {
        return Err(Error::InvalidParameter("bin width, lag window and period must be > 0".into()));
    }
    if bin_width > 0.5 * period {
        return Err(Error::InvalidParameter("bins must be narrower than half a period".into()));
    }
    Ok(())
}

/// Full-correlation coincidence histogram of `stream`: every pair of a
/// channel-0 click at `t₀` and a channel-1 click at `t₁` with
/// `|t₁ − t₀| ≤ max_lag` adds one count at delay `t₁ − t₀`.
pub fn build_histogram(
    stream: &ClickStream,
    bin_width: f64,
    max_lag: f64,
    period: f64,
) -> Result<CoincidenceHistogram> {
    check_geometry(bin_width, max_lag, period)?;
    let start = stream.channel(0);
    let stop = stream.channel(1);
    if start.is_empty() || stop.is_empty() {
        return Err(Error::InsufficientData("a detector channel has no clicks".into()));
    }
    let half = (max_lag / bin_width).ceil() as usize;
    let n_bins = 2 * half;
    let lag_ps = (max_lag / PS).round() as i64;
    let width_ps = bin_width / PS;

    let chunk = (start.len() / (4 * rayon::current_num_threads()).max(1)).max(4096);
    let counts = start
        .par_chunks(chunk)
        .map(|block| {
            let mut counts = vec![0u64; n_bins];
            let lo_t = block[0].saturating_sub(lag_ps as u64);
            let mut j0 = stop.partition_point(|&t| t < lo_t);
            for &t0 in block {
                while j0 < stop.len() && (stop[j0] as i64) < t0 as i64 - lag_ps {
                    j0 += 1;
                }
                for &t1 in &stop[j0..] {
                    let dt = t1 as i64 - t0 as i64;
                    if dt > lag_ps {
                        break;
                    }
                    let bin = (dt as f64 / width_ps).floor() as i64 + half as i64;
                    if (0..n_bins as i64).contains(&bin) {
                        counts[bin as usize] += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    CoincidenceHistogram::from_counts(bin_width, max_lag, period, counts)
}

/// Least-squares fit of `G(m) = (G0 − Ginf)·exp(−m·period/T) + Ginf` to the
/// side peaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub g0: f64,
    pub ginf: f64,
    /// Blinking time; infinite when the peaks carry no decay.
    pub t: f64,
    pub g0_err: f64,
    pub ginf_err: f64,
    pub t_err: f64,
    /// Weighted χ² per degree of freedom.
    pub residual: f64,
    pub iterations: usize,
    /// False when the side peaks are consistent with a flat line and only
    /// `Ginf` is meaningful.
    pub t_identifiable: bool,
    pub period: f64,
}

impl EnvelopeFit {
    pub fn at(&self, m: f64) -> f64 {
        if self.t.is_finite() {
            (self.g0 - self.ginf) * (-m * self.period / self.t).exp() + self.ginf
        } else {
            self.ginf
        }
    }

    /// `key=value` report, one entry per line.
    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "G0={:.10e}", self.g0)?;
        writeln!(w, "G0_err={:.10e}", self.g0_err)?;
        writeln!(w, "Ginf={:.10e}", self.ginf)?;
        writeln!(w, "Ginf_err={:.10e}", self.ginf_err)?;
        writeln!(w, "T_s={:.10e}", self.t)?;
        writeln!(w, "T_err_s={:.10e}", self.t_err)?;
        writeln!(w, "T_identifiable={}", self.t_identifiable)?;
        writeln!(w, "chi2_per_dof={:.10e}", self.residual)?;
        writeln!(w, "iterations={}", self.iterations)?;
        Ok(())
    }
}

const MAX_ITER: usize = 500;
const STEP_TOL: f64 = 1e-8;

/// Envelope fit over the peaks with `m_range.0 ≤ |m| ≤ m_range.1`; peaks on
/// both sides of zero delay enter as separate observations.
pub fn fit_envelope(hist: &CoincidenceHistogram, m_range: (i64, i64)) -> Result<EnvelopeFit> {
    fit_peaks(&hist.peak_areas, hist.period, m_range)
}

pub fn fit_peaks(peaks: &[PeakArea], period: f64, m_range: (i64, i64)) -> Result<EnvelopeFit> {
    let (m_lo, m_hi) = m_range;
    if m_lo < 1 || m_hi < m_lo {
        return Err(Error::InvalidParameter(format!("peak range ({m_lo}, {m_hi}) must satisfy 1 <= lo <= hi")));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidParameter(format!("period {period} must be > 0")));
    }
    let data: Vec<(f64, f64)> = peaks
        .iter()
        .filter(|p| (m_lo..=m_hi).contains(&p.m.abs()))
        .map(|p| (p.m.abs() as f64, p.area))
        .collect();
    let distinct = {
        let mut ms: Vec<i64> = peaks.iter().map(|p| p.m.abs()).filter(|m| (m_lo..=m_hi).contains(m)).collect();
        ms.sort_unstable();
        ms.dedup();
        ms.len()
    };
    if distinct < 4 {
        return Err(Error::InsufficientData(format!("{distinct} distinct side peaks in range, need 4")));
    }
    if data.iter().any(|&(_, y)| !(y > 0.0)) {
        return Err(Error::InsufficientData("side peaks must have positive area".into()));
    }
    let w: Vec<f64> = data.iter().map(|&(_, y)| 1.0 / y.max(1.0)).collect();

    let flat = flat_fit(&data, &w, period);
    let spread = data.iter().map(|&(_, y)| (y - flat.ginf).abs()).fold(0.0f64, f64::max);
    if spread <= 1e-12 * flat.ginf {
        return Ok(flat);
    }
    let span = data.iter().map(|d| d.0).fold(0.0f64, f64::max) * period;
    match levenberg_marquardt(&data, &w, period) {
        Ok(fit) if identifiable(&fit, &flat, data.len(), span) => Ok(fit),
        Ok(_) | Err(Error::FitDiverged { .. }) => Ok(flat),
        Err(e) => Err(e),
    }
}

/// The decay is kept only if an F-test prefers it over a constant at about
/// the 1% level, `(Δχ²/2) / (χ²/(n − 3)) > 5`, and its time constant lies
/// within reach of the sampled span. The ratio of χ² values keeps the
/// decision independent of the overall count scale.
fn identifiable(fit: &EnvelopeFit, flat: &EnvelopeFit, n: usize, span: f64) -> bool {
    let dof = (n as f64 - 3.0).max(1.0);
    let chi2_fit = fit.residual * dof;
    let chi2_flat = flat.residual * (n as f64 - 1.0).max(1.0);
    let improvement = 0.5 * (chi2_flat - chi2_fit);
    fit.t.is_finite()
        && fit.t > 1e-2 * fit.period
        && fit.t < 1e3 * span
        && fit.ginf > 0.0
        && improvement > 5.0 * chi2_fit / dof
}

fn flat_fit(data: &[(f64, f64)], w: &[f64], period: f64) -> EnvelopeFit {
    let sw: f64 = w.iter().sum();
    let ginf = data.iter().zip(w).map(|(&(_, y), wi)| wi * y).sum::<f64>() / sw;
    let chi2: f64 = data.iter().zip(w).map(|(&(_, y), wi)| wi * (y - ginf).powi(2)).sum();
    let err = (1.0 / sw).sqrt();
    EnvelopeFit {
        g0: ginf,
        ginf,
        t: f64::INFINITY,
        g0_err: err,
        ginf_err: err,
        t_err: f64::INFINITY,
        residual: chi2 / (data.len() as f64 - 1.0).max(1.0),
        iterations: 0,
        t_identifiable: false,
        period,
    }
}

fn model(p: &Vector3<f64>, m: f64, period: f64) -> (f64, Vector3<f64>) {
    let (g0, ginf, t) = (p[0], p[1], p[2]);
    let e = (-m * period / t).exp();
    let y = (g0 - ginf) * e + ginf;
    let grad = Vector3::new(e, 1.0 - e, (g0 - ginf) * e * m * period / (t * t));
    (y, grad)
}

fn normal_equations(data: &[(f64, f64)], w: &[f64], p: &Vector3<f64>, period: f64) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    let mut chi2 = 0.0;
    for (&(m, y), &wi) in data.iter().zip(w) {
        let (f, g) = model(p, m, period);
        let r = y - f;
        jtj += g * g.transpose() * wi;
        jtr += g * (wi * r);
        chi2 += wi * r * r;
    }
    (jtj, jtr, chi2)
}

fn initial_guess(data: &[(f64, f64)], period: f64) -> Vector3<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let tail = &sorted[(2 * n) / 3..];
    let ginf = tail.iter().map(|d| d.1).sum::<f64>() / tail.len() as f64;
    // log-linear regression of the excess over the tail level on the head
    let head: Vec<(f64, f64)> = sorted[..(2 * n) / 3]
        .iter()
        .filter(|d| d.1 > ginf)
        .map(|&(m, y)| (m, (y - ginf).ln()))
        .collect();
    let span = sorted[n - 1].0 * period;
    let (mut amp, mut t) = (sorted[0].1 - ginf, span / 3.0);
    if head.len() >= 2 {
        let k = head.len() as f64;
        let mx = head.iter().map(|d| d.0).sum::<f64>() / k;
        let my = head.iter().map(|d| d.1).sum::<f64>() / k;
        let sxx: f64 = head.iter().map(|d| (d.0 - mx).powi(2)).sum();
        let sxy: f64 = head.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 && slope.is_finite() {
            t = -period / slope;
            amp = (my - slope * mx).exp();
        }
    }
    Vector3::new(ginf + amp, ginf, t.clamp(0.1 * period, 100.0 * span.max(period)))
}

fn levenberg_marquardt(data: &[(f64, f64)], w: &[f64], period: f64) -> Result<EnvelopeFit> {
    let mut p = initial_guess(data, period);
    let (mut jtj, mut jtr, mut chi2) = normal_equations(data, w, &p, period);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut a = jtj;
        for i in 0..3 {
            a[(i, i)] *= 1.0 + lambda;
        }
        let Some(step) = a.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        if trial[2] <= 0.0 || !trial.iter().all(|x| x.is_finite()) {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        }
        let (jtj_t, jtr_t, chi2_t) = normal_equations(data, w, &trial, period);
        if chi2_t <= chi2 {
            let rel = (0..3).map(|i| (step[i] / trial[i]).abs()).fold(0.0f64, f64::max);
            p = trial;
            jtj = jtj_t;
            jtr = jtr_t;
            chi2 = chi2_t;
            lambda = (lambda / 10.0).max(1e-12);
            if rel < STEP_TOL {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // No downhill direction left at machine precision.
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::FitDiverged { iterations });
    }
    // Gauss-Newton polish: χ² comparisons cannot resolve parameters below
    // ~1e-8 relative, the gradient can. Steps are taken while they shrink.
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let Some(step) = jtj.lu().solve(&jtr) else { break };
        let rel = (0..3).map(|i| (step[i] / p[i]).abs()).fold(0.0f64, f64::max);
        let trial = p + step;
        if !rel.is_finite() || rel >= last || trial[2] <= 0.0 {
            break;
        }
        p = trial;
        (jtj, jtr, chi2) = normal_equations(data, w, &p, period);
        last = rel;
        if rel < 1e-15 {
            break;
        }
    }
    let cov = jtj.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::INFINITY));
    let err = |i: usize| cov[(i, i)].max(0.0).sqrt();
    Ok(EnvelopeFit {
        g0: p[0],
        ginf: p[1],
        t: p[2],
        g0_err: err(0),
        ginf_err: err(1),
        t_err: err(2),
        residual: chi2 / (data.len() as f64 - 3.0).max(1.0),
        iterations,
        t_identifiable: true,
        period,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Zero-delay peak over the long-delay plateau `Ginf`.
    Plateau,
    /// Zero-delay peak over the envelope extrapolated to `m → 0`.
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedG2 {
    pub value: f64,
    pub error: f64,
}

/// Normalized zero-delay coincidence ratio with Poisson error propagation.
pub fn normalize_g2(hist: &CoincidenceHistogram, fit: &EnvelopeFit, mode: Normalization) -> Result<NormalizedG2> {
    let area0 = hist
        .peak(0)
        .ok_or_else(|| Error::InsufficientData("histogram has no zero-delay peak".into()))?;
    if mode == Normalization::NearestNeighbor && (hist.peak(1).is_none() || hist.peak(-1).is_none()) {
        return Err(Error::InsufficientData("nearest-neighbor peaks missing".into()));
    }
    normalize_area(area0, fit, mode)
}

pub fn normalize_area(area0: f64, fit: &EnvelopeFit, mode: Normalization) -> Result<NormalizedG2> {
    let (den, den_err) = match mode {
        Normalization::Plateau => (fit.ginf, fit.ginf_err),
        Normalization::NearestNeighbor => (fit.g0, fit.g0_err),
    };
    if !(den > 0.0) {
        return Err(Error::UndefinedRatio("zero normalization constant".into()));
    }
    let value = area0 / den;
    let rel_num = if area0 > 0.0 { 1.0 / area0 } else { 0.0 };
    let error = value.abs() * (rel_num + (den_err / den).powi(2)).sqrt();
    Ok(NormalizedG2 { value, error: if area0 > 0.0 { error } else { den_err / den / den } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blinking::Click;
    use approx::assert_relative_eq;

    fn peaks(g0: f64, ginf: f64, t: f64, period: f64, m_max: i64) -> Vec<PeakArea> {
        (-m_max..=m_max)
            .map(|m| PeakArea { m, area: (g0 - ginf) * (-(m.abs() as f64) * period / t).exp() + ginf })
            .collect()
    }

    #[test]
    fn single_pair_lands_in_its_bin_and_mirror() {
        let s = ClickStream::new(vec![Click { channel: 0, time_ps: 100_000 }, Click { channel: 1, time_ps: 103_100 }])
            .unwrap();
        let h = build_histogram(&s, 0.5e-9, 10e-9, 12.5e-9).unwrap();
        assert_eq!(h.total(), 1);
        let i = h.counts.iter().position(|&c| c == 1).unwrap();
        assert_relative_eq!(h.bin_start(i), 3.0e-9, epsilon = 1e-18);
        let sym = h.symmetrized();
        let hits: Vec<f64> = (0..sym.len()).filter(|&i| sym[i] == 1).map(|i| h.bin_start(i)).collect();
        assert_eq!(hits.len(), 2);
        assert_relative_eq!(hits[0], -3.5e-9, epsilon = 1e-18);
        assert_relative_eq!(hits[1], 3.0e-9, epsilon = 1e-18);
    }

    #[test]
    fn empty_channel_is_an_error() {
        let s = ClickStream::new(vec![Click { channel: 0, time_ps: 1 }]).unwrap();
        assert!(matches!(build_histogram(&s, 1e-9, 1e-8, 12.5e-9), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn noiseless_round_trip() {
        let period = 12.5e-9;
        let fit = fit_peaks(&peaks(1055.0, 1000.0, 200e-9, period, 40), period, (1, 40)).unwrap();
        assert!(fit.t_identifiable);
        assert_relative_eq!(fit.g0, 1055.0, max_relative = 1e-6);
        assert_relative_eq!(fit.ginf, 1000.0, max_relative = 1e-6);
        assert_relative_eq!(fit.t, 200e-9, max_relative = 1e-6);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn flat_peaks_leave_t_unidentified() {
        let period = 12.5e-9;
        let flat: Vec<PeakArea> = (-20..=20).map(|m| PeakArea { m, area: 500.0 }).collect();
        let fit = fit_peaks(&flat, period, (1, 20)).unwrap();
        assert!(!fit.t_identifiable);
        assert_relative_eq!(fit.ginf, 500.0, max_relative = 1e-14);
        assert_eq!(fit.g0, fit.ginf);
        assert!(fit.t.is_infinite());
    }

    #[test]
    fn too_few_peaks() {
        let p = peaks(1055.0, 1000.0, 200e-9, 12.5e-9, 3);
        assert!(matches!(fit_peaks(&p, 12.5e-9, (1, 3)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn normalizations() {
        let period = 12.5e-9;
        let fit = fit_peaks(&peaks(1100.0, 1000.0, 100e-9, period, 30), period, (1, 30)).unwrap();
        let plateau = normalize_area(950.0, &fit, Normalization::Plateau).unwrap();
        let nearest = normalize_area(950.0, &fit, Normalization::NearestNeighbor).unwrap();
        assert_relative_eq!(plateau.value, 0.95, max_relative = 1e-8);
        assert_relative_eq!(nearest.value, 950.0 / 1100.0, max_relative = 1e-8);
        assert!(nearest.value <= plateau.value);
        let expect = 0.95 * (1.0 / 950.0 + (fit.ginf_err / fit.ginf).powi(2)).sqrt();
        assert_relative_eq!(plateau.error, expect, max_relative = 1e-12);
    }
}
