//! Pulse segmentation, analysis window and relative-phase extraction.
//!
//! The relative phase is the angle of the point `(x = I_0, y = I_pi/2)`
//! measured from `(1, 0)`, i.e. `atan2(I_pi/2, I_0)`, which inverts
//! `I_0 = A cos(dtheta)`, `I_pi/2 = A sin(dtheta)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Relative amplitude below which a window sample is masked.
pub const MASK_FRACTION: f64 = 0.05;

/// Two sampled quadrature traces sharing a time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformPair {
    pub i0: Vec<f64>,
    pub i90: Vec<f64>,
    pub sample_period: f64,
    pub t0: f64,
}

impl WaveformPair {
    pub fn new(i0: Vec<f64>, i90: Vec<f64>, sample_period: f64, t0: f64) -> Result<Self> {
        if i0.len() != i90.len() {
            return Err(param(format!(
                "quadrature lengths differ ({} vs {})",
                i0.len(),
                i90.len()
            )));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(param("sample period must be positive"));
        }
        Ok(Self {
            i0,
            i90,
            sample_period,
            t0,
        })
    }

    pub fn len(&self) -> usize {
        self.i0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i0.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.sample_period
    }
}

/// Relative phase of one sample, in `[-pi, pi)`.
pub fn extract_phase(i0: f64, i90: f64) -> Result<f64> {
    if i0 == 0.0 && i90 == 0.0 {
        return Err(Error::UndefinedPhase);
    }
    let p = i90.atan2(i0);
    Ok(if p >= PI { -PI } else { p })
}

/// A waveform cut into consecutive pulse periods.
#[derive(Debug, Clone)]
pub struct PulseSegments<'a> {
    wf: &'a WaveformPair,
    starts: Vec<usize>,
    samples_per_pulse: usize,
}

/// Cuts `wf` into periods of `floor(sample_rate / rep_rate)` samples. Period
/// `n` starts at sample `offset + round(n * sample_rate / rep_rate)`, where
/// `offset` is the trigger offset in samples; for an integer ratio the
/// segments tile the trace. Incomplete trailing periods are dropped.
pub fn segment_pulses(wf: &WaveformPair, rep_rate: f64, trigger_offset: f64) -> Result<PulseSegments<'_>> {
    if !(rep_rate > 0.0 && rep_rate.is_finite()) {
        return Err(param(format!("repetition rate must be positive, got {rep_rate}")));
    }
    if !(trigger_offset >= 0.0 && trigger_offset.is_finite()) {
        return Err(param("trigger offset must be non-negative"));
    }
    let ratio = 1.0 / (rep_rate * wf.sample_period);
    let spp = ratio.floor() as usize;
    if spp == 0 {
        return Err(param("sample rate is below the repetition rate"));
    }
    let offset = (trigger_offset / wf.sample_period).round() as usize;
    let mut starts = Vec::new();
    loop {
        let s = offset + (starts.len() as f64 * ratio).round() as usize;
        if s + spp > wf.len() {
            break;
        }
        starts.push(s);
    }
    if starts.is_empty() {
        return Err(Error::EmptyInput(
            "waveform does not contain one complete period".into(),
        ));
    }
    Ok(PulseSegments {
        wf,
        starts,
        samples_per_pulse: spp,
    })
}

impl<'a> PulseSegments<'a> {
    pub fn n_pulses(&self) -> usize {
        self.starts.len()
    }

    pub fn samples_per_pulse(&self) -> usize {
        self.samples_per_pulse
    }

    pub fn sample_period(&self) -> f64 {
        self.wf.sample_period
    }

    pub fn start(&self, n: usize) -> usize {
        self.starts[n]
    }

    /// Quadrature slices of pulse `n`.
    pub fn pulse(&self, n: usize) -> (&'a [f64], &'a [f64]) {
        let s = self.starts[n];
        let e = s + self.samples_per_pulse;
        (&self.wf.i0[s..e], &self.wf.i90[s..e])
    }

    /// RMS amplitude `sqrt(<I_0^2 + I_pi/2^2>)` over pulses, per sample of
    /// the period. Unlike the averaged quadratures it does not cancel when
    /// the phases are random.
    pub fn envelope_profile(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.samples_per_pulse];
        for n in 0..self.n_pulses() {
            let (a, b) = self.pulse(n);
            for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
                *s += x * x + y * y;
            }
        }
        let n = self.n_pulses() as f64;
        acc.into_iter().map(|s| (s / n).sqrt()).collect()
    }
}

/// How the analysis window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WindowSpec {
    /// Contiguous run around the envelope maximum where the envelope is at
    /// least `threshold_frac` of that maximum.
    AmplitudeThreshold { threshold_frac: f64 },
    /// Fixed interval in seconds relative to the segment start.
    Explicit { start: f64, end: f64 },
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::AmplitudeThreshold {
            threshold_frac: 0.5,
        }
    }
}

/// Selected sample range within each period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// First sample index (inclusive).
    pub lo: usize,
    /// Last sample index (inclusive).
    pub hi: usize,
    /// Spacing between analyzed samples.
    pub stride: usize,
    pub sample_period: f64,
    /// Maximum of the envelope profile; sets the masking level.
    pub envelope_peak: f64,
}

impl Window {
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> f64 {
        self.lo as f64 * self.sample_period
    }

    pub fn end_time(&self) -> f64 {
        self.hi as f64 * self.sample_period
    }

    /// Thins the analyzed samples to at most `max` evenly spaced ones.
    pub fn with_max_samples(mut self, max: usize) -> Self {
        let max = max.max(1);
        self.stride = self.len().div_ceil(max).max(1);
        self
    }

    /// Indices of the analyzed samples.
    pub fn indices(&self) -> Vec<usize> {
        (self.lo..=self.hi).step_by(self.stride.max(1)).collect()
    }
}

/// Chooses the analysis window. The result does not depend on pulse order.
pub fn select_window(segments: &PulseSegments, spec: &WindowSpec) -> Result<Window> {
    let profile = segments.envelope_profile();
    let (peak_idx, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let dt = segments.sample_period();
    match *spec {
        WindowSpec::AmplitudeThreshold { threshold_frac } => {
            if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
                return Err(param(format!(
                    "threshold fraction must lie in (0, 1), got {threshold_frac}"
                )));
            }
            if !(peak > 0.0) {
                return Err(Error::WindowSelection("envelope is identically zero".into()));
            }
            let level = threshold_frac * peak;
            let mut lo = peak_idx;
            while lo > 0 && profile[lo - 1] >= level {
                lo -= 1;
            }
            let mut hi = peak_idx;
            while hi + 1 < profile.len() && profile[hi + 1] >= level {
                hi += 1;
            }
            Ok(Window {
                lo,
                hi,
                stride: 1,
                sample_period: dt,
                envelope_peak: peak,
            })
        }
        WindowSpec::Explicit { start, end } => {
            if !(start.is_finite() && end.is_finite()) || end < start || start < 0.0 {
                return Err(param(format!("invalid explicit window [{start}, {end}]")));
            }
            let lo = (start / dt - 1e-9).ceil() as usize;
            let hi_raw = (end / dt + 1e-9).floor();
            if hi_raw < lo as f64 || lo >= profile.len() {
                return Err(Error::WindowSelection(format!(
                    "explicit window [{start}, {end}] contains no samples"
                )));
            }
            let hi = (hi_raw as usize).min(profile.len() - 1);
            Ok(Window {
                lo,
                hi,
                stride: 1,
                sample_period: dt,
                envelope_peak: peak.max(0.0),
            })
        }
    }
}

/// Per-pulse, per-sample relative phases over the analysis window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulsePhaseMatrix {
    /// Row-major `n_pulses x n_tau` phases in `[-pi, pi)`; masked entries hold 0.
    pub phases: Vec<f64>,
    /// `false` where the sample was masked.
    pub valid: Vec<bool>,
    pub n_pulses: usize,
    /// Sample index within the period of each column.
    pub sample_indices: Vec<usize>,
    /// Time of each column relative to the segment start, in seconds.
    pub tau: Vec<f64>,
}

impl PulsePhaseMatrix {
    pub fn n_tau(&self) -> usize {
        self.tau.len()
    }

    /// Unmasked phases of column `w`.
    pub fn column(&self, w: usize) -> Vec<f64> {
        let nt = self.n_tau();
        (0..self.n_pulses)
            .filter(|n| self.valid[n * nt + w])
            .map(|n| self.phases[n * nt + w])
            .collect()
    }

    pub fn masked_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

/// Extracts the relative phase at every analyzed window sample of every pulse.
/// Samples whose amplitude is below [`MASK_FRACTION`] of the envelope peak, or
/// exactly zero, are masked.
pub fn phase_matrix(segments: &PulseSegments, window: &Window) -> Result<PulsePhaseMatrix> {
    if window.hi >= segments.samples_per_pulse() {
        return Err(param("window extends beyond the pulse period"));
    }
    let idx = window.indices();
    let mask_level = MASK_FRACTION * window.envelope_peak;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..segments.n_pulses())
        .into_par_iter()
        .map(|n| {
            let (a, b) = segments.pulse(n);
            let mut ph = Vec::with_capacity(idx.len());
            let mut ok = Vec::with_capacity(idx.len());
            for &k in &idx {
                let amp = a[k].hypot(b[k]);
                match extract_phase(a[k], b[k]) {
                    Ok(p) if amp >= mask_level => {
                        ph.push(p);
                        ok.push(true);
                    }
                    _ => {
                        ph.push(0.0);
                        ok.push(false);
                    }
                }
            }
            (ph, ok)
        })
        .collect();
    let mut phases = Vec::with_capacity(rows.len() * idx.len());
    let mut valid = Vec::with_capacity(rows.len() * idx.len());
    for (p, v) in rows {
        phases.extend(p);
        valid.extend(v);
    }
    let dt = segments.sample_period();
    Ok(PulsePhaseMatrix {
        phases,
        valid,
        n_pulses: segments.n_pulses(),
        tau: idx.iter().map(|&k| k as f64 * dt).collect(),
        sample_indices: idx,
    })
}

/// Window-integrated quadratures and the resulting one phase per pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedPhases {
    pub i0_int: Vec<f64>,
    pub i90_int: Vec<f64>,
    pub phases: Vec<f64>,
}

/// Integrates each quadrature over the full window (trapezoidal rule, every
/// sample regardless of stride) and extracts one phase per pulse.
pub fn integrate_pulse(segments: &PulseSegments, window: &Window) -> Result<IntegratedPhases> {
    if window.hi >= segments.samples_per_pulse() {
        return Err(param("window extends beyond the pulse period"));
    }
    let dt = segments.sample_period();
    let sums: Vec<(f64, f64)> = (0..segments.n_pulses())
        .into_par_iter()
        .map(|n| {
            let (a, b) = segments.pulse(n);
            let (a, b) = (&a[window.lo..=window.hi], &b[window.lo..=window.hi]);
            (trapezoid(a, dt), trapezoid(b, dt))
        })
        .collect();
    let phases = sums
        .iter()
        .map(|&(x, y)| extract_phase(x, y))
        .collect::<Result<Vec<_>>>()?;
    let (i0_int, i90_int) = sums.into_iter().unzip();
    Ok(IntegratedPhases {
        i0_int,
        i90_int,
        phases,
    })
}

fn trapezoid(y: &[f64], dt: f64) -> f64 {
    match y.len() {
        0 => 0.0,
        1 => y[0] * dt,
        n => (y.iter().sum::<f64>() - 0.5 * (y[0] + y[n - 1])) * dt,
    }
}
