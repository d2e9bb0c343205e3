//! Ground-truth pulse trains and balanced heterodyne waveforms.
//!
//! The slave laser is modeled phenomenologically: each gain-switched pulse
//! draws its phase from a circular [`PhaseDistribution`], optionally followed by
//! a linear chirp inside the pulse. The local oscillator is a constant-amplitude
//! field whose phase performs a slow, bounded random walk. The detector outputs
//! are built from the four hybrid-port intensities, exactly as a 90° optical
//! hybrid with two balanced photodetectors would produce them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circfit::WrappedVoigtParams;
use crate::circular::wrap_angle;
use crate::error::{param, Error, Result};
use crate::phasex::WaveformPair;
use crate::rng::{substream, Stream};
use crate::units::dbm_to_mw;

const TWO_PI: f64 = 2.0 * PI;

/// Distribution of the pulse phase relative to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseDistribution {
    Uniform,
    WrappedGaussian { center: f64, sigma: f64 },
    WrappedCauchy { center: f64, gamma: f64 },
    WrappedVoigt { center: f64, sigma: f64, gamma: f64 },
    Delta { center: f64 },
}

impl PhaseDistribution {
    pub fn validate(&self) -> Result<()> {
        let (center, sigma, gamma) = self.raw();
        if !(center.is_finite() && sigma.is_finite() && gamma.is_finite()) {
            return Err(param("phase distribution parameters must be finite"));
        }
        if sigma < 0.0 || gamma < 0.0 {
            return Err(param(format!(
                "phase distribution widths must be non-negative (sigma {sigma}, gamma {gamma})"
            )));
        }
        Ok(())
    }

    fn raw(&self) -> (f64, f64, f64) {
        match *self {
            Self::Uniform => (0.0, 0.0, 0.0),
            Self::WrappedGaussian { center, sigma } => (center, sigma, 0.0),
            Self::WrappedCauchy { center, gamma } => (center, 0.0, gamma),
            Self::WrappedVoigt {
                center,
                sigma,
                gamma,
            } => (center, sigma, gamma),
            Self::Delta { center } => (center, 0.0, 0.0),
        }
    }

    /// Collapses zero widths so every variant has a canonical form.
    fn normalized(&self) -> Self {
        match *self {
            Self::WrappedGaussian { center, sigma } if sigma == 0.0 => Self::Delta { center },
            Self::WrappedCauchy { center, gamma } if gamma == 0.0 => Self::Delta { center },
            Self::WrappedVoigt {
                center,
                sigma,
                gamma,
            } => match (sigma == 0.0, gamma == 0.0) {
                (true, true) => Self::Delta { center },
                (false, true) => Self::WrappedGaussian { center, sigma },
                (true, false) => Self::WrappedCauchy { center, gamma },
                _ => *self,
            },
            other => other,
        }
    }

    /// Equivalent wrapped Voigt parameters, when the distribution has a
    /// density of that family.
    pub fn as_wrapped_voigt(&self) -> Option<WrappedVoigtParams> {
        let (center, sigma, gamma) = match self.normalized() {
            Self::WrappedGaussian { center, sigma } => (center, sigma, 0.0),
            Self::WrappedCauchy { center, gamma } => (center, 0.0, gamma),
            Self::WrappedVoigt {
                center,
                sigma,
                gamma,
            } => (center, sigma, gamma),
            _ => return None,
        };
        WrappedVoigtParams::new(center, sigma, gamma).ok()
    }

    /// Probability density on the circle; `None` for the point mass.
    pub fn density(&self, phi: f64) -> Option<f64> {
        match self.normalized() {
            Self::Uniform => Some(1.0 / TWO_PI),
            Self::Delta { .. } => None,
            Self::WrappedCauchy { center, gamma } => {
                let d = phi - center;
                Some(gamma.sinh() / (TWO_PI * (gamma.cosh() - d.cos())))
            }
            Self::WrappedGaussian { center, sigma } if sigma >= 8.0 => {
                // Fourier form: the image sum would need hundreds of terms.
                let d = phi - center;
                let mut s = 1.0;
                for n in 1..4 {
                    let n = n as f64;
                    s += 2.0 * (-0.5 * n * n * sigma * sigma).exp() * (n * d).cos();
                }
                Some(s / TWO_PI)
            }
            other => other.as_wrapped_voigt().map(|p| p.pdf(phi)),
        }
    }

    /// Adds an independent zero-mean Gaussian phase spread of width `extra`.
    pub fn broadened(&self, extra: f64) -> Self {
        if extra == 0.0 {
            return *self;
        }
        match self.normalized() {
            Self::Uniform => Self::Uniform,
            Self::Delta { center } => Self::WrappedGaussian {
                center,
                sigma: extra,
            },
            Self::WrappedGaussian { center, sigma } => Self::WrappedGaussian {
                center,
                sigma: sigma.hypot(extra),
            },
            Self::WrappedCauchy { center, gamma } => Self::WrappedVoigt {
                center,
                sigma: extra,
                gamma,
            },
            Self::WrappedVoigt {
                center,
                sigma,
                gamma,
            } => Self::WrappedVoigt {
                center,
                sigma: sigma.hypot(extra),
                gamma,
            },
        }
    }

    /// Rotates the distribution by `offset` radians.
    pub fn shifted(&self, offset: f64) -> Self {
        match *self {
            Self::Uniform => Self::Uniform,
            Self::WrappedGaussian { center, sigma } => Self::WrappedGaussian {
                center: wrap_angle(center + offset),
                sigma,
            },
            Self::WrappedCauchy { center, gamma } => Self::WrappedCauchy {
                center: wrap_angle(center + offset),
                gamma,
            },
            Self::WrappedVoigt {
                center,
                sigma,
                gamma,
            } => Self::WrappedVoigt {
                center: wrap_angle(center + offset),
                sigma,
                gamma,
            },
            Self::Delta { center } => Self::Delta {
                center: wrap_angle(center + offset),
            },
        }
    }

    /// Analytic circular moment `E[exp(i n theta)]`.
    pub fn circular_moment(&self, n: i64) -> Complex64 {
        let nf = n as f64;
        let (center, sigma, gamma) = self.raw();
        match self {
            Self::Uniform if n != 0 => Complex64::new(0.0, 0.0),
            Self::Uniform => Complex64::new(1.0, 0.0),
            _ => {
                let mag = (-0.5 * nf * nf * sigma * sigma - nf.abs() * gamma).exp();
                Complex64::from_polar(mag, nf * center)
            }
        }
    }
}

/// Draws one phase in `[-pi, pi)`.
pub fn sample_phase<R: Rng + ?Sized>(dist: &PhaseDistribution, rng: &mut R) -> Result<f64> {
    dist.validate()?;
    let draw = match *dist {
        PhaseDistribution::Uniform => rng.random::<f64>() * TWO_PI - PI,
        PhaseDistribution::Delta { center } => return Ok(wrap_angle(center)),
        PhaseDistribution::WrappedGaussian { center, sigma } => {
            center + sigma * rng.sample::<f64, _>(StandardNormal)
        }
        PhaseDistribution::WrappedCauchy { center, gamma } => {
            center + gamma * cauchy_unit(rng)
        }
        PhaseDistribution::WrappedVoigt {
            center,
            sigma,
            gamma,
        } => center + sigma * rng.sample::<f64, _>(StandardNormal) + gamma * cauchy_unit(rng),
    };
    Ok(wrap_angle(draw))
}

fn cauchy_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Inverse CDF; u in (0, 1) avoids the poles.
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (PI * (u - 0.5)).tan()
}

/// Phenomenological map from injected power to phase concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockingCalibration {
    /// Concentration `1 / sigma^2` at the reference power with full coupling.
    pub kappa_ref: f64,
    pub p_ref_dbm: f64,
    /// Power-law exponent of concentration versus coupled power.
    pub exponent: f64,
}

impl Default for LockingCalibration {
    fn default() -> Self {
        Self {
            kappa_ref: 20.0,
            p_ref_dbm: -42.3,
            exponent: 0.5,
        }
    }
}

impl LockingCalibration {
    /// Concentration for the given injected power and coupling fraction.
    pub fn concentration(&self, power_dbm: f64, eta: f64) -> f64 {
        let coupled = eta * dbm_to_mw(power_dbm - self.p_ref_dbm);
        if coupled <= 0.0 {
            return 0.0;
        }
        self.kappa_ref * coupled.powf(self.exponent)
    }
}

/// Wrapped Gaussian phase distribution produced by injecting `power_dbm` with
/// coupling fraction `eta`. Zero concentration yields the uniform distribution.
pub fn locking_distribution(
    power_dbm: f64,
    eta: f64,
    calib: &LockingCalibration,
) -> Result<PhaseDistribution> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(param(format!("coupling fraction must lie in [0, 1], got {eta}")));
    }
    if calib.kappa_ref < 0.0 {
        return Err(param("kappa_ref must be non-negative"));
    }
    let kappa = calib.concentration(power_dbm, eta);
    if kappa <= 0.0 || !kappa.is_finite() {
        return Ok(PhaseDistribution::Uniform);
    }
    Ok(PhaseDistribution::WrappedGaussian {
        center: 0.0,
        sigma: kappa.sqrt().recip(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    /// Flat top of `duty_cycle * period` with raised-cosine edges of
    /// `rise_time` on either side.
    #[default]
    RaisedCosineRect,
    /// Gaussian with FWHM `duty_cycle * period`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rep_rate: f64,
    pub duty_cycle: f64,
    pub sample_rate: f64,
    pub n_pulses: usize,
    pub envelope: EnvelopeShape,
    pub rise_time: f64,
    /// Start of the pulse (beginning of the rising edge) within the period.
    pub pulse_delay: f64,
    /// Peak slave field amplitude.
    pub signal_amplitude: f64,
    /// Local oscillator field amplitude.
    pub lo_amplitude: f64,
    /// Mean intra-pulse chirp in rad/s.
    pub chirp_rate: f64,
    /// Standard deviation of the per-pulse chirp rate in rad/s.
    pub chirp_jitter: f64,
    /// Time within the period where the chirp contributes no phase.
    pub chirp_pivot: f64,
    pub noise_rms: f64,
    pub lo_drift_bound: f64,
    pub lo_initial_phase: f64,
    /// Relative gain mismatch between the two photodiodes of each pair.
    pub detector_imbalance: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rep_rate: 40e6,
            duty_cycle: 0.5,
            sample_rate: 50e9,
            n_pulses: 8000,
            envelope: EnvelopeShape::RaisedCosineRect,
            rise_time: 1e-9,
            pulse_delay: 0.0,
            signal_amplitude: 1.0,
            lo_amplitude: 0.5,
            chirp_rate: 0.0,
            chirp_jitter: 0.0,
            chirp_pivot: 0.0,
            noise_rms: 0.01,
            lo_drift_bound: 5e-4,
            lo_initial_phase: 0.0,
            detector_imbalance: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.rep_rate
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn acquisition_time(&self) -> f64 {
        self.n_pulses as f64 / self.rep_rate
    }

    pub fn samples_per_period(&self) -> f64 {
        self.sample_rate / self.rep_rate
    }

    pub fn total_samples(&self) -> usize {
        (self.n_pulses as f64 * self.samples_per_period()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rep_rate", self.rep_rate),
            ("sample_rate", self.sample_rate),
            ("signal_amplitude", self.signal_amplitude),
            ("lo_amplitude", self.lo_amplitude),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.samples_per_period() < 10.0 {
            return Err(param(format!(
                "need at least 10 samples per period, got {:.3}",
                self.samples_per_period()
            )));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return Err(param("duty_cycle must lie in (0, 1)"));
        }
        let non_negative = [
            ("rise_time", self.rise_time),
            ("pulse_delay", self.pulse_delay),
            ("noise_rms", self.noise_rms),
            ("lo_drift_bound", self.lo_drift_bound),
            ("chirp_jitter", self.chirp_jitter),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(param(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.envelope == EnvelopeShape::RaisedCosineRect
            && self.pulse_delay + self.duty_cycle * self.period() + 2.0 * self.rise_time
                > self.period()
        {
            return Err(param("pulse (flat top plus edges) does not fit in one period"));
        }
        if self.detector_imbalance.abs() >= 1.0 {
            return Err(param("detector_imbalance must lie in (-1, 1)"));
        }
        Ok(())
    }

    /// Normalized slave amplitude `A_S(tau) / A_S,peak` at time `tau` into the period.
    pub fn envelope_at(&self, tau: f64) -> f64 {
        let flat = self.duty_cycle * self.period();
        match self.envelope {
            EnvelopeShape::RaisedCosineRect => {
                let t = tau - self.pulse_delay;
                let tr = self.rise_time;
                if t < 0.0 || t > flat + 2.0 * tr {
                    0.0
                } else if t < tr {
                    0.5 * (1.0 - (PI * t / tr).cos())
                } else if t <= tr + flat {
                    1.0
                } else {
                    0.5 * (1.0 + (PI * (t - tr - flat) / tr).cos())
                }
            }
            EnvelopeShape::Gaussian => {
                let center = self.pulse_delay + self.rise_time + 0.5 * flat;
                let s = flat / (2.0 * (2.0 * 2f64.ln()).sqrt());
                (-0.5 * ((tau - center) / s).powi(2)).exp()
            }
        }
    }

    /// Time interval within the period where the envelope is non-zero.
    pub fn pulse_support(&self) -> (f64, f64) {
        let flat = self.duty_cycle * self.period();
        (self.pulse_delay, self.pulse_delay + flat + 2.0 * self.rise_time)
    }
}

/// Ground-truth slave pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    /// Pulse phases at the chirp pivot, in `[-pi, pi)`.
    pub true_phases: Vec<f64>,
    /// Per-pulse chirp rate in rad/s.
    pub chirp_rates: Vec<f64>,
    /// Shared envelope `A_S(tau)`, one value per sample of a nominal period.
    pub envelope: Vec<f64>,
    pub chirp_pivot: f64,
    pub sample_period: f64,
}

impl PulseTrain {
    pub fn len(&self) -> usize {
        self.true_phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_phases.is_empty()
    }

    /// Unwrapped slave phase of pulse `n` at time `tau` into its period.
    pub fn phase_at(&self, n: usize, tau: f64) -> f64 {
        self.true_phases[n] + self.chirp_rates[n] * (tau - self.chirp_pivot)
    }
}

/// Draws the pulse phases and chirps; pulse `n` uses its own substream.
pub fn generate_pulse_train(cfg: &SimConfig, dist: &PhaseDistribution) -> Result<PulseTrain> {
    cfg.validate()?;
    dist.validate()?;
    if cfg.n_pulses == 0 {
        return Err(Error::EmptyInput("n_pulses is zero".into()));
    }
    let draws: Vec<(f64, f64)> = (0..cfg.n_pulses)
        .into_par_iter()
        .map(|n| {
            let mut rng = substream(cfg.seed, Stream::PulsePhase, n as u64);
            let theta = sample_phase(dist, &mut rng).expect("validated distribution");
            let chirp = if cfg.chirp_jitter > 0.0 {
                cfg.chirp_rate + cfg.chirp_jitter * rng.sample::<f64, _>(StandardNormal)
            } else {
                cfg.chirp_rate
            };
            (theta, chirp)
        })
        .collect();
    let (true_phases, chirp_rates) = draws.into_iter().unzip();
    let n_env = cfg.samples_per_period().ceil() as usize;
    let envelope = (0..n_env)
        .map(|j| cfg.signal_amplitude * cfg.envelope_at(j as f64 * cfg.sample_period()))
        .collect();
    Ok(PulseTrain {
        true_phases,
        chirp_rates,
        envelope,
        chirp_pivot: cfg.chirp_pivot,
        sample_period: cfg.sample_period(),
    })
}

/// Local oscillator: constant amplitude, slowly drifting phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoModel {
    pub amplitude: f64,
    /// Phase at `t = n * node_spacing`; linearly interpolated in between.
    pub phase_nodes: Vec<f64>,
    pub node_spacing: f64,
}

impl LoModel {
    /// LO with a fixed phase.
    pub fn constant(amplitude: f64, phase: f64) -> Self {
        Self {
            amplitude,
            phase_nodes: vec![phase, phase],
            node_spacing: f64::INFINITY,
        }
    }

    /// Random walk with one node per pulse period, rescaled so that its
    /// excursion from the start never exceeds `cfg.lo_drift_bound`.
    pub fn random_walk(cfg: &SimConfig) -> Self {
        let n = cfg.n_pulses.max(1);
        let mut rng = substream(cfg.seed, Stream::LoDrift, 0);
        let step = Normal::new(0.0, 1.0).expect("unit normal");
        let mut nodes: Vec<f64> = Vec::with_capacity(n + 1);
        let mut x = 0.0f64;
        nodes.push(0.0);
        for _ in 0..n {
            x += step.sample(&mut rng);
            nodes.push(x);
        }
        let excursion = nodes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // A typical walk reaches about 0.8 of its excursion, leaving room
        // under the bound.
        let scale = if excursion > 0.0 {
            0.8 * cfg.lo_drift_bound / excursion
        } else {
            0.0
        };
        let phase_nodes = nodes
            .into_iter()
            .map(|v| cfg.lo_initial_phase + v * scale)
            .collect();
        Self {
            amplitude: cfg.lo_amplitude,
            phase_nodes,
            node_spacing: cfg.period(),
        }
    }

    pub fn phase_at(&self, t: f64) -> f64 {
        if !self.node_spacing.is_finite() || self.phase_nodes.len() < 2 {
            return self.phase_nodes[0];
        }
        let x = (t / self.node_spacing).max(0.0);
        let i = (x.floor() as usize).min(self.phase_nodes.len() - 2);
        let frac = (x - i as f64).min(1.0);
        self.phase_nodes[i] * (1.0 - frac) + self.phase_nodes[i + 1] * frac
    }

    /// Largest `|theta_LO(t) - theta_LO(0)|` over the trajectory.
    pub fn max_excursion(&self) -> f64 {
        let p0 = self.phase_nodes[0];
        self.phase_nodes
            .iter()
            .fold(0.0f64, |m, v| m.max((v - p0).abs()))
    }
}

/// Intensities at the four hybrid output ports for slave field `e_s` and LO
/// field `e_lo` (co-polarized, so the vector fields reduce to scalars).
pub fn hybrid_port_intensities(e_s: Complex64, e_lo: Complex64) -> [f64; 4] {
    let minus_i = Complex64::new(0.0, -1.0);
    [
        0.5 * (e_s + e_lo).norm_sqr(),
        0.5 * (e_s - e_lo).norm_sqr(),
        0.5 * (minus_i * e_s + e_lo).norm_sqr(),
        0.5 * (minus_i * e_s - e_lo).norm_sqr(),
    ]
}

/// Balanced detector outputs `(I_0, I_pi/2)` from the port intensities. Each
/// pair's first photodiode has gain `1 + imbalance / 2`, the second
/// `1 - imbalance / 2`.
pub fn balanced_outputs(ports: [f64; 4], imbalance: f64) -> (f64, f64) {
    let g1 = 1.0 + 0.5 * imbalance;
    let g2 = 1.0 - 0.5 * imbalance;
    (g1 * ports[0] - g2 * ports[1], g1 * ports[2] - g2 * ports[3])
}

/// Builds the detector waveforms for a pulse train and LO trajectory.
/// Detector noise for pulse `n` comes from its own substream of `cfg.seed`.
pub fn synthesize_heterodyne(train: &PulseTrain, lo: &LoModel, cfg: &SimConfig) -> Result<WaveformPair> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("pulse train is empty".into()));
    }
    if (train.sample_period - cfg.sample_period()).abs() > 1e-9 * cfg.sample_period() {
        return Err(param("pulse train and config disagree on the sample rate"));
    }
    let n_pulses = train.len();
    let ratio = cfg.samples_per_period();
    let total = (n_pulses as f64 * ratio).round() as usize;
    let bounds: Vec<usize> = (0..=n_pulses)
        .map(|n| ((n as f64 * ratio).ceil() as usize).min(total))
        .collect();
    let dt = cfg.sample_period();
    let mut i0 = vec![0.0; total];
    let mut i90 = vec![0.0; total];

    let mut chunks = Vec::with_capacity(n_pulses);
    {
        let (mut rest0, mut rest90) = (i0.as_mut_slice(), i90.as_mut_slice());
        for n in 0..n_pulses {
            let len = bounds[n + 1] - bounds[n];
            let (a, b) = rest0.split_at_mut(len);
            let (c, d) = rest90.split_at_mut(len);
            chunks.push((n, a, c));
            rest0 = b;
            rest90 = d;
        }
    }
    chunks.into_par_iter().for_each(|(n, out0, out90)| {
        let mut rng = substream(cfg.seed, Stream::DetectorNoise, n as u64);
        let start = bounds[n];
        for (k, (y0, y90)) in out0.iter_mut().zip(out90.iter_mut()).enumerate() {
            let j = start + k;
            let t = j as f64 * dt;
            let tau = (j as f64 - n as f64 * ratio) * dt;
            let amp = cfg.signal_amplitude * cfg.envelope_at(tau);
            let e_s = Complex64::from_polar(amp, train.phase_at(n, tau));
            let e_lo = Complex64::from_polar(lo.amplitude, lo.phase_at(t));
            let (a, b) = balanced_outputs(hybrid_port_intensities(e_s, e_lo), cfg.detector_imbalance);
            let (na, nb) = if cfg.noise_rms > 0.0 {
                (
                    cfg.noise_rms * rng.sample::<f64, _>(StandardNormal),
                    cfg.noise_rms * rng.sample::<f64, _>(StandardNormal),
                )
            } else {
                (0.0, 0.0)
            };
            *y0 = a + na;
            *y90 = b + nb;
        }
    });
    WaveformPair::new(i0, i90, dt, 0.0)
}

/// A full simulated acquisition with its ground truth.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    pub distribution: PhaseDistribution,
    pub train: PulseTrain,
    pub lo: LoModel,
    pub waveform: WaveformPair,
}

impl Simulation {
    pub fn run(cfg: &SimConfig, dist: &PhaseDistribution) -> Result<Self> {
        let train = generate_pulse_train(cfg, dist)?;
        let lo = LoModel::random_walk(cfg);
        let waveform = synthesize_heterodyne(&train, &lo, cfg)?;
        Ok(Self {
            config: *cfg,
            distribution: *dist,
            train,
            lo,
            waveform,
        })
    }

    /// True relative phase `theta_n(tau) - theta_LO(t)` of pulse `n` at
    /// sample `k` of its period, wrapped into `[-pi, pi)`.
    pub fn true_relative_phase(&self, n: usize, k: usize) -> f64 {
        let ratio = self.config.samples_per_period();
        let dt = self.config.sample_period();
        let j = (n as f64 * ratio).ceil() + k as f64;
        let tau = (j - n as f64 * ratio) * dt;
        wrap_angle(self.train.phase_at(n, tau) - self.lo.phase_at(j * dt))
    }

    /// Distribution of the relative phase at time `tau` into the period,
    /// neglecting the LO drift.
    pub fn relative_distribution_at(&self, tau: f64) -> PhaseDistribution {
        ground_truth_distribution(&self.distribution, &self.config, tau)
    }
}

/// Relative-phase distribution at `tau`: the pulse-phase law rotated by the
/// mean chirp and broadened by the chirp jitter, minus the LO start phase.
pub fn ground_truth_distribution(
    dist: &PhaseDistribution,
    cfg: &SimConfig,
    tau: f64,
) -> PhaseDistribution {
    let dt = tau - cfg.chirp_pivot;
    dist.shifted(cfg.chirp_rate * dt - cfg.lo_initial_phase)
        .broadened(cfg.chirp_jitter * dt.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circular::{circular_variance, resultant_length};
    use crate::rng::substream;

    #[test]
    fn delta_draws_are_exact() {
        let mut rng = substream(1, Stream::Misc, 0);
        let d = PhaseDistribution::Delta { center: 0.7 };
        for _ in 0..100 {
            assert_eq!(sample_phase(&d, &mut rng).unwrap(), 0.7);
        }
    }

    #[test]
    fn negative_width_is_a_parameter_error() {
        let mut rng = substream(1, Stream::Misc, 0);
        let d = PhaseDistribution::WrappedGaussian {
            center: 0.0,
            sigma: -0.1,
        };
        assert!(matches!(sample_phase(&d, &mut rng), Err(Error::Parameter(_))));
    }

    #[test]
    fn uniform_draws_pass_kolmogorov_smirnov() {
        let mut rng = substream(2, Stream::Misc, 0);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_phase(&PhaseDistribution::Uniform, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|x| (-PI..PI).contains(x)));
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = (x + PI) / TWO_PI;
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.002, "KS statistic {d}");
    }

    #[test]
    fn locking_map_limits() {
        let c = LockingCalibration::default();
        assert_eq!(
            locking_distribution(f64::NEG_INFINITY, 1.0, &c).unwrap(),
            PhaseDistribution::Uniform
        );
        assert_eq!(locking_distribution(-50.0, 0.0, &c).unwrap(), PhaseDistribution::Uniform);
        match locking_distribution(c.p_ref_dbm, 1.0, &c).unwrap() {
            PhaseDistribution::WrappedGaussian { sigma, .. } => {
                assert!((1.0 / (sigma * sigma) - c.kappa_ref).abs() < 1e-9 * c.kappa_ref)
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut last = 0.0;
        for i in 0..50 {
            let k = c.concentration(-120.0 + 2.0 * i as f64, 0.7);
            assert!(k > last);
            last = k;
        }
        assert!(locking_distribution(-50.0, 1.5, &c).is_err());
    }

    fn small_cfg() -> SimConfig {
        SimConfig {
            n_pulses: 200,
            sample_rate: 5e9,
            rise_time: 2e-9,
            seed: 11,
            ..SimConfig::default()
        }
    }

    #[test]
    fn default_acquisition_is_8000_pulses_over_200_us() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.n_pulses, 8000);
        assert!((cfg.acquisition_time() - 200e-6).abs() < 1e-15);
        assert_eq!(cfg.total_samples(), 8000 * 1250);
        let train = generate_pulse_train(&cfg, &PhaseDistribution::Uniform).unwrap();
        assert_eq!(train.len(), 8000);
        assert!(train.true_phases.iter().all(|p| (-PI..PI).contains(p)));
    }

    #[test]
    fn zero_pulses_is_empty_input() {
        let cfg = SimConfig {
            n_pulses: 0,
            ..SimConfig::default()
        };
        assert!(matches!(
            generate_pulse_train(&cfg, &PhaseDistribution::Uniform),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn uniform_train_has_unit_circular_variance() {
        let cfg = SimConfig::default();
        let train = generate_pulse_train(&cfg, &PhaseDistribution::Uniform).unwrap();
        let v = circular_variance(&train.true_phases);
        assert!((v - 1.0).abs() < 3.0 / (cfg.n_pulses as f64).sqrt(), "variance {v}");
        assert!(resultant_length(&train.true_phases) < 0.05);
    }

    #[test]
    fn no_chirp_means_constant_phase_within_pulse() {
        let cfg = small_cfg();
        let train = generate_pulse_train(&cfg, &PhaseDistribution::Uniform).unwrap();
        for n in 0..train.len() {
            assert_eq!(train.phase_at(n, 0.0), train.phase_at(n, 12e-9));
        }
    }

    #[test]
    fn envelope_vanishes_outside_the_pulse() {
        let cfg = SimConfig::default();
        let (a, b) = cfg.pulse_support();
        let n = cfg.samples_per_period() as usize;
        for j in 0..n {
            let tau = j as f64 * cfg.sample_period();
            let e = cfg.envelope_at(tau);
            if tau < a || tau > b {
                assert!(e < 0.01, "tau {tau}: {e}");
            }
        }
        assert_eq!(cfg.envelope_at(7e-9), 1.0);
    }

    #[test]
    fn lo_drift_stays_within_bound() {
        for seed in 0..20 {
            let cfg = SimConfig {
                seed,
                ..SimConfig::default()
            };
            let lo = LoModel::random_walk(&cfg);
            assert!(lo.max_excursion() <= cfg.lo_drift_bound);
            let end = lo.phase_at(cfg.acquisition_time());
            assert!((end - lo.phase_at(0.0)).abs() <= cfg.lo_drift_bound);
        }
    }

    #[test]
    fn quadratures_for_fixed_relative_phases() {
        let e_lo = Complex64::from_polar(0.5, 0.0);
        for &(phase, want0, want90) in &[(0.0, 1.0, 0.0), (PI / 2.0, 0.0, 1.0)] {
            let e_s = Complex64::from_polar(1.0, phase);
            let (i0, i90) = balanced_outputs(hybrid_port_intensities(e_s, e_lo), 0.0);
            assert!((i0 - want0).abs() < 1e-15);
            assert!((i90 - want90).abs() < 1e-15);
        }
    }

    #[test]
    fn port_construction_matches_closed_form() {
        let mut rng = substream(3, Stream::Misc, 0);
        for _ in 0..1000 {
            let a_s: f64 = rng.random_range(0.0..2.0);
            let a_lo: f64 = rng.random_range(0.1..2.0);
            let th: f64 = rng.random_range(-PI..PI);
            let th_lo: f64 = rng.random_range(-PI..PI);
            let e_s = Complex64::from_polar(a_s, th);
            let e_lo = Complex64::from_polar(a_lo, th_lo);
            let (i0, i90) = balanced_outputs(hybrid_port_intensities(e_s, e_lo), 0.0);
            let a = 2.0 * a_s * a_lo;
            assert!((i0 - a * (th - th_lo).cos()).abs() < 1e-12);
            assert!((i90 - a * (th - th_lo).sin()).abs() < 1e-12);
            assert!((i0 * i0 + i90 * i90 - a * a).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = small_cfg();
        let d = PhaseDistribution::WrappedVoigt {
            center: 0.4,
            sigma: 0.3,
            gamma: 0.1,
        };
        let a = Simulation::run(&cfg, &d).unwrap().waveform;
        let b = Simulation::run(&cfg, &d).unwrap().waveform;
        assert_eq!(a.i0, b.i0);
        assert_eq!(a.i90, b.i90);
        let c = Simulation::run(&SimConfig { seed: 12, ..cfg }, &d).unwrap().waveform;
        assert_ne!(a.i0, c.i0);
    }

    #[test]
    fn noiseless_pulse_amplitude_identity() {
        let cfg = SimConfig {
            noise_rms: 0.0,
            ..small_cfg()
        };
        let sim = Simulation::run(&cfg, &PhaseDistribution::Uniform).unwrap();
        let spp = cfg.samples_per_period() as usize;
        let wf = &sim.waveform;
        for n in [0, 17, 199] {
            for k in 0..spp {
                let j = n * spp + k;
                let tau = k as f64 * cfg.sample_period();
                let a = 2.0 * cfg.signal_amplitude * cfg.envelope_at(tau) * cfg.lo_amplitude;
                let got = wf.i0[j] * wf.i0[j] + wf.i90[j] * wf.i90[j];
                assert!((got - a * a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ground_truth_broadens_with_chirp_jitter() {
        let cfg = SimConfig {
            chirp_jitter: 1e8,
            chirp_pivot: 7e-9,
            ..SimConfig::default()
        };
        let d = PhaseDistribution::WrappedGaussian {
            center: 0.0,
            sigma: 0.5,
        };
        match ground_truth_distribution(&d, &cfg, 9e-9) {
            PhaseDistribution::WrappedGaussian { sigma, .. } => {
                assert!((sigma - (0.25f64 + 0.04).sqrt()).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
