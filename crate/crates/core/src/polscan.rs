//! Polarization scans over the Poincaré sphere.
//!
//! Each sphere point sets the coupling into the injected cavity, which sets
//! the locking strength; the scan records q_rel^min and, as a cheap proxy, the
//! single-photon-detector count rate of light reflected from the cavity.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pipeline::{simulate_and_analyze, AnalysisConfig};
use crate::qrel::BootstrapScope;
use crate::rng::{derive_seed, substream, Stream};
use crate::synth::{locking_distribution, LockingCalibration, SimConfig};

const UNIT_TOL: f64 = 1e-9;
pub const DEFAULT_GRID_POINTS: usize = 256;
pub const MIN_GRID_POINTS: usize = 16;

/// Normalized Stokes vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesState {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesState {
    pub fn new(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let s = Self { s1, s2, s3 };
        s.validate()?;
        Ok(s)
    }

    /// Scales an arbitrary non-zero vector onto the sphere.
    pub fn normalized(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let n = (s1 * s1 + s2 * s2 + s3 * s3).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Normalization(n));
        }
        Ok(Self {
            s1: s1 / n,
            s2: s2 / n,
            s3: s3 / n,
        })
    }

    /// State with azimuth `psi` and ellipticity angle `chi`.
    pub fn from_angles(psi: f64, chi: f64) -> Self {
        Self {
            s1: (2.0 * chi).cos() * (2.0 * psi).cos(),
            s2: (2.0 * chi).cos() * (2.0 * psi).sin(),
            s3: (2.0 * chi).sin(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
            return Err(Error::Normalization(n));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3
    }

    /// Great-circle distance on the unit sphere.
    pub fn angle_to(&self, other: &Self) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }

    /// Uniformly distributed random state.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).sqrt();
        Self {
            s1: r * phi.cos(),
            s2: r * phi.sin(),
            s3: z,
        }
    }
}

/// Fraction of injected power coupled into the cavity mode.
pub fn coupling_efficiency(state: &StokesState, optimal: &StokesState) -> Result<f64> {
    state.validate()?;
    optimal.validate()?;
    Ok((0.5 * (1.0 + state.dot(optimal))).clamp(0.0, 1.0))
}

/// Reflection seen by the single-photon detector: a floor plus a part that
/// grows as less light enters (and is absorbed in) the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdConfig {
    /// Counts per second at full coupling.
    pub r_floor: f64,
    /// Additional counts per second at zero coupling.
    pub r_peak: f64,
    /// Integration time per sphere point, in seconds.
    pub dwell: f64,
}

impl Default for SpdConfig {
    fn default() -> Self {
        Self {
            r_floor: 1.0e3,
            r_peak: 1.0e5,
            dwell: 0.1,
        }
    }
}

impl SpdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_floor >= 0.0 && self.r_peak >= 0.0 && self.dwell >= 0.0) {
            return Err(param("SPD rates and dwell must be non-negative"));
        }
        Ok(())
    }

    pub fn mean_counts(&self, eta: f64) -> f64 {
        (self.r_floor + self.r_peak * (1.0 - eta)) * self.dwell
    }
}

/// Poisson-distributed SPD count for one sphere point.
pub fn reflected_counts<R: Rng + ?Sized>(
    state: &StokesState,
    optimal: &StokesState,
    spd: &SpdConfig,
    rng: &mut R,
) -> Result<u64> {
    spd.validate()?;
    let mean = spd.mean_counts(coupling_efficiency(state, optimal)?);
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| param(e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SphereGrid {
    Fibonacci { n: usize },
    /// Regular grid in azimuth `[0, pi)` and ellipticity `(-pi/4, pi/4)`.
    AzimuthEllipticity { n_azimuth: usize, n_ellipticity: usize },
}

impl Default for SphereGrid {
    fn default() -> Self {
        Self::Fibonacci {
            n: DEFAULT_GRID_POINTS,
        }
    }
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        match *self {
            Self::Fibonacci { n } => n,
            Self::AzimuthEllipticity {
                n_azimuth,
                n_ellipticity,
            } => n_azimuth * n_ellipticity,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<StokesState> {
        match *self {
            Self::Fibonacci { n } => {
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..n)
                    .map(|i| {
                        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                        let r = (1.0 - z * z).sqrt();
                        let phi = golden * i as f64;
                        StokesState {
                            s1: r * phi.cos(),
                            s2: r * phi.sin(),
                            s3: z,
                        }
                    })
                    .collect()
            }
            Self::AzimuthEllipticity {
                n_azimuth,
                n_ellipticity,
            } => {
                let mut out = Vec::with_capacity(n_azimuth * n_ellipticity);
                for j in 0..n_ellipticity {
                    let chi = -PI / 4.0 + (j as f64 + 0.5) * (PI / 2.0) / n_ellipticity as f64;
                    for i in 0..n_azimuth {
                        let psi = i as f64 * PI / n_azimuth as f64;
                        out.push(StokesState::from_angles(psi, chi));
                    }
                }
                out
            }
        }
    }

    /// Typical point spacing, `sqrt(4 pi / n)`.
    pub fn cell_size(&self) -> f64 {
        (4.0 * PI / self.len().max(1) as f64).sqrt()
    }
}

/// Two states lie within one grid cell of each other when they are at most
/// this many cell sizes apart.
pub const CELL_TOLERANCE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolScanConfig {
    pub grid: SphereGrid,
    #[serde(with = "crate::units::dbm_serde")]
    pub power_dbm: f64,
    pub optimal: StokesState,
    pub sim: SimConfig,
    pub analysis: AnalysisConfig,
    pub calibration: LockingCalibration,
    pub spd: SpdConfig,
    pub seed: u64,
}

impl Default for PolScanConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let mut analysis = AnalysisConfig::for_sim(&sim);
        analysis.qrel.bootstrap = BootstrapScope::None;
        analysis.integrated = false;
        Self {
            grid: SphereGrid::default(),
            power_dbm: -55.3,
            optimal: StokesState {
                s1: 1.0,
                s2: 0.0,
                s3: 0.0,
            },
            sim,
            analysis,
            calibration: LockingCalibration::default(),
            spd: SpdConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolScanResult {
    pub states: Vec<StokesState>,
    pub eta: Vec<f64>,
    pub q_rel_min: Vec<Option<f64>>,
    pub spd_counts: Vec<u64>,
    pub failed: Vec<FailedPoint>,
    pub argmin_q: Option<usize>,
    pub argmin_counts: usize,
    pub cell_size: f64,
    pub seed: u64,
}

impl PolScanResult {
    pub fn argmin_q_state(&self) -> Option<StokesState> {
        self.argmin_q.map(|i| self.states[i])
    }

    pub fn argmin_counts_state(&self) -> StokesState {
        self.states[self.argmin_counts]
    }

    /// Whether the two heatmap minima fall within one grid cell.
    pub fn minima_agree(&self) -> bool {
        match self.argmin_q_state() {
            Some(q) => q.angle_to(&self.argmin_counts_state()) <= CELL_TOLERANCE * self.cell_size,
            None => false,
        }
    }
}

/// Runs the simulation and analysis at every grid point. The effective
/// injected power is `eta * P`.
pub fn scan_sphere(cfg: &PolScanConfig) -> Result<PolScanResult> {
    if cfg.grid.len() < MIN_GRID_POINTS {
        return Err(param(format!(
            "sphere grid needs at least {MIN_GRID_POINTS} points, got {}",
            cfg.grid.len()
        )));
    }
    cfg.optimal.validate()?;
    cfg.spd.validate()?;
    let states = cfg.grid.points();
    let rows: Vec<Result<(f64, std::result::Result<f64, String>, u64)>> = states
        .par_iter()
        .enumerate()
        .map(|(i, s)| scan_point(i, s, cfg))
        .collect();
    let mut eta = Vec::with_capacity(states.len());
    let mut q_rel_min = Vec::with_capacity(states.len());
    let mut spd_counts = Vec::with_capacity(states.len());
    let mut failed = Vec::new();
    for (index, row) in rows.into_iter().enumerate() {
        let (e, q, c) = row?;
        eta.push(e);
        spd_counts.push(c);
        match q {
            Ok(q) => q_rel_min.push(Some(q)),
            Err(reason) => {
                q_rel_min.push(None);
                failed.push(FailedPoint { index, reason });
            }
        }
    }
    let argmin_q = q_rel_min
        .iter()
        .enumerate()
        .filter_map(|(i, q)| q.map(|q| (i, q)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let argmin_counts = spd_counts
        .iter()
        .enumerate()
        .min_by_key(|(_, c)| **c)
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(PolScanResult {
        states,
        eta,
        q_rel_min,
        spd_counts,
        failed,
        argmin_q,
        argmin_counts,
        cell_size: cfg.grid.cell_size(),
        seed: cfg.seed,
    })
}

fn scan_point(
    i: usize,
    state: &StokesState,
    cfg: &PolScanConfig,
) -> Result<(f64, std::result::Result<f64, String>, u64)> {
    let eta = coupling_efficiency(state, &cfg.optimal)?;
    let dist = locking_distribution(cfg.power_dbm, eta, &cfg.calibration)?;
    let sim = SimConfig {
        seed: derive_seed(cfg.seed, Stream::ScanPoint, i as u64),
        ..cfg.sim
    };
    let mut analysis = cfg.analysis;
    analysis.qrel.seed = derive_seed(cfg.seed, Stream::Bootstrap, i as u64);
    let q = match simulate_and_analyze(&sim, &dist, &analysis) {
        Ok(a) => Ok(a.curve.q_rel_min),
        Err(e @ Error::Parameter(_)) => return Err(e),
        Err(e) => Err(e.to_string()),
    };
    let mut rng = substream(cfg.seed, Stream::Photon, i as u64);
    let counts = reflected_counts(state, &cfg.optimal, &cfg.spd, &mut rng)?;
    Ok((eta, q, counts))
}
