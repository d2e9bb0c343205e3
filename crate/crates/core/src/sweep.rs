//! q_rel^min versus injected power and the isolation needed to keep an
//! attacker below the locking threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pipeline::{simulate_and_analyze, AnalysisConfig};
use crate::qrel::qrel_of_distribution;
use crate::rng::{derive_seed, Stream};
use crate::synth::{locking_distribution, LockingCalibration, SimConfig};
use crate::units::watts_to_dbm;

/// Default target as a fraction of the no-injection baseline.
pub const DEFAULT_TARGET_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sim: SimConfig,
    pub analysis: AnalysisConfig,
    pub calibration: LockingCalibration,
    /// Polarization coupling fraction applied at every power.
    pub eta: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            analysis: AnalysisConfig::for_sim(&sim),
            sim,
            calibration: LockingCalibration::default(),
            eta: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(with = "crate::units::dbm_serde")]
    pub power_dbm: f64,
    pub q_true: f64,
    pub q_rel_min: Option<f64>,
    pub q_err: Option<f64>,
    pub argmin_tau: Option<f64>,
    pub q_rel_min_integrated: Option<f64>,
    pub q_err_integrated: Option<f64>,
    pub failure: Option<String>,
    pub sim_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepResult {
    pub points: Vec<SweepPoint>,
    pub seed: u64,
}

impl PowerSweepResult {
    pub fn powers_dbm(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.power_dbm).collect()
    }

    /// Per-sample `(power, q)` pairs that were analyzed successfully.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.q_rel_min.map(|q| (p.power_dbm, q)))
            .collect()
    }

    /// Per-sample q_rel^min at the lowest analyzed power.
    pub fn baseline(&self) -> Option<f64> {
        self.curve().first().map(|&(_, q)| q)
    }

    pub fn isolation(&self, q_target: f64, lidt_watts: f64) -> Result<IsolationReport> {
        isolation_threshold(&self.curve(), q_target, lidt_watts)
    }
}

/// Simulates and analyzes one acquisition per power. Point `i` uses seeds
/// derived from `(cfg.seed, i)`, so points are independent of each other and
/// of the evaluation order.
pub fn power_sweep(powers_dbm: &[f64], cfg: &SweepConfig) -> Result<PowerSweepResult> {
    if powers_dbm.len() < 2 {
        return Err(param("a sweep needs at least 2 powers"));
    }
    if powers_dbm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(param("sweep powers must be strictly increasing"));
    }
    let points = powers_dbm
        .par_iter()
        .enumerate()
        .map(|(i, &p)| sweep_point(i, p, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerSweepResult {
        points,
        seed: cfg.seed,
    })
}

fn sweep_point(i: usize, power_dbm: f64, cfg: &SweepConfig) -> Result<SweepPoint> {
    let dist = locking_distribution(power_dbm, cfg.eta, &cfg.calibration)?;
    let sim_seed = derive_seed(cfg.seed, Stream::SweepPoint, i as u64);
    let sim = SimConfig {
        seed: sim_seed,
        ..cfg.sim
    };
    let mut analysis = cfg.analysis;
    analysis.qrel.seed = derive_seed(cfg.seed, Stream::Bootstrap, i as u64);
    let mut point = SweepPoint {
        power_dbm,
        q_true: qrel_of_distribution(&dist),
        q_rel_min: None,
        q_err: None,
        argmin_tau: None,
        q_rel_min_integrated: None,
        q_err_integrated: None,
        failure: None,
        sim_seed,
    };
    match simulate_and_analyze(&sim, &dist, &analysis) {
        Ok(a) => {
            point.q_rel_min = Some(a.curve.q_rel_min);
            point.q_err = a.curve.bootstrap.as_ref().map(|b| b.q_std);
            point.argmin_tau = Some(a.curve.argmin_tau);
            if let Some(c) = &a.integrated {
                point.q_rel_min_integrated = Some(c.q_rel_min);
                point.q_err_integrated = c.bootstrap.as_ref().map(|b| b.q_std);
            }
            if let Some(e) = a.integrated_error {
                point.failure = Some(format!("integrated: {e}"));
            }
        }
        Err(e @ Error::Parameter(_)) => return Err(e),
        Err(e) => point.failure = Some(e.to_string()),
    }
    Ok(point)
}

/// Attenuation that brings the damage-threshold power down to the locking
/// threshold, in dB.
pub fn isolation_db(threshold_dbm: f64, lidt_watts: f64) -> f64 {
    watts_to_dbm(lidt_watts) - threshold_dbm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationReport {
    pub q_target: f64,
    pub lidt_watts: f64,
    pub threshold_dbm: f64,
    pub isolation_db: f64,
}

/// Finds the highest power at or above `q_target` whose higher neighbours all
/// lie below it, interpolates linearly to the crossing, and converts to the
/// isolation needed against an attacker limited by `lidt_watts`.
pub fn isolation_threshold(
    curve: &[(f64, f64)],
    q_target: f64,
    lidt_watts: f64,
) -> Result<IsolationReport> {
    if !(lidt_watts > 0.0) {
        return Err(param(format!("LIDT must be positive, got {lidt_watts} W")));
    }
    if curve.len() < 2 {
        return Err(Error::ThresholdNotFound("need at least 2 sweep points".into()));
    }
    let last_above = curve.iter().rposition(|&(_, q)| q >= q_target);
    let j = match last_above {
        None => {
            return Err(Error::ThresholdNotFound(format!(
                "every point is below q_target = {q_target}"
            )))
        }
        Some(j) if j + 1 == curve.len() => {
            return Err(Error::ThresholdNotFound(format!(
                "highest power still reaches q_target = {q_target}"
            )))
        }
        Some(j) => j,
    };
    let (p0, q0) = curve[j];
    let (p1, q1) = curve[j + 1];
    let threshold_dbm = if q0 == q_target {
        p0
    } else {
        p0 + (q0 - q_target) / (q0 - q1) * (p1 - p0)
    };
    Ok(IsolationReport {
        q_target,
        lidt_watts,
        threshold_dbm,
        isolation_db: isolation_db(threshold_dbm, lidt_watts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_isolation_arithmetic() {
        assert_eq!(isolation_db(-90.0, 100.0), 140.0);
        assert_eq!(isolation_db(-90.0, 1e-3), 90.0);
    }

    #[test]
    fn threshold_interpolates_between_bracketing_points() {
        let curve = [(-100.0, 1.0), (-95.0, 0.995), (-85.0, 0.5), (-80.0, 0.1)];
        let r = isolation_threshold(&curve, 0.99, 100.0).unwrap();
        let want = -95.0 + 0.005 / 0.495 * 10.0;
        assert!((r.threshold_dbm - want).abs() < 1e-12);
    }

    #[test]
    fn exact_hit_gives_exact_isolation() {
        let curve = [(-100.0, 1.0), (-90.0, 0.99), (-80.0, 0.2)];
        let r = isolation_threshold(&curve, 0.99, 100.0).unwrap();
        assert_eq!(r.threshold_dbm, -90.0);
        assert_eq!(r.isolation_db, 140.0);
    }

    #[test]
    fn last_crossing_wins() {
        // A noisy dip below target at low power must not count.
        let curve = [(-110.0, 0.98), (-100.0, 1.0), (-90.0, 0.3)];
        let r = isolation_threshold(&curve, 0.99, 1.0).unwrap();
        assert!(r.threshold_dbm > -100.0 && r.threshold_dbm < -90.0);
    }

    #[test]
    fn missing_crossing_is_an_error() {
        let high = [(-100.0, 1.0), (-90.0, 0.999)];
        let low = [(-100.0, 0.5), (-90.0, 0.1)];
        assert!(matches!(
            isolation_threshold(&high, 0.99, 1.0),
            Err(Error::ThresholdNotFound(_))
        ));
        assert!(matches!(
            isolation_threshold(&low, 0.99, 1.0),
            Err(Error::ThresholdNotFound(_))
        ));
    }

    #[test]
    fn sweep_rejects_unsorted_powers() {
        assert!(power_sweep(&[-50.0, -60.0], &SweepConfig::default()).is_err());
        assert!(power_sweep(&[-50.0], &SweepConfig::default()).is_err());
    }
}
