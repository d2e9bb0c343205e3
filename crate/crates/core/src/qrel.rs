//! Relative q-parameter: `2 pi` times the minimum of the relative phase
//! density, per analysis sample and minimized over the window.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::circfit::{
    fit_wrapped_voigt, FitOptions, FitResult, PhaseHistogram, WrappedVoigtParams, DEFAULT_BINS,
    MIN_FIT_SAMPLES,
};
use crate::error::{param, Error, Result};
use crate::phasex::PulsePhaseMatrix;
use crate::rng::{substream, Stream};
use crate::synth::PhaseDistribution;

const TWO_PI: f64 = 2.0 * PI;

/// Grid resolution for the density minimum.
pub const QREL_GRID: usize = 4096;
pub const DEFAULT_RESAMPLES: usize = 50;
/// Largest tolerated fraction of failed bootstrap refits.
pub const MAX_BOOTSTRAP_FAILURE: f64 = 0.2;
/// Minimum samples per bin for the model-free bound.
pub const MIN_SAMPLES_PER_BIN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRelMethod {
    VoigtFit,
    HistogramBound,
    IntegratedPulse,
}

/// Which window samples receive bootstrap error bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapScope {
    None,
    #[default]
    Argmin,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QRelOptions {
    pub bins: usize,
    pub fit: FitOptions,
    pub bootstrap: BootstrapScope,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for QRelOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            fit: FitOptions::default(),
            bootstrap: BootstrapScope::Argmin,
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

/// Bootstrap statistics of q_rel at one window sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub q_mean: f64,
    /// Sample standard deviation over successful resamples.
    pub q_std: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub n_resamples: usize,
    pub n_failed: usize,
    pub seed: u64,
    pub samples: Vec<f64>,
}

/// A window sample whose fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTau {
    pub index: usize,
    pub tau: f64,
    pub reason: String,
}

/// q_rel over the analysis window. Only successfully fitted samples appear in
/// the arrays; the others are listed in `failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRelCurve {
    pub method: QRelMethod,
    pub tau: Vec<f64>,
    pub q_rel: Vec<f64>,
    pub q_err: Vec<Option<f64>>,
    pub fits: Vec<FitResult>,
    pub failed: Vec<FailedTau>,
    pub q_rel_min: f64,
    pub argmin_tau: f64,
    pub argmin_index: usize,
    pub bootstrap: Option<BootstrapSummary>,
    pub options: QRelOptions,
}

/// `2 pi min f_w` over a uniform 4096-point grid, clamped to `(0, 1]`.
pub fn qrel_from_pdf(params: &WrappedVoigtParams) -> f64 {
    let step = TWO_PI / QREL_GRID as f64;
    let min = (0..QREL_GRID)
        .map(|j| params.pdf(-PI + j as f64 * step))
        .fold(f64::INFINITY, f64::min);
    (TWO_PI * min).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Ground-truth q_rel of a phase distribution on the same grid. The point mass
/// gives 0.
pub fn qrel_of_distribution(dist: &PhaseDistribution) -> f64 {
    let step = TWO_PI / QREL_GRID as f64;
    let mut min = f64::INFINITY;
    for j in 0..QREL_GRID {
        match dist.density(-PI + j as f64 * step) {
            Some(d) => min = min.min(d),
            None => return 0.0,
        }
    }
    (TWO_PI * min).clamp(0.0, 1.0)
}

fn fit_q(phases: &[f64], opts: &QRelOptions) -> Result<(f64, FitResult)> {
    let hist = PhaseHistogram::from_phases(phases, opts.bins)?;
    let fit = fit_wrapped_voigt(&hist, None, &opts.fit)?;
    Ok((qrel_from_pdf(&fit.params), fit))
}

/// Fits every window sample and reports q_rel and its minimum.
pub fn qrel_timeseries(matrix: &PulsePhaseMatrix, opts: &QRelOptions) -> Result<QRelCurve> {
    if matrix.n_tau() == 0 {
        return Err(Error::EmptyInput("phase matrix has no window samples".into()));
    }
    if (matrix.n_pulses as u64) < MIN_FIT_SAMPLES {
        return Err(Error::FitRefused(format!(
            "{} pulses is below the minimum of {MIN_FIT_SAMPLES}",
            matrix.n_pulses
        )));
    }
    let outcomes: Vec<Result<(f64, FitResult)>> = (0..matrix.n_tau())
        .into_par_iter()
        .map(|w| fit_q(&matrix.column(w), opts))
        .collect();
    let mut curve = assemble(QRelMethod::VoigtFit, &matrix.tau, outcomes, *opts)?;
    match opts.bootstrap {
        BootstrapScope::None => {}
        BootstrapScope::Argmin => {
            let w = curve_column(&curve, matrix);
            let b = bootstrap_ci(&matrix.column(w), opts)?;
            curve.q_err[curve.argmin_index] = Some(b.q_std);
            curve.bootstrap = Some(b);
        }
        BootstrapScope::All => {
            let summaries: Vec<Result<BootstrapSummary>> = curve
                .tau
                .par_iter()
                .map(|&t| {
                    let w = matrix.tau.iter().position(|&x| x == t).expect("tau from matrix");
                    bootstrap_ci(&matrix.column(w), opts)
                })
                .collect();
            for (i, s) in summaries.into_iter().enumerate() {
                let s = s?;
                curve.q_err[i] = Some(s.q_std);
                if i == curve.argmin_index {
                    curve.bootstrap = Some(s);
                }
            }
        }
    }
    Ok(curve)
}

fn curve_column(curve: &QRelCurve, matrix: &PulsePhaseMatrix) -> usize {
    matrix
        .tau
        .iter()
        .position(|&x| x == curve.argmin_tau)
        .expect("argmin tau comes from the matrix")
}

fn assemble(
    method: QRelMethod,
    taus: &[f64],
    outcomes: Vec<Result<(f64, FitResult)>>,
    options: QRelOptions,
) -> Result<QRelCurve> {
    let mut tau = Vec::new();
    let mut q_rel = Vec::new();
    let mut fits = Vec::new();
    let mut failed = Vec::new();
    for (index, (t, out)) in taus.iter().zip(outcomes).enumerate() {
        match out {
            Ok((q, fit)) => {
                tau.push(*t);
                q_rel.push(q);
                fits.push(fit);
            }
            Err(e) => failed.push(FailedTau {
                index,
                tau: *t,
                reason: e.to_string(),
            }),
        }
    }
    if q_rel.is_empty() {
        let reason = failed.first().map(|f| f.reason.clone()).unwrap_or_default();
        return Err(Error::FitRefused(format!(
            "no window sample could be fitted ({reason})"
        )));
    }
    let (argmin_index, q_rel_min) = q_rel
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, q)| if q < acc.1 { (i, q) } else { acc });
    Ok(QRelCurve {
        method,
        q_err: vec![None; tau.len()],
        argmin_tau: tau[argmin_index],
        argmin_index,
        tau,
        q_rel,
        fits,
        failed,
        q_rel_min,
        bootstrap: None,
        options,
    })
}

/// q_rel from one phase per pulse (window-integrated quadratures), reported
/// at `tau_center`.
pub fn qrel_integrated(phases: &[f64], tau_center: f64, opts: &QRelOptions) -> Result<QRelCurve> {
    let out = fit_q(phases, opts);
    if let Err(e) = &out {
        if !matches!(e, Error::NonConvergence { .. }) {
            return Err(out.unwrap_err());
        }
    }
    let mut curve = assemble(QRelMethod::IntegratedPulse, &[tau_center], vec![out], *opts)?;
    if opts.bootstrap != BootstrapScope::None {
        let b = bootstrap_ci(phases, opts)?;
        curve.q_err[0] = Some(b.q_std);
        curve.bootstrap = Some(b);
    }
    Ok(curve)
}

/// Resamples the phases with replacement `opts.n_resamples` times, refits and
/// summarizes q_rel. Resample `i` draws from its own substream of `opts.seed`.
pub fn bootstrap_ci(phases: &[f64], opts: &QRelOptions) -> Result<BootstrapSummary> {
    if (phases.len() as u64) < MIN_FIT_SAMPLES {
        return Err(Error::FitRefused(format!(
            "{} samples is below the minimum of {MIN_FIT_SAMPLES}",
            phases.len()
        )));
    }
    if opts.n_resamples < 2 {
        return Err(param("bootstrap needs at least 2 resamples"));
    }
    // The full data must be fittable; this surfaces degenerate input directly.
    fit_q(phases, opts)?;
    let n = phases.len();
    let outcomes: Vec<Option<f64>> = (0..opts.n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(opts.seed, Stream::Bootstrap, i as u64);
            let sample: Vec<f64> = (0..n).map(|_| phases[rng.random_range(0..n)]).collect();
            fit_q(&sample, opts).ok().map(|(q, _)| q)
        })
        .collect();
    let samples: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let n_failed = opts.n_resamples - samples.len();
    if n_failed as f64 > MAX_BOOTSTRAP_FAILURE * opts.n_resamples as f64 || samples.len() < 2 {
        return Err(Error::BootstrapUnstable {
            failed: n_failed,
            total: opts.n_resamples,
        });
    }
    let m = samples.len() as f64;
    let q_mean = samples.iter().sum::<f64>() / m;
    let q_std = (samples.iter().map(|q| (q - q_mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        q_mean,
        q_std,
        p2_5: percentile(&sorted, 0.025),
        p97_5: percentile(&sorted, 0.975),
        n_resamples: opts.n_resamples,
        n_failed,
        seed: opts.seed,
        samples,
    })
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Model-free lower confidence bound on q_rel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBound {
    pub q_bound: f64,
    pub bins: usize,
    pub confidence: f64,
    /// Lower confidence bound on each bin's probability.
    pub p_lower: Vec<f64>,
    pub empty_bins: Vec<usize>,
}

/// One-sided Clopper–Pearson lower bound on each bin probability at level
/// `1 - eps/B`, turned into a density bound by dividing by the bin width.
/// Empty bins contribute a bound of zero and are listed in `empty_bins`.
pub fn histogram_lower_bound(phases: &[f64], bins: usize, confidence: f64) -> Result<HistogramBound> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(param(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    if bins == 0 {
        return Err(param("need at least one bin"));
    }
    if phases.len() < bins * MIN_SAMPLES_PER_BIN {
        return Err(Error::FitRefused(format!(
            "{} samples is below {MIN_SAMPLES_PER_BIN} per bin for {bins} bins",
            phases.len()
        )));
    }
    let hist = PhaseHistogram::from_phases(phases, bins)?;
    let n = hist.total as f64;
    let alpha = (1.0 - confidence) / bins as f64;
    let p_lower: Vec<f64> = hist
        .counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                inv_beta_reg(c as f64, n - c as f64 + 1.0, alpha)
            }
        })
        .collect();
    let min_density = p_lower
        .iter()
        .zip(hist.widths())
        .map(|(p, w)| p / w)
        .fold(f64::INFINITY, f64::min);
    let empty_bins = hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| i)
        .collect();
    Ok(HistogramBound {
        q_bound: (TWO_PI * min_density).clamp(0.0, 1.0),
        bins,
        confidence,
        p_lower,
        empty_bins,
    })
}
