//! Waveform-to-q_rel analysis chain shared by the sweep, the polarization scan
//! and the command-line tool.

use serde::{Deserialize, Serialize};

use crate::circfit::PhaseHistogram;
use crate::error::Result;
use crate::phasex::{
    integrate_pulse, phase_matrix, segment_pulses, select_window, PulsePhaseMatrix, WaveformPair,
    Window, WindowSpec,
};
use crate::qrel::{
    histogram_lower_bound, qrel_integrated, qrel_timeseries, HistogramBound, QRelCurve,
    QRelOptions,
};
use crate::synth::{PhaseDistribution, SimConfig, Simulation};

pub const DEFAULT_MAX_TAU: usize = 50;
pub const DEFAULT_BOUND_BINS: usize = 32;
pub const DEFAULT_BOUND_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub rep_rate: f64,
    /// Time of the first pulse start in the record, in seconds.
    pub trigger_offset: f64,
    pub window: WindowSpec,
    /// Upper limit on analyzed window samples; the window is thinned evenly.
    pub max_tau: usize,
    pub qrel: QRelOptions,
    /// Also analyze window-integrated quadratures.
    pub integrated: bool,
    pub bound_bins: usize,
    pub bound_confidence: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            rep_rate: SimConfig::default().rep_rate,
            trigger_offset: 0.0,
            window: WindowSpec::default(),
            max_tau: DEFAULT_MAX_TAU,
            qrel: QRelOptions::default(),
            integrated: true,
            bound_bins: DEFAULT_BOUND_BINS,
            bound_confidence: DEFAULT_BOUND_CONFIDENCE,
        }
    }
}

impl AnalysisConfig {
    /// Defaults matched to a simulation's repetition rate.
    pub fn for_sim(cfg: &SimConfig) -> Self {
        Self {
            rep_rate: cfg.rep_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub n_pulses: usize,
    pub window: Window,
    pub masked_samples: usize,
    pub curve: QRelCurve,
    pub integrated: Option<QRelCurve>,
    pub integrated_error: Option<String>,
    /// Phase histogram at the q_rel minimum.
    pub argmin_histogram: PhaseHistogram,
    /// Model-free bound at the q_rel minimum, when there are enough pulses.
    pub bound: Option<HistogramBound>,
}

impl Analysis {
    pub fn q_rel_min(&self) -> f64 {
        self.curve.q_rel_min
    }
}

/// Runs segmentation, window selection, phase extraction and the per-sample
/// and integrated q_rel analyses.
pub fn analyze(wf: &WaveformPair, cfg: &AnalysisConfig) -> Result<Analysis> {
    let segs = segment_pulses(wf, cfg.rep_rate, cfg.trigger_offset)?;
    let window = select_window(&segs, &cfg.window)?.with_max_samples(cfg.max_tau);
    let matrix = phase_matrix(&segs, &window)?;
    let curve = qrel_timeseries(&matrix, &cfg.qrel)?;
    let (integrated, integrated_error) = if cfg.integrated {
        let centre = 0.5 * (window.start_time() + window.end_time());
        match integrate_pulse(&segs, &window)
            .and_then(|ip| qrel_integrated(&ip.phases, centre, &cfg.qrel))
        {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let column = argmin_column(&matrix, &curve);
    let argmin_histogram = PhaseHistogram::from_phases(&column, cfg.qrel.bins)?;
    let bound = histogram_lower_bound(&column, cfg.bound_bins, cfg.bound_confidence).ok();
    Ok(Analysis {
        n_pulses: matrix.n_pulses,
        masked_samples: matrix.masked_count(),
        window,
        curve,
        integrated,
        integrated_error,
        argmin_histogram,
        bound,
    })
}

fn argmin_column(matrix: &PulsePhaseMatrix, curve: &QRelCurve) -> Vec<f64> {
    let w = matrix
        .tau
        .iter()
        .position(|&t| t == curve.argmin_tau)
        .unwrap_or(0);
    matrix.column(w)
}

/// Simulates an acquisition and analyzes it.
pub fn simulate_and_analyze(
    sim: &SimConfig,
    dist: &PhaseDistribution,
    cfg: &AnalysisConfig,
) -> Result<Analysis> {
    let run = Simulation::run(sim, dist)?;
    analyze(&run.waveform, cfg)
}
