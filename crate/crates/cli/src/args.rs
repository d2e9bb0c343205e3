use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::waveio::WaveFormat;

#[derive(Debug, Parser)]
#[command(
    name = "injlock",
    version,
    about = "Simulate and analyze phase de-randomization of gain-switched lasers under injection"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path. Results containers go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Waveform file format (written by `simulate`, forced on `analyze`).
    #[arg(long, global = true, value_enum)]
    pub format: Option<WaveFormat>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a balanced-detector waveform pair.
    Simulate(SimulateArgs),
    /// Extract phases from a waveform and compute q_rel.
    Analyze(AnalyzeArgs),
    /// Sweep the injected power and derive the isolation requirement.
    Sweep(SweepArgs),
    /// Scan the injected polarization over the Poincaré sphere.
    ScanPol(ScanArgs),
    /// Photon-number density matrix of a phase-mixed coherent state.
    Fock(FockArgs),
    /// Summarize a results container.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n_pulses: Option<usize>,
    /// Samples per second.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub rep_rate: Option<f64>,
    #[arg(long)]
    pub noise_rms: Option<f64>,
    /// Phase distribution as JSON, e.g. '{"kind":"wrapped_gaussian","center":0,"sigma":0.5}'.
    #[arg(long)]
    pub distribution: Option<String>,
    /// Derive the phase distribution from this injected power instead.
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
    /// Polarization coupling fraction used with --power-dbm.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BootstrapArg {
    None,
    Argmin,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Unweighted,
    Poisson,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[arg(long)]
    pub rep_rate: Option<f64>,
    /// Start of the first pulse period in the record, in seconds.
    #[arg(long)]
    pub trigger_offset: Option<f64>,
    /// Amplitude-threshold window as a fraction of the envelope peak.
    #[arg(long)]
    pub window_threshold: Option<f64>,
    /// Explicit window start, in seconds into the period (needs --window-end).
    #[arg(long, requires = "window_end")]
    pub window_start: Option<f64>,
    #[arg(long, requires = "window_start")]
    pub window_end: Option<f64>,
    #[arg(long)]
    pub max_tau: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long, value_enum)]
    pub bootstrap: Option<BootstrapArg>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    /// Skip the window-integrated analysis.
    #[arg(long)]
    pub no_integrated: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Waveform file (text or QRW1 binary).
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Comma-separated injected powers in dBm, strictly increasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub powers: Option<Vec<f64>>,
    /// Laser-induced damage threshold of the link, in watts.
    #[arg(long)]
    pub lidt_watts: Option<f64>,
    /// q_rel target as a fraction of the lowest-power (no-injection) value.
    #[arg(long)]
    pub target_fraction: Option<f64>,
    /// Also report the isolation for this externally established threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold_dbm: Option<f64>,
    #[arg(long)]
    pub n_pulses: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    /// Number of Fibonacci-lattice points on the sphere.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
    /// Optimal Stokes vector as s1,s2,s3 (normalized on input).
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    pub optimal: Option<Vec<f64>>,
    #[arg(long)]
    pub n_pulses: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FockArgs {
    /// Mean photon number.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub n_max: Option<i64>,
    /// Phase distribution as JSON.
    #[arg(long, conflicts_with = "fit_from")]
    pub distribution: Option<String>,
    /// Use the fitted density at the q_rel minimum of an `analyze` container.
    #[arg(long)]
    pub fit_from: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Results container to summarize.
    #[arg(long)]
    pub input: PathBuf,
}
