//! Results container written by every subcommand.

use injlock::fockdiag::DensityMatrix;
use injlock::pipeline::Analysis;
use injlock::polscan::PolScanResult;
use injlock::sweep::{IsolationReport, PowerSweepResult};
use injlock::synth::PhaseDistribution;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::waveio::WaveFormat;

pub const SCHEMA_NAME: &str = "injlock.results";
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub seed: u64,
    pub tool_version: String,
    /// Taken from `SOURCE_DATE_EPOCH` when set; otherwise absent so that
    /// repeated runs produce identical files.
    pub created_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsContainer {
    pub schema: String,
    pub schema_version: u32,
    pub metadata: RunMetadata,
    /// Fully resolved configuration of the run.
    pub config: Value,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_sha256: String,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outputs {
    Simulate(SimulateOutput),
    Analyze(Box<AnalyzeOutput>),
    Sweep(Box<SweepOutput>),
    ScanPol(Box<ScanOutput>),
    Fock(Box<FockOutput>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub format: WaveFormat,
    pub waveform_sha256: String,
    pub n_samples: usize,
    pub n_pulses: usize,
    pub sample_period: f64,
    pub distribution: PhaseDistribution,
    /// q_rel of the relative-phase distribution at the chirp pivot.
    pub q_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutput {
    pub input_sha256: String,
    pub n_samples: usize,
    pub analysis: Analysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub sweep: PowerSweepResult,
    pub baseline_q: Option<f64>,
    pub q_target: Option<f64>,
    /// Threshold and isolation found from the simulated curve.
    pub isolation: Option<IsolationReport>,
    pub isolation_error: Option<String>,
    /// Isolation for an externally supplied threshold.
    pub isolation_at_given_threshold: Option<IsolationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutput {
    pub scan: PolScanResult,
    pub minima_agree: bool,
    pub minima_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockOutput {
    pub rho: DensityMatrix,
    pub offdiag_norm: f64,
    pub max_offdiag: f64,
    pub trace: f64,
    pub trace_deficit: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(config: &Value) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("JSON values always serialize"))
}

impl ResultsContainer {
    pub fn new(command: &str, seed: u64, config: Value, outputs: Outputs) -> Self {
        let created_unix = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse().ok());
        Self {
            schema: SCHEMA_NAME.into(),
            schema_version: SCHEMA_VERSION,
            metadata: RunMetadata {
                command: command.into(),
                seed,
                tool_version: TOOL_VERSION.into(),
                created_unix,
            },
            config_sha256: config_hash(&config),
            config,
            outputs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("container serializes");
        s.push('\n');
        s
    }

    /// Parses a container and checks its schema and configuration hash.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let c: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if c.schema != SCHEMA_NAME {
            return Err(format!("unknown schema \"{}\"", c.schema));
        }
        if c.schema_version != SCHEMA_VERSION {
            return Err(format!("unsupported schema version {}", c.schema_version));
        }
        let h = config_hash(&c.config);
        if h != c.config_sha256 {
            return Err(format!(
                "config hash mismatch: recorded {}, computed {h}",
                c.config_sha256
            ));
        }
        Ok(c)
    }
}
