use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use injlock::circfit::Weighting;
use injlock::fockdiag::{density_matrix, offdiag_norm, PhaseSource};
use injlock::phasex::WindowSpec;
use injlock::pipeline::{analyze, AnalysisConfig};
use injlock::polscan::{scan_sphere, PolScanConfig, SphereGrid, StokesState};
use injlock::qrel::{qrel_of_distribution, BootstrapScope};
use injlock::sweep::{isolation_db, power_sweep, IsolationReport, SweepConfig};
use injlock::synth::{locking_distribution, LockingCalibration, PhaseDistribution, SimConfig, Simulation};
use injlock::units::dbm_serde;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::container::*;
use crate::error::CliError;
use crate::waveio::{parse_waveform, write_waveform, WaveFormat};

type Result<T> = std::result::Result<T, CliError>;

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn to_value<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("configurations serialize")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn to_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Io(format!("cannot write to stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn table_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

/// Writes the container (and the table next to it) or prints the container.
fn emit(common: &CommonArgs, container: &ResultsContainer, table: Option<String>) -> Result<()> {
    match &common.out {
        Some(p) => {
            write_file(p, container.to_json().as_bytes())?;
            if let Some(t) = table {
                write_file(&table_path(p), t.as_bytes())?;
            }
        }
        None => to_stdout(&container.to_json())?,
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn parse_distribution(json: &str) -> Result<PhaseDistribution> {
    let d: PhaseDistribution = serde_json::from_str(json)
        .map_err(|e| CliError::Config(format!("--distribution: {e}")))?;
    d.validate()?;
    Ok(d)
}

fn apply_analysis_args(cfg: &mut AnalysisConfig, a: &AnalysisArgs) {
    if let Some(v) = a.rep_rate {
        cfg.rep_rate = v;
    }
    if let Some(v) = a.trigger_offset {
        cfg.trigger_offset = v;
    }
    if let Some(v) = a.window_threshold {
        cfg.window = WindowSpec::AmplitudeThreshold { threshold_frac: v };
    }
    if let (Some(start), Some(end)) = (a.window_start, a.window_end) {
        cfg.window = WindowSpec::Explicit { start, end };
    }
    if let Some(v) = a.max_tau {
        cfg.max_tau = v;
    }
    if let Some(v) = a.bins {
        cfg.qrel.bins = v;
    }
    if let Some(v) = a.resamples {
        cfg.qrel.n_resamples = v;
    }
    if let Some(b) = a.bootstrap {
        cfg.qrel.bootstrap = match b {
            BootstrapArg::None => BootstrapScope::None,
            BootstrapArg::Argmin => BootstrapScope::Argmin,
            BootstrapArg::All => BootstrapScope::All,
        };
    }
    if let Some(w) = a.weighting {
        cfg.qrel.fit.weighting = match w {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::Poisson => Weighting::Poisson,
        };
    }
    if a.no_integrated {
        cfg.integrated = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockingSpec {
    #[serde(with = "dbm_serde")]
    pub power_dbm: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub calibration: LockingCalibration,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub sim: SimConfig,
    pub distribution: PhaseDistribution,
    /// When present, replaces `distribution` by the locking map.
    pub locking: Option<LockingSpec>,
    pub format: WaveFormat,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            distribution: PhaseDistribution::Uniform,
            locking: None,
            format: WaveFormat::Binary,
        }
    }
}

pub fn simulate(common: &CommonArgs, a: &SimulateArgs) -> Result<()> {
    let mut cfg: SimulateConfig = load_config(common.config.as_deref())?;
    if let Some(v) = common.seed {
        cfg.sim.seed = v;
    }
    if let Some(f) = common.format {
        cfg.format = f;
    }
    if let Some(v) = a.n_pulses {
        cfg.sim.n_pulses = v;
    }
    if let Some(v) = a.sample_rate {
        cfg.sim.sample_rate = v;
    }
    if let Some(v) = a.rep_rate {
        cfg.sim.rep_rate = v;
    }
    if let Some(v) = a.noise_rms {
        cfg.sim.noise_rms = v;
    }
    if let Some(d) = &a.distribution {
        cfg.distribution = parse_distribution(d)?;
        cfg.locking = None;
    }
    if let Some(p) = a.power_dbm {
        let mut spec = cfg.locking.unwrap_or(LockingSpec {
            power_dbm: p,
            eta: 1.0,
            calibration: LockingCalibration::default(),
        });
        spec.power_dbm = p;
        cfg.locking = Some(spec);
    }
    if let (Some(e), Some(spec)) = (a.eta, cfg.locking.as_mut()) {
        spec.eta = e;
    }
    if let Some(spec) = cfg.locking {
        cfg.distribution = locking_distribution(spec.power_dbm, spec.eta, &spec.calibration)?;
    }
    let out = common
        .out
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs --out for the waveform file".into()))?;
    let run = Simulation::run(&cfg.sim, &cfg.distribution)?;
    let mut bytes = Vec::new();
    write_waveform(&run.waveform, cfg.format, &mut bytes)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_file(out, &bytes)?;
    let q_true = qrel_of_distribution(&run.relative_distribution_at(cfg.sim.chirp_pivot));
    let outputs = Outputs::Simulate(SimulateOutput {
        format: cfg.format,
        waveform_sha256: sha256_hex(&bytes),
        n_samples: run.waveform.len(),
        n_pulses: cfg.sim.n_pulses,
        sample_period: run.waveform.sample_period,
        distribution: cfg.distribution,
        q_true,
    });
    let container = ResultsContainer::new("simulate", cfg.sim.seed, to_value(&cfg), outputs);
    let mut meta = out.as_os_str().to_owned();
    meta.push(".json");
    write_file(Path::new(&meta), container.to_json().as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub analysis: AnalysisConfig,
    /// Forces the waveform parser; detected from the magic bytes otherwise.
    pub format: Option<WaveFormat>,
}

pub fn analyze_cmd(common: &CommonArgs, a: &AnalyzeArgs) -> Result<()> {
    let mut cfg: AnalyzeConfig = load_config(common.config.as_deref())?;
    if let Some(v) = common.seed {
        cfg.analysis.qrel.seed = v;
    }
    if common.format.is_some() {
        cfg.format = common.format;
    }
    apply_analysis_args(&mut cfg.analysis, &a.analysis);
    let bytes = fs::read(&a.input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", a.input.display())))?;
    let wf = parse_waveform(&bytes, cfg.format)?;
    let analysis = analyze(&wf, &cfg.analysis)?;
    let table = analysis_table(&analysis);
    let outputs = Outputs::Analyze(Box::new(AnalyzeOutput {
        input_sha256: sha256_hex(&bytes),
        n_samples: wf.len(),
        analysis,
    }));
    let container = ResultsContainer::new("analyze", cfg.analysis.qrel.seed, to_value(&cfg), outputs);
    emit(common, &container, Some(table))
}

fn analysis_table(a: &injlock::pipeline::Analysis) -> String {
    let mut s = String::from("tau_s,q_rel,q_err,mu_v,sigma,gamma,s_squared\n");
    let c = &a.curve;
    for i in 0..c.tau.len() {
        let p = &c.fits[i].params;
        let _ = writeln!(
            s,
            "{:e},{:e},{},{:e},{:e},{:e},{:e}",
            c.tau[i],
            c.q_rel[i],
            opt(c.q_err[i]),
            p.mu_v,
            p.sigma,
            p.gamma,
            c.fits[i].s_squared
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFileConfig {
    pub sweep: SweepConfig,
    #[serde(with = "dbm_serde::vec")]
    pub powers_dbm: Vec<f64>,
    pub lidt_watts: f64,
    pub target_fraction: f64,
    pub threshold_dbm: Option<f64>,
}

impl Default for SweepFileConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            powers_dbm: (0..10).map(|i| -120.0 + 10.0 * i as f64).collect(),
            lidt_watts: 100.0,
            target_fraction: injlock::sweep::DEFAULT_TARGET_FRACTION,
            threshold_dbm: None,
        }
    }
}

pub fn sweep_cmd(common: &CommonArgs, a: &SweepArgs) -> Result<()> {
    let mut cfg: SweepFileConfig = load_config(common.config.as_deref())?;
    if let Some(v) = common.seed {
        cfg.sweep.seed = v;
    }
    if let Some(p) = &a.powers {
        cfg.powers_dbm = p.clone();
    }
    if let Some(v) = a.lidt_watts {
        cfg.lidt_watts = v;
    }
    if let Some(v) = a.target_fraction {
        cfg.target_fraction = v;
    }
    if a.threshold_dbm.is_some() {
        cfg.threshold_dbm = a.threshold_dbm;
    }
    if let Some(v) = a.n_pulses {
        cfg.sweep.sim.n_pulses = v;
    }
    if let Some(v) = a.sample_rate {
        cfg.sweep.sim.sample_rate = v;
    }
    apply_analysis_args(&mut cfg.sweep.analysis, &a.analysis);
    if !(cfg.lidt_watts > 0.0) {
        return Err(CliError::Config(format!("LIDT must be positive, got {}", cfg.lidt_watts)));
    }
    let sweep = power_sweep(&cfg.powers_dbm, &cfg.sweep)?;
    let baseline_q = sweep.baseline();
    let q_target = baseline_q.map(|b| cfg.target_fraction * b);
    let (isolation, isolation_error) = match q_target {
        Some(t) => match sweep.isolation(t, cfg.lidt_watts) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, Some("no sweep point was analyzed".into())),
    };
    let isolation_at_given_threshold = cfg.threshold_dbm.map(|t| IsolationReport {
        q_target: q_target.unwrap_or(0.0),
        lidt_watts: cfg.lidt_watts,
        threshold_dbm: t,
        isolation_db: isolation_db(t, cfg.lidt_watts),
    });
    let mut table = String::from(
        "power_dbm,q_true,q_rel_min,q_err,q_rel_min_integrated,q_err_integrated,failure\n",
    );
    for p in &sweep.points {
        let _ = writeln!(
            table,
            "{:e},{:e},{},{},{},{},{}",
            p.power_dbm,
            p.q_true,
            opt(p.q_rel_min),
            opt(p.q_err),
            opt(p.q_rel_min_integrated),
            opt(p.q_err_integrated),
            p.failure.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    let outputs = Outputs::Sweep(Box::new(SweepOutput {
        sweep,
        baseline_q,
        q_target,
        isolation,
        isolation_error,
        isolation_at_given_threshold,
    }));
    let container = ResultsContainer::new("sweep", cfg.sweep.seed, to_value(&cfg), outputs);
    emit(common, &container, Some(table))
}

pub fn scan_cmd(common: &CommonArgs, a: &ScanArgs) -> Result<()> {
    let mut cfg: PolScanConfig = load_config(common.config.as_deref())?;
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(n) = a.points {
        cfg.grid = SphereGrid::Fibonacci { n };
    }
    if let Some(p) = a.power_dbm {
        cfg.power_dbm = p;
    }
    if let Some(o) = &a.optimal {
        cfg.optimal = StokesState::normalized(o[0], o[1], o[2])?;
    }
    if let Some(v) = a.n_pulses {
        cfg.sim.n_pulses = v;
    }
    if let Some(v) = a.sample_rate {
        cfg.sim.sample_rate = v;
    }
    apply_analysis_args(&mut cfg.analysis, &a.analysis);
    let scan = scan_sphere(&cfg)?;
    let mut table = String::from("index,s1,s2,s3,eta,q_rel_min,spd_counts\n");
    for (i, s) in scan.states.iter().enumerate() {
        let _ = writeln!(
            table,
            "{i},{:e},{:e},{:e},{:e},{},{}",
            s.s1,
            s.s2,
            s.s3,
            scan.eta[i],
            opt(scan.q_rel_min[i]),
            scan.spd_counts[i]
        );
    }
    let minima_distance = scan
        .argmin_q_state()
        .map(|q| q.angle_to(&scan.argmin_counts_state()));
    let outputs = Outputs::ScanPol(Box::new(ScanOutput {
        minima_agree: scan.minima_agree(),
        minima_distance,
        scan,
    }));
    let container = ResultsContainer::new("scan-pol", cfg.seed, to_value(&cfg), outputs);
    emit(common, &container, Some(table))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FockConfig {
    pub mu_photon: f64,
    pub n_max: i64,
    pub phase: PhaseSource,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self {
            mu_photon: 0.5,
            n_max: injlock::fockdiag::DEFAULT_N_MAX,
            phase: PhaseSource::Distribution(PhaseDistribution::Uniform),
        }
    }
}

pub fn fock_cmd(common: &CommonArgs, a: &FockArgs) -> Result<()> {
    let mut cfg: FockConfig = load_config(common.config.as_deref())?;
    if let Some(v) = a.mu {
        cfg.mu_photon = v;
    }
    if let Some(v) = a.n_max {
        cfg.n_max = v;
    }
    if let Some(d) = &a.distribution {
        cfg.phase = PhaseSource::Distribution(parse_distribution(d)?);
    }
    if let Some(path) = &a.fit_from {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let c = ResultsContainer::from_json(&text).map_err(CliError::Parse)?;
        let Outputs::Analyze(an) = c.outputs else {
            return Err(CliError::Config(format!(
                "{} is not an analyze container",
                path.display()
            )));
        };
        let curve = &an.analysis.curve;
        cfg.phase = PhaseSource::Fitted(curve.fits[curve.argmin_index].params);
    }
    let rho = density_matrix(cfg.mu_photon, &cfg.phase, cfg.n_max)?;
    let mut table = String::from("n,m,re,im\n");
    for n in 0..rho.dim {
        for m in 0..rho.dim {
            let v = rho.get(n, m);
            let _ = writeln!(table, "{n},{m},{:e},{:e}", v.re, v.im);
        }
    }
    let outputs = Outputs::Fock(Box::new(FockOutput {
        offdiag_norm: offdiag_norm(&rho),
        max_offdiag: rho.max_offdiag(),
        trace: rho.trace(),
        trace_deficit: rho.trace_deficit,
        hermiticity_error: rho.hermiticity_error(),
        min_eigenvalue: rho.min_eigenvalue(),
        rho,
    }));
    let container = ResultsContainer::new("fock", common.seed.unwrap_or(0), to_value(&cfg), outputs);
    emit(common, &container, Some(table))
}

pub fn report_cmd(common: &CommonArgs, a: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", a.input.display())))?;
    let c = ResultsContainer::from_json(&text).map_err(CliError::Parse)?;
    let summary = summarize(&c);
    match &common.out {
        Some(p) => write_file(p, summary.as_bytes()),
        None => to_stdout(&summary),
    }
}

/// Plain-text summary of a container.
pub fn summarize(c: &ResultsContainer) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command:        {}", c.metadata.command);
    let _ = writeln!(s, "tool version:   {}", c.metadata.tool_version);
    let _ = writeln!(s, "seed:           {}", c.metadata.seed);
    let _ = writeln!(s, "config sha256:  {}", c.config_sha256);
    match &c.outputs {
        Outputs::Simulate(o) => {
            let _ = writeln!(s, "samples:        {} ({} pulses)", o.n_samples, o.n_pulses);
            let _ = writeln!(s, "q_rel (truth):  {:.6}", o.q_true);
            let _ = writeln!(s, "waveform sha256: {}", o.waveform_sha256);
        }
        Outputs::Analyze(o) => {
            let a = &o.analysis;
            let _ = writeln!(
                s,
                "window:         {:.4e} s .. {:.4e} s, {} samples analyzed",
                a.window.start_time(),
                a.window.end_time(),
                a.curve.tau.len() + a.curve.failed.len()
            );
            let _ = writeln!(s, "q_rel_min:      {:.6} at tau = {:.4e} s", a.curve.q_rel_min, a.curve.argmin_tau);
            if let Some(b) = &a.curve.bootstrap {
                let _ = writeln!(
                    s,
                    "bootstrap:      std {:.6}, 95% [{:.6}, {:.6}] from {} resamples",
                    b.q_std, b.p2_5, b.p97_5, b.n_resamples
                );
            }
            if let Some(i) = &a.integrated {
                let _ = writeln!(s, "integrated:     {:.6}", i.q_rel_min);
            }
            if let Some(b) = &a.bound {
                let _ = writeln!(s, "model-free bound: {:.6} ({} bins, {:.0}% confidence)", b.q_bound, b.bins, 100.0 * b.confidence);
            }
            let _ = writeln!(s, "failed samples: {}", a.curve.failed.len());
        }
        Outputs::Sweep(o) => {
            let _ = writeln!(s, "power_dbm  q_true    q_rel_min  q_err");
            for p in &o.sweep.points {
                let _ = writeln!(
                    s,
                    "{:>9.2}  {:.6}  {}  {}",
                    p.power_dbm,
                    p.q_true,
                    p.q_rel_min.map(|q| format!("{q:.6}")).unwrap_or_else(|| "failed  ".into()),
                    p.q_err.map(|q| format!("{q:.6}")).unwrap_or_default()
                );
            }
            match (&o.isolation, &o.isolation_error) {
                (Some(r), _) => {
                    let _ = writeln!(
                        s,
                        "threshold:      {:.2} dBm (q_target {:.4})\nisolation:      {} dB for LIDT {} W",
                        r.threshold_dbm, r.q_target, r.isolation_db, r.lidt_watts
                    );
                }
                (None, Some(e)) => {
                    let _ = writeln!(s, "threshold:      not found ({e})");
                }
                _ => {}
            }
            if let Some(r) = &o.isolation_at_given_threshold {
                let _ = writeln!(
                    s,
                    "given threshold {} dBm: isolation {} dB for LIDT {} W",
                    r.threshold_dbm, r.isolation_db, r.lidt_watts
                );
            }
        }
        Outputs::ScanPol(o) => {
            let _ = writeln!(s, "grid points:    {}", o.scan.states.len());
            let _ = writeln!(s, "failed points:  {}", o.scan.failed.len());
            if let Some(q) = o.scan.argmin_q_state() {
                let _ = writeln!(s, "argmin q_rel:   ({:.4}, {:.4}, {:.4})", q.s1, q.s2, q.s3);
            }
            let c = o.scan.argmin_counts_state();
            let _ = writeln!(s, "argmin counts:  ({:.4}, {:.4}, {:.4})", c.s1, c.s2, c.s3);
            let _ = writeln!(s, "minima agree:   {}", o.minima_agree);
        }
        Outputs::Fock(o) => {
            let _ = writeln!(s, "dimension:      {}", o.rho.dim);
            let _ = writeln!(s, "off-diag norm:  {:e}", o.offdiag_norm);
            let _ = writeln!(s, "max off-diag:   {:e}", o.max_offdiag);
            let _ = writeln!(s, "trace:          {:.12} (deficit {:e})", o.trace, o.trace_deficit);
            let _ = writeln!(s, "min eigenvalue: {:e}", o.min_eigenvalue);
        }
    }
    s
}
