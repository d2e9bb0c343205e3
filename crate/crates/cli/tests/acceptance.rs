//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use injlock::circfit::{voigt_pdf, WrappedVoigtParams};
use injlock::circular::wrap_angle;
use injlock::fockdiag::{density_matrix, PhaseSource};
use injlock::phasex::{phase_matrix, segment_pulses, select_window, WindowSpec};
use injlock::pipeline::{simulate_and_analyze, AnalysisConfig};
use injlock::polscan::{scan_sphere, PolScanConfig, SphereGrid, StokesState};
use injlock::qrel::{qrel_from_pdf, qrel_of_distribution, BootstrapScope};
use injlock::rng::{substream, Stream};
use injlock::sweep::{isolation_db, isolation_threshold, power_sweep, SweepConfig};
use injlock::synth::{PhaseDistribution, SimConfig, Simulation};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gauss(x: f64, s: f64) -> f64 {
    (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
}

fn lorentz(x: f64, g: f64) -> f64 {
    g / (PI * (x * x + g * g))
}

fn wrapped_gauss(x: f64, s: f64) -> f64 {
    (-60..=60).map(|k| gauss(x + 2.0 * PI * k as f64, s)).sum()
}

fn wrapped_cauchy(x: f64, g: f64) -> f64 {
    g.sinh() / (2.0 * PI * (g.cosh() - x.cos()))
}

/// Trapezoid convolution of a Gaussian and a Lorentzian on the real line.
fn convolution(x: f64, s: f64, g: f64) -> f64 {
    let half = 12.0 * s;
    let n = (2.0 * half / (s.min(g) / 40.0)).ceil() as usize;
    let h = 2.0 * half / n as f64;
    (0..=n)
        .map(|i| {
            let t = -half + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * gauss(t, s) * lorentz(x - t, g)
        })
        .sum::<f64>()
        * h
}

/// Circular convolution of the wrapped Gaussian and wrapped Cauchy.
fn circular_convolution(phi: f64, s: f64, g: f64) -> f64 {
    let n = 1 << 15;
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|i| {
            let t = -PI + i as f64 * h;
            wrapped_gauss(t, s) * wrapped_cauchy(phi - t, g)
        })
        .sum::<f64>()
        * h
}

const VOIGT_GRID: [(f64, f64, f64); 10] = [
    (0.0, 0.4, 0.2),
    (0.3, 0.1, 0.05),
    (-1.2, 0.8, 0.3),
    (2.5, 0.25, 0.6),
    (-3.0, 1.5, 0.1),
    (1.0, 0.05, 0.4),
    (0.7, 0.6, 1.2),
    (-0.4, 2.0, 0.5),
    (3.1, 0.3, 0.02),
    (-2.2, 1.0, 1.0),
];

fn phase_extraction() -> Outcome {
    let t = Instant::now();
    let cfg = SimConfig {
        noise_rms: 0.0,
        seed: 1,
        ..SimConfig::default()
    };
    let run = Simulation::run(&cfg, &PhaseDistribution::Uniform).unwrap();
    let segs = segment_pulses(&run.waveform, cfg.rep_rate, 0.0).unwrap();
    let window = select_window(&segs, &WindowSpec::default()).unwrap();
    let m = phase_matrix(&segs, &window).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let nt = m.n_tau();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for n in 0..m.n_pulses {
        for (w, &k) in m.sample_indices.iter().enumerate() {
            if m.valid[n * nt + w] {
                let err = wrap_angle(m.phases[n * nt + w] - run.true_relative_phase(n, k));
                worst = worst.max(err.abs());
                checked += 1;
            }
        }
    }
    outcome(
        worst < 1e-9 && elapsed < 30.0 && checked > 0 && m.n_pulses == 8000,
        format!("max error {worst:.2e} rad over {checked} samples, {elapsed:.1} s"),
    )
}

fn wrapped_voigt() -> Outcome {
    let mut worst_conv: f64 = 0.0;
    let mut worst_wrap: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for &(mu, s, g) in &VOIGT_GRID {
        let p = WrappedVoigtParams::new(mu, s, g).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.5, 1.7] {
            let want = convolution(x, s, g);
            let got = voigt_pdf(x + mu, mu, s, g).unwrap();
            worst_conv = worst_conv.max(((got - want) / want).abs());
            let want = circular_convolution(x, s, g);
            let got = p.pdf(x + mu);
            worst_wrap = worst_wrap.max(((got - want) / want).abs());
        }
        let n = 8192;
        let h = 2.0 * PI / n as f64;
        let total: f64 = (0..n).map(|i| p.pdf(-PI + i as f64 * h)).sum::<f64>() * h;
        worst_norm = worst_norm.max((total - 1.0).abs());
    }
    let gauss_err = (voigt_pdf(0.3, 0.3, 0.7, 0.0).unwrap() - 1.0 / (0.7 * (2.0 * PI).sqrt())).abs();
    let cauchy_err = [-1.0, 0.0, 0.4, 2.0]
        .iter()
        .map(|&x| (voigt_pdf(x, 0.0, 1e-6, 0.3).unwrap() - lorentz(x, 0.3)).abs())
        .fold(0.0, f64::max);
    outcome(
        worst_conv < 1e-6
            && worst_wrap < 1e-6
            && worst_norm < 1e-6
            && gauss_err < 1e-9
            && cauchy_err < 1e-4,
        format!(
            "convolution rel {worst_conv:.1e}, wrapped rel {worst_wrap:.1e}, norm {worst_norm:.1e}, \
             Gaussian limit {gauss_err:.1e}, Cauchy limit {cauchy_err:.1e}"
        ),
    )
}

fn qrel_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for &(mu, s, g) in &VOIGT_GRID {
        let p = WrappedVoigtParams::new(mu, s, g).unwrap();
        let n = 1_000_000;
        let dense = (0..n)
            .map(|i| p.pdf(-PI + 2.0 * PI * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
            * 2.0
            * PI;
        worst = worst.max((qrel_from_pdf(&p) - dense.min(1.0)).abs());
    }
    outcome(worst < 1e-4, format!("max |q - dense grid| = {worst:.1e} over 10 cases"))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn end_to_end() -> Outcome {
    let dist = PhaseDistribution::WrappedVoigt {
        center: 0.5,
        sigma: 2.0,
        gamma: 0.3,
    };
    let truth = qrel_of_distribution(&dist);
    let mut q = Vec::new();
    let mut boot = Vec::new();
    let mut slowest: f64 = 0.0;
    for seed in 0..20u64 {
        let t = Instant::now();
        let sim = SimConfig {
            seed: 1000 + seed,
            ..SimConfig::default()
        };
        let mut cfg = AnalysisConfig::for_sim(&sim);
        cfg.integrated = false;
        cfg.max_tau = 50;
        cfg.qrel.seed = seed;
        let a = simulate_and_analyze(&sim, &dist, &cfg).unwrap();
        q.push(a.curve.q_rel_min);
        boot.push(a.curve.bootstrap.as_ref().unwrap().q_std);
        slowest = slowest.max(t.elapsed().as_secs_f64());
    }
    let within = q.iter().filter(|x| ((*x - truth) / truth).abs() <= 0.05).count();
    let (mean, scatter) = mean_std(&q);
    let boot_mean = boot.iter().sum::<f64>() / boot.len() as f64;
    let ratio = boot_mean / scatter;
    outcome(
        within == q.len() && (0.5..=2.0).contains(&ratio) && slowest < 300.0,
        format!(
            "truth {truth:.4}, {within}/20 seeds within 5% (mean {mean:.4}), \
             bootstrap std {boot_mean:.4} vs scatter {scatter:.4} (ratio {ratio:.2}), slowest seed {slowest:.1} s"
        ),
    )
}

fn no_injection_floor() -> Outcome {
    let mut q = Vec::new();
    for seed in 0..20u64 {
        let sim = SimConfig {
            seed: 2000 + seed,
            ..SimConfig::default()
        };
        let mut cfg = AnalysisConfig::for_sim(&sim);
        cfg.integrated = false;
        cfg.qrel.bootstrap = BootstrapScope::None;
        let a = simulate_and_analyze(&sim, &PhaseDistribution::Uniform, &cfg).unwrap();
        q.push(a.curve.q_rel_min);
    }
    let above = q.iter().filter(|x| **x >= 0.9).count();
    let lowest = q.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        above * 100 >= 95 * q.len(),
        format!("{above}/20 seeds with q_rel_min >= 0.9 (lowest {lowest:.4})"),
    )
}

fn monotonicity() -> Outcome {
    let powers: Vec<f64> = (0..10).map(|i| -120.0 + 10.0 * i as f64).collect();
    let mut cfg = SweepConfig {
        seed: 6,
        ..SweepConfig::default()
    };
    cfg.analysis.integrated = false;
    let r = power_sweep(&powers, &cfg).unwrap();
    let pts: Vec<(f64, f64)> = r
        .points
        .iter()
        .map(|p| (p.q_rel_min.unwrap_or(f64::NAN), p.q_err.unwrap_or(f64::NAN)))
        .collect();
    let mut violations = 0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (qi, ei) = pts[i];
            let (qj, ej) = pts[j];
            if !(qj <= qi + 2.0 * ei.max(ej)) {
                violations += 1;
            }
        }
    }
    let curve: Vec<String> = pts.iter().map(|(q, _)| format!("{q:.3}")).collect();
    outcome(
        violations == 0,
        format!("{violations} violating pairs; q_rel_min = [{}]", curve.join(", ")),
    )
}

fn isolation() -> Outcome {
    let direct = isolation_db(-90.0, 100.0);
    let curve = [(-110.0, 0.98), (-100.0, 0.975), (-90.0, 0.95), (-80.0, 0.6)];
    let via_curve = isolation_threshold(&curve, 0.95, 100.0).unwrap();
    outcome(
        direct == 140.0 && via_curve.isolation_db == 140.0 && via_curve.threshold_dbm == -90.0,
        format!("isolation {direct} dB (from curve {} dB)", via_curve.isolation_db),
    )
}

fn polarization() -> Outcome {
    let mut agree = 0;
    let mut worst: f64 = 0.0;
    let mut cell = 0.0;
    for case in 0..20u64 {
        let optimal = StokesState::random(&mut substream(7, Stream::Placement, case));
        let mut cfg = PolScanConfig {
            grid: SphereGrid::Fibonacci { n: 64 },
            optimal,
            sim: SimConfig {
                n_pulses: 20_000,
                sample_rate: 1e9,
                ..SimConfig::default()
            },
            seed: 300 + case,
            ..PolScanConfig::default()
        };
        cfg.analysis.max_tau = 2;
        let r = scan_sphere(&cfg).unwrap();
        cell = r.cell_size;
        if let Some(q) = r.argmin_q_state() {
            worst = worst.max(q.angle_to(&r.argmin_counts_state()));
        }
        if r.minima_agree() {
            agree += 1;
        }
    }
    outcome(
        agree * 100 >= 95 * 20,
        format!("{agree}/20 placements agree (worst separation {worst:.3} rad, cell {cell:.3} rad)"),
    )
}

fn fock() -> Outcome {
    let rho = density_matrix(0.5, &PhaseSource::Distribution(PhaseDistribution::Uniform), 20).unwrap();
    let mut poisson_err: f64 = 0.0;
    let mut term = (-0.5f64).exp();
    for n in 0..=20 {
        if n > 0 {
            term *= 0.5 / n as f64;
        }
        poisson_err = poisson_err.max((rho.get(n, n).re - term).abs());
    }
    let offdiag = rho.max_offdiag();
    let mut identities = 0;
    for case in 0..20u64 {
        let mut rng = substream(case, Stream::Misc, 99);
        let mu = 2.0 * rng.random::<f64>();
        let c = PI * (2.0 * rng.random::<f64>() - 1.0);
        let d = match case % 4 {
            0 => PhaseDistribution::WrappedGaussian { center: c, sigma: 0.05 + 2.0 * rng.random::<f64>() },
            1 => PhaseDistribution::WrappedCauchy { center: c, gamma: 0.05 + rng.random::<f64>() },
            2 => PhaseDistribution::WrappedVoigt {
                center: c,
                sigma: 0.05 + rng.random::<f64>(),
                gamma: 0.05 + rng.random::<f64>(),
            },
            _ => PhaseDistribution::Delta { center: c },
        };
        let r = density_matrix(mu, &PhaseSource::Distribution(d), 20).unwrap();
        let mut want = 0.0;
        let mut t = (-mu).exp();
        for n in 0..=20 {
            if n > 0 {
                t *= mu / n as f64;
            }
            want += t;
        }
        if r.hermiticity_error() < 1e-12 && r.min_eigenvalue() >= -1e-10 && (r.trace() - want).abs() < 1e-9 {
            identities += 1;
        }
    }
    outcome(
        offdiag < 1e-10 && poisson_err < 1e-12 && identities == 20,
        format!(
            "max off-diagonal {offdiag:.1e}, Poisson diagonal error {poisson_err:.1e}, \
             identities hold in {identities}/20 cases"
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_injlock"))
        .current_dir(dir)
        .env_remove("SOURCE_DATE_EPOCH")
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let small = ["--n-pulses", "300", "--sample-rate", "10e9"];
    let setup = run_cli(d, &["--out", "w.bin", "--seed", "3", "simulate", "--n-pulses", "300",
                             "--sample-rate", "10e9", "--distribution",
                             r#"{"kind":"wrapped_gaussian","center":0.2,"sigma":1.0}"#]);
    if !setup {
        return outcome(false, "could not simulate the input waveform");
    }
    let commands: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("simulate", vec!["--seed", "3", "--format", "text"], {
            let mut v = vec!["simulate", "--distribution", r#"{"kind":"wrapped_cauchy","center":1,"gamma":0.5}"#];
            v.extend_from_slice(&small);
            v
        }),
        ("analyze", vec!["--seed", "3"], vec!["analyze", "--input", "w.bin", "--max-tau", "4", "--resamples", "8"]),
        ("sweep", vec!["--seed", "3"], {
            let mut v = vec!["sweep", "--powers", "-100,-70,-40", "--max-tau", "2", "--resamples", "5"];
            v.extend_from_slice(&small);
            v
        }),
        ("scan-pol", vec!["--seed", "3"], {
            let mut v = vec!["scan-pol", "--points", "16", "--max-tau", "2"];
            v.extend_from_slice(&small);
            v
        }),
        ("fock", vec![], vec!["fock", "--mu", "1.1", "--distribution", r#"{"kind":"wrapped_voigt","center":0.3,"sigma":0.4,"gamma":0.2}"#]),
        ("report", vec![], vec!["report", "--input", "w.bin.json"]),
    ];
    let mut differing = Vec::new();
    for (name, global, cmd) in &commands {
        let mut outputs = Vec::new();
        for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "8")] {
            let out = format!("{name}-{tag}.out");
            let mut args: Vec<&str> = global.clone();
            args.extend(["--threads", threads, "--out", &out]);
            args.extend(cmd.iter().copied());
            if !run_cli(d, &args) {
                differing.push(format!("{name} (failed)"));
                break;
            }
            let mut bytes = fs::read(d.join(&out)).unwrap();
            for extra in [format!("{name}-{tag}.csv"), format!("{out}.json")] {
                if let Ok(b) = fs::read(d.join(extra)) {
                    bytes.extend(b);
                }
            }
            outputs.push(bytes);
        }
        if outputs.len() == 3 && !(outputs[0] == outputs[1] && outputs[1] == outputs[2]) {
            differing.push(name.to_string());
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} subcommands byte-identical across runs and 1 vs 8 threads", commands.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("phase-extraction exactness", phase_extraction),
        ("wrapped-Voigt correctness", wrapped_voigt),
        ("q_rel oracle equivalence", qrel_oracle),
        ("end-to-end recovery", end_to_end),
        ("no-injection floor", no_injection_floor),
        ("power-sweep monotonicity", monotonicity),
        ("isolation arithmetic", isolation),
        ("polarization proxy", polarization),
        ("Fock diagnostics", fock),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {:>2}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str()) || id.ends_with(w.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{id} {:<28} {} ({:.1} s) {}",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
