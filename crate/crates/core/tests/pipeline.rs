use injlock::circfit::{fit_wrapped_voigt, FitOptions, PhaseHistogram};
use injlock::phasex::{phase_matrix, segment_pulses, select_window, WaveformPair, WindowSpec};
use injlock::pipeline::{simulate_and_analyze, AnalysisConfig};
use injlock::polscan::{scan_sphere, PolScanConfig, SphereGrid};
use injlock::qrel::{histogram_lower_bound, qrel_from_pdf, qrel_of_distribution, BootstrapScope};
use injlock::rng::{substream, Stream};
use injlock::circular::wrap_angle;
use injlock::sweep::{power_sweep, SweepConfig};
use injlock::synth::{sample_phase, PhaseDistribution, SimConfig, Simulation};

fn small_sim(n_pulses: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_pulses,
        sample_rate: 10e9,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn noiseless_phases_are_recovered_exactly() {
    let cfg = SimConfig {
        noise_rms: 0.0,
        ..small_sim(300, 11)
    };
    let run = Simulation::run(&cfg, &PhaseDistribution::Uniform).unwrap();
    let segs = segment_pulses(&run.waveform, cfg.rep_rate, 0.0).unwrap();
    let window = select_window(&segs, &WindowSpec::default()).unwrap();
    let m = phase_matrix(&segs, &window).unwrap();
    let nt = m.n_tau();
    let mut checked = 0;
    for n in 0..m.n_pulses {
        for (w, &k) in m.sample_indices.iter().enumerate() {
            if m.valid[n * nt + w] {
                let err = wrap_angle(m.phases[n * nt + w] - run.true_relative_phase(n, k));
                assert!(err.abs() < 1e-9, "pulse {n} sample {k}: {err}");
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn window_ignores_pulse_order() {
    let cfg = small_sim(60, 5);
    let run = Simulation::run(&cfg, &PhaseDistribution::Uniform).unwrap();
    let per = cfg.samples_per_period().round() as usize;
    let wf = &run.waveform;
    let mut order: Vec<usize> = (0..cfg.n_pulses).collect();
    order.reverse();
    order.swap(3, 40);
    let take = |v: &[f64]| -> Vec<f64> {
        order.iter().flat_map(|&n| v[n * per..(n + 1) * per].to_vec()).collect()
    };
    let shuffled = WaveformPair::new(take(&wf.i0), take(&wf.i90), wf.sample_period, wf.t0).unwrap();
    let a = select_window(&segment_pulses(wf, cfg.rep_rate, 0.0).unwrap(), &WindowSpec::default()).unwrap();
    let b = select_window(
        &segment_pulses(&shuffled, cfg.rep_rate, 0.0).unwrap(),
        &WindowSpec::default(),
    )
    .unwrap();
    assert_eq!((a.lo, a.hi), (b.lo, b.hi));
}

#[test]
fn model_free_bound_stays_below_the_fit() {
    let fit_opts = FitOptions::default();
    for case in 0..20u64 {
        let mut rng = substream(case, Stream::Misc, 0);
        let sigma = 0.6 + 0.07 * case as f64;
        let gamma = 0.05 * (case % 5) as f64;
        let truth = PhaseDistribution::WrappedVoigt {
            center: 0.3 * case as f64,
            sigma,
            gamma,
        };
        let first: Vec<f64> = (0..8000).map(|_| sample_phase(&truth, &mut rng).unwrap()).collect();
        let fitted = fit_wrapped_voigt(&PhaseHistogram::from_phases(&first, 64).unwrap(), None, &fit_opts)
            .unwrap()
            .params;
        // Fresh data drawn from the fitted model itself.
        let model = PhaseDistribution::WrappedVoigt {
            center: fitted.mu_v,
            sigma: fitted.sigma,
            gamma: fitted.gamma,
        };
        let data: Vec<f64> = (0..8000).map(|_| sample_phase(&model, &mut rng).unwrap()).collect();
        let bound = histogram_lower_bound(&data, 32, 0.95).unwrap();
        assert!(bound.q_bound <= qrel_from_pdf(&fitted), "case {case}");
    }
}

#[test]
fn simulated_voigt_phases_are_recovered() {
    let dist = PhaseDistribution::WrappedVoigt {
        center: 0.4,
        sigma: 1.0,
        gamma: 0.3,
    };
    let sim = small_sim(8000, 2);
    let mut cfg = AnalysisConfig::for_sim(&sim);
    cfg.qrel.bootstrap = BootstrapScope::None;
    cfg.integrated = false;
    cfg.max_tau = 10;
    let a = simulate_and_analyze(&sim, &dist, &cfg).unwrap();
    let truth = qrel_of_distribution(&dist);
    assert!(((a.q_rel_min() - truth) / truth).abs() < 0.15);
    let min = a.curve.q_rel.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(a.curve.q_rel_min, min);
}

#[test]
fn sweep_is_reproducible_and_records_seeds() {
    let mut cfg = SweepConfig {
        sim: small_sim(500, 0),
        seed: 17,
        ..SweepConfig::default()
    };
    cfg.analysis.qrel.n_resamples = 5;
    cfg.analysis.max_tau = 3;
    let powers = [-100.0, -60.0, -40.0];
    let a = power_sweep(&powers, &cfg).unwrap();
    let b = power_sweep(&powers, &cfg).unwrap();
    assert_eq!(a, b);
    let seeds: Vec<u64> = a.points.iter().map(|p| p.sim_seed).collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
}

#[test]
fn scan_is_reproducible() {
    let cfg = PolScanConfig {
        grid: SphereGrid::Fibonacci { n: 16 },
        sim: small_sim(400, 0),
        seed: 8,
        ..PolScanConfig::default()
    };
    let mut cfg = cfg;
    cfg.analysis.max_tau = 2;
    let a = scan_sphere(&cfg).unwrap();
    let b = scan_sphere(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.states.len(), 16);
    assert!(a.eta.iter().all(|e| (0.0..=1.0).contains(e)));
}
