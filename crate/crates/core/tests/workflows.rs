use scamdyn_core::data::{generate_synthetic, load_reports, pool, write_reports, SyntheticSpec};
use scamdyn_core::inference::{
    posterior_predictive, run_dram, summarize, ErrorModel, FitConfig, PredictiveConfig, PriorBounds,
};
use scamdyn_core::integrators::{read_trajectory_csv, simulate, StepConfig};
use scamdyn_core::model::{classify_sfe_stability, reproduction_number, Classification};
use scamdyn_core::observe::{monthly_times, Observable};
use scamdyn_core::{Param, Parameters, State};

const MEANS: Parameters = Parameters::POSTERIOR_MEANS;

fn default_init() -> State {
    State::new(1000.0, 100.0, 0.0, 200.0, 0.0)
}

#[test]
fn trajectory_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let traj = simulate(&default_init(), &MEANS, &StepConfig::nsfd(0.25, 100.0).unwrap()).unwrap();
    traj.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let (times, states) = read_trajectory_csv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(times, traj.times);
    assert_eq!(states, traj.states);
}

#[test]
fn report_file_round_trip_and_pooling() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = generate_synthetic(&SyntheticSpec::new(MEANS, default_init(), 8)).unwrap();
    a.label = "ON".into();
    let mut b = a.clone();
    b.label = "QC".into();
    let path = dir.path().join("reports.csv");
    std::fs::write(&path, write_reports(&[a.clone(), b])).unwrap();
    let loaded = load_reports(&path).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded[0].counts, a.counts);
    let pooled = pool(&loaded).unwrap();
    for (p, x) in pooled.counts.iter().zip(&a.counts) {
        assert_eq!(*p, 2.0 * x);
    }
}

/// Empirical check of discrete local stability: at small perturbations of
/// the scam-free state the NSFD orbit decays when R0 < 1 and μ+λ > δ, and
/// grows when R0 > 1.
#[test]
fn discrete_local_stability_follows_r0() {
    let n = 1000.0;
    let stable = MEANS;
    let unstable = MEANS.with(Param::Psi, 0.01).with(Param::Beta, 0.05);
    assert!(reproduction_number(&stable, n).unwrap() < 1.0);
    assert!(reproduction_number(&unstable, n).unwrap() > 1.0);
    assert_eq!(classify_sfe_stability(&unstable, n, 1e-9).classification, Classification::UnstableSFE);

    let perturbed = State::new(n, 1e-3, 0.0, 1e-3, 0.0);
    for h in [0.5, 1.0, 5.0] {
        let cfg = StepConfig::nsfd(h, 2000.0).unwrap();
        let down = simulate(&perturbed, &stable, &cfg).unwrap();
        let up = simulate(&perturbed, &unstable, &cfg).unwrap();
        let last_down = down.final_state().unwrap();
        let last_up = up.final_state().unwrap();
        assert!(last_down.v + last_down.a_s < 2e-3, "h = {h}");
        assert!(last_up.v + last_up.a_s > 1.0, "h = {h}");
    }
}

#[test]
fn dram_chain_invariants() {
    let times = monthly_times(12);
    let data = generate_synthetic(&SyntheticSpec::new(MEANS, default_init(), 12)).unwrap();
    let bounds = PriorBounds::default();
    let mut cfg = FitConfig::new(MEANS, default_init(), times.clone());
    cfg.iterations = 600;
    cfg.seed = 21;
    let chain = run_dram(&cfg, &data.counts, &bounds).unwrap();
    assert_eq!(chain.len(), 600);
    assert!(chain.accept_count < chain.len());
    assert!(chain.dr_accept_count <= chain.accept_count);
    assert!(chain.samples.iter().all(|s| bounds.contains(&Parameters::from_array(*s))));
    assert!(chain.sigma2_samples.iter().all(|s| *s > 0.0));

    let summary = summarize(&chain, 0.5).unwrap();
    assert!(summary.rows.iter().all(|r| r.q025 <= r.q975));

    let band = posterior_predictive(
        &chain,
        &PredictiveConfig {
            n_draws: 50,
            burn_in_fraction: 0.5,
            init: default_init(),
            times,
            observable: Observable::Prevalence,
            h: 0.25,
            seed: 3,
        },
    )
    .unwrap();
    assert_eq!(band.failed_draws, 0);
    for k in 0..band.times.len() {
        assert!(band.lower[k] <= band.mean[k] && band.mean[k] <= band.upper[k]);
    }
}

#[test]
fn fixed_sigma_and_incidence_fit_runs() {
    let mut spec = SyntheticSpec::new(MEANS, default_init(), 10);
    spec.observable = Observable::Incidence;
    let data = generate_synthetic(&spec).unwrap();
    let mut cfg = FitConfig::new(MEANS, default_init(), monthly_times(10));
    cfg.iterations = 200;
    cfg.observable = Observable::Incidence;
    cfg.error_model = ErrorModel::FixedSigma(4.0);
    cfg.dr_stages = 1;
    let chain = run_dram(&cfg, &data.counts, &PriorBounds::default()).unwrap();
    assert!(chain.sigma2_samples.iter().all(|s| *s == 4.0));
    // the chain starts at the truth, where the misfit is zero
    assert!(chain.log_posteriors[0] >= chain.log_posteriors.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 1e-9);
}
