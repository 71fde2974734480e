use kmono::baselines::*;
use kmono::metrics::{canonical_grid, mse_grid, GridDensity};
use kmono::mtp::*;
use kmono::sampler::{KMode, PriorConfig, SamplerConfig};
use kmono::simgen::*;
use kmono::stats;

#[test]
fn density_samplers_match_their_cdfs() {
    for spec in DensitySpec::NAMED {
        let xs = sample_density(&spec, 100_000, 21);
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        let ks = stats::ks_test(&xs, |x| spec.cdf(x));
        assert!(ks.p_value > 0.01, "{}: KS p = {}", spec.id(), ks.p_value);
    }
}

#[test]
fn g2_sample_mean() {
    let xs = sample_density(&DensitySpec::G2, 20_000, 3);
    // E X = 5/12, Var X = int x^2 (1.5 - x) dx - (5/12)^2 = 1/4 - 25/144
    let sd = (0.25f64 - 25.0 / 144.0).sqrt() / (xs.len() as f64).sqrt();
    assert!((stats::mean(&xs) - 5.0 / 12.0).abs() < 3.0 * sd);
}

#[test]
fn convex_fit_on_g2_has_small_grid_error() {
    let data = sample_density(&DensitySpec::G2, 500, 12);
    let fit = convex_npmle(&data, 512, 1000, 1e-7).unwrap();
    assert!(fit.converged);
    let est = GridDensity::evaluate(&fit, &canonical_grid(100)).unwrap();
    let mse = mse_grid(&est, &DensitySpec::G2).unwrap();
    assert!(mse < 0.010, "mse {mse}");
    let gre = grenander(&data).unwrap();
    assert!(mean_log_likelihood(&fit, &data) <= mean_log_likelihood(&gre, &data) + 1e-8);
}

#[test]
fn grenander_table_cell() {
    let plan = ExperimentPlan {
        densities: vec![DensitySpec::G1],
        sizes: vec![500],
        reps: 100,
        methods: vec![Method::Gre],
        seed: 1,
        ..ExperimentPlan::default()
    };
    let cells = run_mse_experiment(&plan).unwrap();
    assert_eq!(cells.len(), 1);
    let v = cells[0].mean_mse;
    assert!((0.009..=0.027).contains(&v), "Gre n=500 g1: {v}");
}

#[test]
fn experiment_cells_do_not_depend_on_method_order() {
    let base = ExperimentPlan {
        densities: vec![DensitySpec::G3],
        sizes: vec![60],
        reps: 3,
        methods: vec![Method::Con, Method::Gre],
        seed: 4,
        ..ExperimentPlan::default()
    };
    let swapped = ExperimentPlan { methods: vec![Method::Gre, Method::Con], ..base.clone() };
    let a = run_mse_experiment(&base).unwrap();
    let b = run_mse_experiment(&swapped).unwrap();
    assert_eq!(a[0], b[1]);
    assert_eq!(a[1], b[0]);
}

#[test]
fn contraction_probe_is_deterministic() {
    let cfg = SamplerConfig { burn_in: 100, draws: 50, ..SamplerConfig::default() };
    let a = contraction_probe(&DensitySpec::G1, 2, &[50, 100], 1, 3, &cfg).unwrap();
    let b = contraction_probe(&DensitySpec::G1, 2, &[50, 100], 1, 3, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.medians.len(), 2);
}

#[test]
fn null_indicator_fraction_tracks_alpha0() {
    let sc = MtpScenario::new(0.8, 0.0, 50, Sidedness::OneSided);
    let fr: Vec<f64> = (0..40).map(|s| simulate_pvalues(&sc, s).unwrap().null_fraction()).collect();
    let sd = (0.8f64 * 0.2 / 2000.0).sqrt() / (fr.len() as f64).sqrt();
    assert!((stats::mean(&fr) - 0.8).abs() < 3.0 * sd);
}

#[test]
fn correlated_null_pvalues_are_marginally_uniform() {
    let sc = MtpScenario::new(1.0, 0.5, 50, Sidedness::TwoSided);
    let p = simulate_pvalues(&sc, 6).unwrap();
    assert!(stats::ks_test(&p.values, |x| x).p_value > 0.001);
}

#[test]
fn convex_pi0_is_close_to_the_truth() {
    let sc = MtpScenario::new(0.9, 0.0, 50, Sidedness::TwoSided);
    let est: Vec<f64> = (0..50)
        .map(|r| estimate_pi0_convex(&simulate_pvalues(&sc, mtp_seed(1, &sc, r)).unwrap().values).unwrap())
        .collect();
    let m = stats::mean(&est);
    assert!((m - 0.9).abs() <= 0.07, "mean convex estimate {m}");
}

#[test]
fn bayes_pi0_edge_cases() {
    let sc = MtpScenario::new(1.0, 0.0, 50, Sidedness::TwoSided);
    let p = simulate_pvalues(&sc, 2).unwrap();
    let prior = PriorConfig::for_sample_size(p.values.len(), KMode::adaptive_default());
    let cfg = SamplerConfig::with_seed(2);
    assert!(estimate_pi0_bayes(&p.values, &prior, &cfg).unwrap() > 0.85);

    let spike = vec![0.001; 200];
    let prior = PriorConfig::for_sample_size(200, KMode::adaptive_default());
    assert!(estimate_pi0_bayes(&spike, &prior, &cfg).unwrap() < 0.3);
    assert!(estimate_pi0_bayes(&[0.5, 0.0], &prior, &cfg).is_err());
}

#[test]
fn mtp_smoke_run() {
    let exp = MtpExperiment {
        scenarios: vec![MtpScenario::new(0.9, 0.0, 50, Sidedness::TwoSided)],
        reps: 1,
        seed: 5,
        methods: vec![Pi0Method::Bayes, Pi0Method::Convex],
        sampler: SamplerConfig { burn_in: 200, draws: 100, ..SamplerConfig::default() },
    };
    let rows = run_mtp_experiment(&exp).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.estimate)));
    assert_eq!(rows, run_mtp_experiment(&exp).unwrap());
}
