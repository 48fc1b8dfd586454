//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The expensive default-scenario seed runs are shared across the criteria
//! that use them.

use peerlift_core::backtest::{
    adjust_delta, aggregate_error, simulate_experiment_corpus, AdjustMode, CorpusConfig,
    ExperimentRecord,
};
use peerlift_core::behavior::PanelObservation;
use peerlift_core::estimators::{
    fixed_effects, ols, two_stage_least_squares, welch_t_test, ControlSpec, Design,
};
use peerlift_core::notifqueue::Occasion;
use peerlift_core::pipeline::{
    estimate_comparison, estimate_iv, pre_period_samples, run_simulation, write_artifacts,
    EstimationInputs, ScenarioConfig, ARTIFACT_FILES,
};
use peerlift_core::synthnet::GraphConfig;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

const TRUE_BETA: f64 = 2.0;
const N_SEED_RUNS: u64 = 20;

struct SeedRun {
    ols: f64,
    fe: f64,
    iv: f64,
    iv_se: f64,
    first_stage_f: f64,
    seconds: f64,
}

fn default_runs() -> &'static Vec<SeedRun> {
    static RUNS: OnceLock<Vec<SeedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let config = ScenarioConfig::default();
        assert!(config.population.n_members >= 10_000);
        assert!(config.graph.mean_degree >= 20.0);
        assert_eq!(config.dgp.true_beta, TRUE_BETA);
        (0..N_SEED_RUNS)
            .map(|seed| {
                let t0 = Instant::now();
                let artifacts = run_simulation(&config, seed).expect("simulation");
                let c = estimate_comparison(
                    &EstimationInputs::from_artifacts(&artifacts),
                    &config,
                    Occasion::Anniversary,
                    &ControlSpec::default(),
                )
                .expect("estimation");
                let iv_coef = c
                    .iv
                    .second_stage
                    .coefficient("messages_received")
                    .expect("iv coefficient");
                SeedRun {
                    ols: c.ols.coefficient("messages_received").unwrap().estimate,
                    fe: c
                        .fixed_effects
                        .coefficient("messages_received")
                        .unwrap()
                        .estimate,
                    iv: iv_coef.estimate,
                    iv_se: iv_coef.std_error,
                    first_stage_f: c.iv.first_stage_f,
                    seconds: t0.elapsed().as_secs_f64(),
                }
            })
            .collect()
    })
}

#[test]
fn criterion_iv_recovery() {
    let runs = default_runs();
    let hits = runs
        .iter()
        .filter(|r| (r.iv - TRUE_BETA).abs() <= 3.0 * r.iv_se)
        .count();
    let max_seconds = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let pass = hits * 10 >= runs.len() as usize * 9 && max_seconds <= 120.0;
    println!(
        "[acceptance] IV recovery: {} ({hits}/{} seeds within 3 SE of {TRUE_BETA}, max {max_seconds:.1}s/seed)",
        if pass { "PASS" } else { "FAIL" },
        runs.len()
    );
    assert!(pass);
}

#[test]
fn criterion_bias_ordering() {
    let runs = default_runs();
    let k = runs.len() as f64;
    let mean_ols = runs.iter().map(|r| r.ols).sum::<f64>() / k;
    let mean_fe = runs.iter().map(|r| r.fe).sum::<f64>() / k;
    let mean_iv = runs.iter().map(|r| r.iv).sum::<f64>() / k;
    let pass = mean_ols >= 1.5 * TRUE_BETA && mean_iv < mean_fe && mean_fe < mean_ols;
    println!(
        "[acceptance] bias ordering: {} (mean OLS {mean_ols:.3} >= {:.1}, IV {mean_iv:.3} < FE {mean_fe:.3} < OLS)",
        if pass { "PASS" } else { "FAIL" },
        1.5 * TRUE_BETA
    );
    assert!(pass);
}

#[test]
fn criterion_wald_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_members = rng.random_range(6..30u64);
        let n_weeks = rng.random_range(1..4u32);
        let mut panel = Vec::new();
        let mut instrument = BTreeMap::new();
        for id in 0..n_members {
            // guarantee both arms are populated
            let treated = if id < 2 { id == 0 } else { rng.random_range(0..2) == 0 };
            instrument.insert(id, treated);
            for week in 0..n_weeks {
                panel.push(PanelObservation {
                    member_id: id,
                    week,
                    messages_received: rng.random_range(0..10),
                    pageviews: rng.random_range(0..50),
                });
            }
        }
        let result = match two_stage_least_squares(&panel, &instrument, None, 10.0) {
            Ok(r) => r,
            // zero first-stage contrast: the Wald ratio itself is undefined
            Err(peerlift_core::Error::DivisionDegenerate(_)) => continue,
            Err(e) => panic!("unexpected error: {e}"),
        };
        let beta = result
            .second_stage
            .coefficient("messages_received")
            .unwrap()
            .estimate;
        let rel = (beta - result.wald_estimate).abs() / result.wald_estimate.abs().max(1e-300);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-10,
            "2SLS {beta} vs Wald {} (rel {rel})",
            result.wald_estimate
        );
    }
    println!("[acceptance] Wald identity: PASS (1000 panels, worst relative error {worst:.2e})");
}

#[test]
fn criterion_fe_dummy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 200 {
        let n_members = rng.random_range(2..=50usize);
        let n_weeks = rng.random_range(2..=10usize);
        let mut panel = Vec::new();
        for i in 0..n_members {
            for t in 0..n_weeks {
                panel.push(PanelObservation {
                    member_id: i as u64,
                    week: t as u32,
                    messages_received: rng.random_range(0..6),
                    pageviews: rng.random_range(0..60),
                });
            }
        }
        let fe = match fixed_effects(&panel) {
            Ok(r) => r,
            Err(peerlift_core::Error::NoWithinVariation) => continue,
            Err(e) => panic!("unexpected error: {e}"),
        };

        let mut design = Design::new();
        design
            .push(
                "messages_received",
                panel.iter().map(|o| o.messages_received as f64).collect(),
            )
            .unwrap();
        for i in 1..n_members {
            design
                .push(
                    format!("member_{i}"),
                    panel
                        .iter()
                        .map(|o| if o.member_id == i as u64 { 1.0 } else { 0.0 })
                        .collect(),
                )
                .unwrap();
        }
        for t in 1..n_weeks {
            design
                .push(
                    format!("week_{t}"),
                    panel
                        .iter()
                        .map(|o| if o.week == t as u32 { 1.0 } else { 0.0 })
                        .collect(),
                )
                .unwrap();
        }
        let y: Vec<f64> = panel.iter().map(|o| o.pageviews as f64).collect();
        let dummy = ols(&y, &design, true).unwrap();

        let a = fe.coefficient("messages_received").unwrap().estimate;
        let b = dummy.coefficient("messages_received").unwrap().estimate;
        let rel = (a - b).abs() / b.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(rel <= 1e-8, "within FE {a} vs dummy OLS {b} (rel {rel})");
        checked += 1;
    }
    println!("[acceptance] FE oracle: PASS (200 panels, worst relative error {worst:.2e})");
}

#[test]
fn criterion_aa_calibration() {
    let mut config = ScenarioConfig::default();
    config.graph = GraphConfig {
        mean_degree: 10.0,
        homophily_strength: 1.0,
    };
    let n_seeds = 200u64;
    let mut rejections = 0usize;
    for seed in 0..n_seeds {
        let artifacts = run_simulation(&config, seed).expect("simulation");
        let (treat, ctrl) = pre_period_samples(
            &artifacts.panel,
            &artifacts.assignments,
            &config.window,
            Occasion::Anniversary,
            config.trim_fraction,
        )
        .expect("pre-period samples");
        let test = welch_t_test(&treat, &ctrl).expect("welch");
        if test.p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / n_seeds as f64;
    let pass = (0.03..=0.07).contains(&rate);
    println!(
        "[acceptance] A/A calibration: {} ({rejections}/{n_seeds} rejections = {:.1}%)",
        if pass { "PASS" } else { "FAIL" },
        100.0 * rate
    );
    assert!(pass);
}

#[test]
fn criterion_first_stage_strength_and_weak_flag() {
    let runs = default_runs();
    let min_f = runs.iter().map(|r| r.first_stage_f).fold(f64::INFINITY, f64::min);
    assert!(
        runs.iter().all(|r| r.first_stage_f > 10.0),
        "first-stage F fell to {min_f}"
    );

    // With response_prob = 0 the encouragement moves nothing and the flag
    // must be raised every time.
    let mut config = ScenarioConfig {
        population: peerlift_core::synthnet::PopulationConfig {
            n_members: 2000,
            ..Default::default()
        },
        graph: GraphConfig {
            mean_degree: 10.0,
            homophily_strength: 1.0,
        },
        ..Default::default()
    };
    config.dgp.response_prob = 0.0;
    let mut flagged = 0;
    for seed in 0..20u64 {
        let artifacts = run_simulation(&config, seed).expect("simulation");
        let iv = estimate_iv(
            &EstimationInputs::from_artifacts(&artifacts),
            &config,
            Occasion::Anniversary,
            None,
        )
        .expect("iv");
        if iv.weak_instrument {
            flagged += 1;
        }
    }
    let pass = flagged == 20;
    println!(
        "[acceptance] first stage: {} (min F {min_f:.1} > 10 on {} seeds; weak flag {flagged}/20 under response_prob = 0)",
        if pass { "PASS" } else { "FAIL" },
        runs.len()
    );
    assert!(pass);
}

#[test]
fn criterion_backtest_arithmetic() {
    let record = ExperimentRecord {
        experiment_id: 1,
        p_treatment: 0.5,
        mean_pageviews_t: 110.0,
        mean_pageviews_c: 100.0,
        mean_messages_sent_t: 5.0,
        mean_messages_sent_c: 4.0,
        n_t: 1000,
        n_c: 1000,
        pageview_p_value: 0.01,
    };
    let abs = adjust_delta(&record, 2.0, AdjustMode::Absolute).unwrap();
    assert_eq!(abs.adjusted_delta, 0.11);
    let lit = adjust_delta(&record, 2.0, AdjustMode::Literal).unwrap();
    assert_eq!(lit.adjusted_delta, 0.1025);

    // two experiments with error fractions 0.10 and 0.30 -> epsilon 0.20
    let mut second = record.clone();
    second.experiment_id = 2;
    second.mean_messages_sent_t = 7.0;
    let summary =
        aggregate_error(&[record, second], 2.0, AdjustMode::Absolute, 0.05, 100).unwrap();
    assert!((summary.epsilon - 0.20).abs() < 1e-12, "epsilon {}", summary.epsilon);
    println!(
        "[acceptance] backtest arithmetic: PASS (0.11 / 0.1025 exact, epsilon {:.4})",
        summary.epsilon
    );
}

#[test]
fn criterion_histogram_skew() {
    let config = CorpusConfig {
        n_experiments: 400,
        positive_lift_share: 0.8,
        ..Default::default()
    };
    let corpus = simulate_experiment_corpus(&config, 7).unwrap();
    let positive = corpus
        .iter()
        .filter(|r| r.mean_messages_sent_t > r.mean_messages_sent_c)
        .count();
    assert!(positive as f64 >= 0.7 * corpus.len() as f64);
    let summary = aggregate_error(&corpus, 2.0, AdjustMode::Absolute, 0.05, 100).unwrap();
    let pass = summary.skewness < 0.0;
    println!(
        "[acceptance] histogram skew: {} (skewness {:.3} over {} selected experiments)",
        if pass { "PASS" } else { "FAIL" },
        summary.skewness,
        summary.n_selected
    );
    assert!(pass);
}

#[test]
fn criterion_pipeline_determinism() {
    let config = ScenarioConfig {
        population: peerlift_core::synthnet::PopulationConfig {
            n_members: 3000,
            ..Default::default()
        },
        graph: GraphConfig {
            mean_degree: 10.0,
            homophily_strength: 1.0,
        },
        ..Default::default()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let artifacts = run_simulation(&config, 42).unwrap();
        write_artifacts(dir.path(), &config, 42, &artifacts).unwrap();
    }
    for name in ARTIFACT_FILES {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    println!(
        "[acceptance] determinism: PASS ({} files byte-identical across two runs)",
        ARTIFACT_FILES.len()
    );
}
