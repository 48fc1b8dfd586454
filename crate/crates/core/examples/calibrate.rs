//! Scratch: measure estimator bias across seeds for default-config tuning.

use peerlift_core::estimators::ControlSpec;
use peerlift_core::notifqueue::Occasion;
use peerlift_core::pipeline::{
    estimate_comparison, run_simulation, EstimationInputs, ScenarioConfig,
};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(|s| s.as_str()) == Some("aa") {
        aa_calibration(
            args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200),
            args.get(3).map(|s| s.parse().unwrap()).unwrap_or(4000),
        );
        return;
    }
    let n_seeds: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(5);
    let n_members: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10_000);

    let mut config = ScenarioConfig::default();
    config.population.n_members = n_members;
    if let Some(v) = args.get(3) {
        config.dgp.confound_strength = v.parse().unwrap();
    }
    if let Some(v) = args.get(4) {
        config.dgp.shock_strength = v.parse().unwrap();
    }
    if let Some(v) = args.get(5) {
        config.dgp.spontaneous_rate = v.parse().unwrap();
    }
    if let Some(v) = args.get(6) {
        config.trim_fraction = v.parse().unwrap();
    }
    if let Some(v) = args.get(7) {
        config.dgp.alpha_log_sd = v.parse().unwrap();
    }
    if let Some(v) = args.get(8) {
        config.dgp.noise_sd = v.parse().unwrap();
    }
    if let Some(v) = args.get(9) {
        config.dgp.base_pageviews = v.parse().unwrap();
    }
    if let Some(v) = args.get(10) {
        config.dgp.response_prob = v.parse().unwrap();
    }

    println!(
        "confound={} shock={} rate={} beta={} trim={} alpha_log_sd={} resp={}",
        config.dgp.confound_strength,
        config.dgp.shock_strength,
        config.dgp.spontaneous_rate,
        config.dgp.true_beta,
        config.trim_fraction,
        config.dgp.alpha_log_sd,
        config.dgp.response_prob,
    );
    println!("seed,ols,ols_controls,fe,iv,iv_se,first_stage_f,aa_p,secs");

    let mut sums = [0.0f64; 4];
    let mut hits = 0usize;
    for seed in 0..n_seeds {
        let t0 = Instant::now();
        let artifacts = run_simulation(&config, seed).unwrap();
        let c = estimate_comparison(
            &EstimationInputs::from_artifacts(&artifacts),
            &config,
            Occasion::Anniversary,
            &ControlSpec::default(),
        )
        .unwrap();
        let get = |r: &peerlift_core::estimators::EstimationResult| {
            r.coefficient("messages_received").unwrap().estimate
        };
        let ols = get(&c.ols);
        let olsc = get(&c.ols_controls);
        let fe = get(&c.fixed_effects);
        let ivc = c.iv.second_stage.coefficient("messages_received").unwrap();
        let iv = ivc.estimate;
        let iv_se = ivc.std_error;
        sums[0] += ols;
        sums[1] += olsc;
        sums[2] += fe;
        sums[3] += iv;
        if (iv - config.dgp.true_beta).abs() <= 3.0 * iv_se {
            hits += 1;
        }
        println!(
            "{seed},{ols:.3},{olsc:.3},{fe:.3},{iv:.3},{iv_se:.3},{:.1},{:.3},{:.1}",
            c.iv.first_stage_f,
            c.aa_test.p_value,
            t0.elapsed().as_secs_f64()
        );
    }
    let k = n_seeds as f64;
    println!(
        "means: ols={:.3} ols_controls={:.3} fe={:.3} iv={:.3} | iv within 3se: {hits}/{n_seeds}",
        sums[0] / k,
        sums[1] / k,
        sums[2] / k,
        sums[3] / k
    );
}

fn aa_calibration(n_seeds: u64, n_members: usize) {
    use peerlift_core::estimators::welch_t_test;
    use peerlift_core::pipeline::pre_period_samples;
    use peerlift_core::synthnet::GraphConfig;

    let mut config = ScenarioConfig::default();
    config.population.n_members = n_members;
    config.graph = GraphConfig {
        mean_degree: 10.0,
        homophily_strength: 1.0,
    };
    let t0 = Instant::now();
    let mut rejections = 0usize;
    for seed in 0..n_seeds {
        let artifacts = run_simulation(&config, seed).unwrap();
        let (treat, ctrl) = pre_period_samples(
            &artifacts.panel,
            &artifacts.assignments,
            &config.window,
            Occasion::Anniversary,
            config.trim_fraction,
        )
        .unwrap();
        let test = welch_t_test(&treat, &ctrl).unwrap();
        if test.p_value < 0.05 {
            rejections += 1;
        }
    }
    println!(
        "A/A: {rejections}/{n_seeds} rejections ({:.1}%) in {:.0}s",
        100.0 * rejections as f64 / n_seeds as f64,
        t0.elapsed().as_secs_f64()
    );
}
