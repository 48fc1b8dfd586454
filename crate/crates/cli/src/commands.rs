//! Subcommand implementations. Each returns a core `Result`; `main` maps
//! error kinds onto exit codes.

use crate::config::RunConfig;
use peerlift_core::backtest::{
    adjust_delta, adjusted_to_csv, aggregate_error, experiments_from_csv, experiments_to_csv,
    histogram_to_csv, simulate_experiment_corpus, summary_to_csv, AdjustMode, AdjustedDelta,
    ErrorSummary, ExperimentRecord,
};
use peerlift_core::behavior::{panel_from_csv, PanelObservation};
use peerlift_core::error::{Error, Result};
use peerlift_core::estimators::report::{
    comparison_markdown, first_stage_markdown, results_to_csv, ComparisonColumn,
};
use peerlift_core::estimators::{
    fixed_effects, ols_with_controls, ols_with_se, welch_t_test, ControlSpec, Design,
    EstimationResult, SeKind,
};
use peerlift_core::notifqueue::{
    assignments_from_csv, schedules_from_csv, GroupAssignment, NotificationSchedule, Occasion,
};
use peerlift_core::pipeline::{
    baseline_sample, coefficient_csv, estimate_comparison, estimate_iv, pre_period_samples,
    run_simulation, write_artifacts, EstimationInputs, ModelComparison,
};
use peerlift_core::synthnet::{population_from_csv, MemberRecord};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Ols,
    OlsControls,
    Fe,
    Iv,
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ols" => Ok(Model::Ols),
            "ols_controls" => Ok(Model::OlsControls),
            "fe" => Ok(Model::Fe),
            "iv" => Ok(Model::Iv),
            other => Err(format!(
                "unknown model `{other}` (expected ols|ols_controls|fe|iv)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Md,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "md" => Ok(OutputFormat::Md),
            other => Err(format!("unknown format `{other}` (expected csv|md)")),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::defaults()),
    }
}

fn write_out(out_dir: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

pub fn cmd_simulate(config_path: Option<&Path>, seed: u64, out_dir: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let artifacts = run_simulation(&config.scenario, seed)?;
    write_artifacts(out_dir, &config.scenario, seed, &artifacts)?;
    println!(
        "wrote {} members, {} edges, {} schedules, {} panel rows to {}",
        artifacts.members.len(),
        artifacts.edges.len(),
        artifacts.schedules.len(),
        artifacts.panel.len(),
        out_dir.display()
    );
    Ok(())
}

pub struct EstimateArgs {
    pub panel: PathBuf,
    pub assignments: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub schedules: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub model: Option<Model>,
    pub all_models: bool,
    pub occasion: Occasion,
    pub aa_test: bool,
    pub robust_se: bool,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

struct LoadedInputs {
    panel: Vec<PanelObservation>,
    schedules: Vec<NotificationSchedule>,
    assignments: Vec<GroupAssignment>,
    members: Vec<MemberRecord>,
}

impl LoadedInputs {
    fn as_inputs(&self) -> EstimationInputs<'_> {
        EstimationInputs {
            panel: &self.panel,
            schedules: &self.schedules,
            assignments: &self.assignments,
            members: &self.members,
        }
    }
}

fn load_inputs(args: &EstimateArgs, need_members: bool, need_assignments: bool) -> Result<LoadedInputs> {
    let panel = panel_from_csv(&std::fs::read_to_string(&args.panel)?)?;
    if panel.is_empty() {
        return Err(Error::InsufficientData(format!(
            "panel file {} has no rows",
            args.panel.display()
        )));
    }
    let schedules = match &args.schedules {
        Some(p) => schedules_from_csv(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let assignments = match &args.assignments {
        Some(p) => assignments_from_csv(&std::fs::read_to_string(p)?)?,
        None if need_assignments => {
            return Err(Error::InvalidConfig(
                "--assignments is required for this command".into(),
            ))
        }
        None => Vec::new(),
    };
    let members = match &args.population {
        Some(p) => population_from_csv(&std::fs::read_to_string(p)?)?,
        None if need_members => {
            return Err(Error::InvalidConfig(
                "--population is required for this command".into(),
            ))
        }
        None => Vec::new(),
    };
    Ok(LoadedInputs {
        panel,
        schedules,
        assignments,
        members,
    })
}

fn single_column(title: &str, result: &EstimationResult, controls: bool, fe: bool) -> String {
    comparison_markdown(
        "Pageviews",
        "messages_received",
        &[ComparisonColumn {
            title: title.to_string(),
            result,
            includes_controls: controls,
            includes_user_fe: fe,
            includes_time_fe: fe,
        }],
    )
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let scenario = &config.scenario;
    let controls = ControlSpec::default();

    let need_members = args.all_models || matches!(args.model, Some(Model::OlsControls | Model::Iv));
    let need_assignments = args.aa_test || args.all_models || matches!(args.model, Some(Model::Iv));
    let loaded = load_inputs(args, need_members, need_assignments)?;
    let inputs = loaded.as_inputs();

    if args.aa_test {
        let (treat, ctrl) = pre_period_samples(
            inputs.panel,
            inputs.assignments,
            &scenario.window,
            args.occasion,
            scenario.trim_fraction,
        )?;
        let test = welch_t_test(&treat, &ctrl)?;
        println!(
            "A/A pre-period week {} ({} treatment vs {} control): {}",
            scenario.window.pre_period_week,
            treat.len(),
            ctrl.len(),
            test.report_string()
        );
    }

    if args.all_models {
        let comparison = estimate_comparison(&inputs, scenario, args.occasion, &controls)?;
        print_warnings(&comparison.ols_controls);
        let table = comparison_table(&comparison);
        let stage1 = first_stage_markdown(&[(
            format!("{}", args.occasion),
            &comparison.iv,
        )]);
        if args.format == OutputFormat::Md {
            println!("{table}");
            println!("{stage1}");
        } else {
            let results: Vec<&EstimationResult> = vec![
                &comparison.ols,
                &comparison.ols_controls,
                &comparison.fixed_effects,
                &comparison.iv.second_stage,
            ];
            print!("{}", results_to_csv(&results));
        }
        if comparison.iv.weak_instrument {
            println!(
                "warning: weak instrument (first-stage F = {:.2})",
                comparison.iv.first_stage_f
            );
        }
        write_out(args.out.as_deref(), "comparison.md", &table)?;
        write_out(args.out.as_deref(), "first_stage.md", &stage1)?;
        write_out(
            args.out.as_deref(),
            "coefficients.csv",
            &coefficient_csv(std::slice::from_ref(&comparison)),
        )?;
        let results: Vec<&EstimationResult> = vec![
            &comparison.ols,
            &comparison.ols_controls,
            &comparison.fixed_effects,
            &comparison.iv.second_stage,
        ];
        write_out(args.out.as_deref(), "estimates.csv", &results_to_csv(&results))?;
        return Ok(());
    }

    let model = args.model.ok_or_else(|| {
        Error::InvalidConfig("either --model or --all-models is required".into())
    })?;

    let (result, title, has_controls, has_fe) = match model {
        Model::Ols => {
            let baseline = baseline_sample(
                inputs.panel,
                inputs.schedules,
                &scenario.baseline_weeks,
                scenario.trim_fraction,
            )?;
            if baseline.is_empty() {
                return Err(Error::InsufficientData("baseline sample is empty".into()));
            }
            let outcome: Vec<f64> = baseline.iter().map(|o| o.pageviews as f64).collect();
            let mut design = Design::new();
            design.push(
                "messages_received",
                baseline.iter().map(|o| o.messages_received as f64).collect(),
            )?;
            let se = if args.robust_se { SeKind::Hc1 } else { SeKind::Classical };
            (ols_with_se(&outcome, &design, true, se)?, "OLS", false, false)
        }
        Model::OlsControls => {
            let baseline = baseline_sample(
                inputs.panel,
                inputs.schedules,
                &scenario.baseline_weeks,
                scenario.trim_fraction,
            )?;
            let result = ols_with_controls(&baseline, inputs.members, &controls)?;
            print_warnings(&result);
            (result, "OLS", true, false)
        }
        Model::Fe => {
            let baseline = baseline_sample(
                inputs.panel,
                inputs.schedules,
                &scenario.baseline_weeks,
                scenario.trim_fraction,
            )?;
            (fixed_effects(&baseline)?, "User FE", false, true)
        }
        Model::Iv => {
            let iv = estimate_iv(&inputs, scenario, args.occasion, Some(&controls))?;
            if iv.weak_instrument {
                println!(
                    "warning: weak instrument (first-stage F = {:.2})",
                    iv.first_stage_f
                );
            }
            let stage1 = first_stage_markdown(&[(format!("{}", args.occasion), &iv)]);
            if args.format == OutputFormat::Md {
                println!("{stage1}");
            }
            write_out(args.out.as_deref(), "first_stage.md", &stage1)?;
            (iv.second_stage.clone(), "Instrumental Variable", true, false)
        }
    };

    match args.format {
        OutputFormat::Md => println!("{}", single_column(title, &result, has_controls, has_fe)),
        OutputFormat::Csv => print!("{}", results_to_csv(&[&result])),
    }
    write_out(args.out.as_deref(), "estimates.csv", &results_to_csv(&[&result]))?;
    Ok(())
}

fn print_warnings(result: &EstimationResult) {
    for w in &result.warnings {
        println!("warning: {w}");
    }
}

fn comparison_table(c: &ModelComparison) -> String {
    comparison_markdown(
        "Pageviews",
        "messages_received",
        &[
            ComparisonColumn {
                title: "OLS".into(),
                result: &c.ols,
                includes_controls: false,
                includes_user_fe: false,
                includes_time_fe: false,
            },
            ComparisonColumn {
                title: "OLS".into(),
                result: &c.ols_controls,
                includes_controls: true,
                includes_user_fe: false,
                includes_time_fe: false,
            },
            ComparisonColumn {
                title: "User FE".into(),
                result: &c.fixed_effects,
                includes_controls: false,
                includes_user_fe: true,
                includes_time_fe: true,
            },
            ComparisonColumn {
                title: "Instrumental Variable".into(),
                result: &c.iv.second_stage,
                includes_controls: true,
                includes_user_fe: false,
                includes_time_fe: false,
            },
        ],
    )
}

pub struct BacktestArgs {
    pub experiments: Option<PathBuf>,
    pub generate: bool,
    pub beta: f64,
    pub mode: AdjustMode,
    pub alpha: Option<f64>,
    pub top_n: Option<usize>,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    if !args.beta.is_finite() {
        return Err(Error::InvalidConfig("--beta must be finite".into()));
    }
    let config = load_config(args.config.as_deref())?;
    let records: Vec<ExperimentRecord> = match (&args.experiments, args.generate) {
        (Some(path), false) => experiments_from_csv(&std::fs::read_to_string(path)?)?,
        (None, true) => {
            let corpus = simulate_experiment_corpus(&config.corpus, args.seed)?;
            write_out(args.out.as_deref(), "experiments.csv", &experiments_to_csv(&corpus))?;
            corpus
        }
        (Some(_), true) => {
            return Err(Error::InvalidConfig(
                "--experiments and --generate are mutually exclusive".into(),
            ))
        }
        (None, false) => {
            return Err(Error::InvalidConfig(
                "either --experiments FILE or --generate is required".into(),
            ))
        }
    };

    let alpha = args.alpha.unwrap_or(config.backtest_significance_alpha);
    let top_n = args.top_n.unwrap_or(config.backtest_top_n);

    let deltas: Vec<AdjustedDelta> = records
        .iter()
        .map(|r| adjust_delta(r, args.beta, args.mode))
        .collect::<Result<_>>()?;
    write_out(args.out.as_deref(), "adjusted_deltas.csv", &adjusted_to_csv(&deltas))?;

    let summary = aggregate_error(&records, args.beta, args.mode, alpha, top_n)?;
    print_summary(&summary, args.mode, args.beta);
    write_out(args.out.as_deref(), "backtest_summary.csv", &summary_to_csv(&summary))?;
    write_out(
        args.out.as_deref(),
        "error_histogram.csv",
        &histogram_to_csv(&summary.histogram),
    )?;
    Ok(())
}

fn print_summary(summary: &ErrorSummary, mode: AdjustMode, beta: f64) {
    println!(
        "backtest (beta = {beta}, mode = {mode}): {} experiments selected",
        summary.n_selected
    );
    println!(
        "epsilon = {:.4} ({:.1}%), median = {:.4} ({:.1}%)",
        summary.epsilon,
        100.0 * summary.epsilon,
        summary.median_error,
        100.0 * summary.median_error
    );
    println!("signed-error skewness = {:.3}", summary.skewness);
    if summary.n_skipped_small_delta > 0 {
        println!(
            "note: {} experiment(s) with |raw delta| < 1e-12 excluded from the averages",
            summary.n_skipped_small_delta
        );
    }
}

pub fn cmd_report(config_path: Option<&Path>, seed: u64, out_dir: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let scenario = &config.scenario;
    let controls = ControlSpec::default();

    println!("simulating {} members...", scenario.population.n_members);
    let artifacts = run_simulation(scenario, seed)?;
    let inputs = EstimationInputs::from_artifacts(&artifacts);

    let mut comparisons = Vec::new();
    for occasion in [Occasion::Birthday, Occasion::Anniversary] {
        println!("estimating {occasion} models...");
        comparisons.push(estimate_comparison(&inputs, scenario, occasion, &controls)?);
    }

    // Backtest against the anniversary IV estimate.
    let beta = comparisons[1]
        .iv
        .second_stage
        .coefficient("messages_received")
        .expect("messages coefficient")
        .estimate;
    println!("backtesting with estimated beta = {beta:.3}...");
    let corpus = simulate_experiment_corpus(&config.corpus, seed)?;
    let summary = aggregate_error(
        &corpus,
        beta,
        AdjustMode::Absolute,
        config.backtest_significance_alpha,
        config.backtest_top_n,
    )?;

    let mut report = String::new();
    report.push_str("# Peer-effect estimation report\n\n");
    report.push_str(&format!(
        "Simulated population: {} members, mean degree {:.1}, true beta = {}.\n\n",
        artifacts.members.len(),
        artifacts.edges.mean_degree(artifacts.members.len()),
        artifacts.ground_truth.true_beta
    ));

    for c in &comparisons {
        report.push_str(&format!("## {} encouragement\n\n", c.occasion));
        report.push_str(&format!(
            "A/A pre-period check (week {}): {}\n\n",
            scenario.window.pre_period_week,
            c.aa_test.report_string()
        ));
        report.push_str(&comparison_table(c));
        report.push('\n');
    }

    report.push_str("## Stage 1 regressions\n\n");
    let stage1 = first_stage_markdown(&[
        ("Birthday".to_string(), &comparisons[0].iv),
        ("Work anniversary".to_string(), &comparisons[1].iv),
    ]);
    report.push_str(&stage1);
    report.push('\n');

    report.push_str("## Backtest\n\n");
    report.push_str(&format!(
        "Applying beta = {beta:.3} to {} synthetic experiments (top {} by |message lift|, p <= {}):\n\n",
        corpus.len(),
        config.backtest_top_n,
        config.backtest_significance_alpha
    ));
    report.push_str(&format!(
        "- selected experiments: {}\n- epsilon (mean relative error): {:.1}%\n- median relative error: {:.1}%\n- signed-error skewness: {:.3}\n",
        summary.n_selected,
        100.0 * summary.epsilon,
        100.0 * summary.median_error,
        summary.skewness
    ));

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.md"), &report)?;
    std::fs::write(out_dir.join("coefficients.csv"), coefficient_csv(&comparisons))?;
    std::fs::write(out_dir.join("experiments.csv"), experiments_to_csv(&corpus))?;
    std::fs::write(out_dir.join("backtest_summary.csv"), summary_to_csv(&summary))?;
    std::fs::write(
        out_dir.join("error_histogram.csv"),
        histogram_to_csv(&summary.histogram),
    )?;
    println!("report written to {}", out_dir.join("report.md").display());
    Ok(())
}
