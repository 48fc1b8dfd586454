//! End-to-end wiring: scenario configuration, one-call simulation, the
//! estimator-comparison harness, and file persistence.
//!
//! The default scenario mirrors the natural-experiment layout: an eight-week
//! calendar in which weeks 1-4 are a quiet baseline period used by the
//! observational estimators (members with notifications there are removed
//! from that sample), week 5 is the A/A pre-period, the anniversary month
//! spans weeks 5-8, notifications in week 6 define treatment and week 8
//! control, and outcomes are compared over weeks 6-7.

use crate::behavior::{
    ground_truth_to_csv, panel_to_csv, simulate_messages, simulate_pageviews, DGPConfig,
    GroundTruth, PanelObservation,
};
use crate::error::{Error, Result};
use crate::estimators::{
    fixed_effects, instrument_from_assignments, ols, ols_with_controls, trim_outliers,
    two_stage_least_squares, welch_t_test, ControlSpec, Design, EstimationResult, TTestResult,
    TrimColumn, TwoStageResult,
};
use crate::notifqueue::{
    assign_groups, assignments_to_csv, schedule_anniversaries, schedule_birthdays,
    schedules_to_csv, GroupAssignment, NotificationSchedule, Occasion, WindowConfig,
};
use crate::synthnet::{
    generate_graph, generate_population, population_to_csv, EdgeList, GraphConfig, MemberRecord,
    PopulationConfig,
};
use std::collections::HashSet;
use std::path::Path;

/// Complete configuration of one simulated natural experiment.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub population: PopulationConfig,
    pub graph: GraphConfig,
    pub dgp: DGPConfig,
    pub window: WindowConfig,
    /// Panel weeks run 1..=n_weeks.
    pub n_weeks: u32,
    /// Simulation month whose work anniversaries are scheduled.
    pub anniversary_month: u32,
    /// Quiet weeks used by the OLS and fixed-effects estimators.
    pub baseline_weeks: Vec<u32>,
    /// Top pageview fraction trimmed from every estimation sample.
    pub trim_fraction: f64,
    /// First-stage F below this flags the instrument as weak.
    pub weak_f_threshold: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            population: PopulationConfig::default(),
            graph: GraphConfig::default(),
            dgp: DGPConfig::default(),
            window: WindowConfig {
                treatment_week: 6,
                control_week: 8,
                observation_weeks: vec![6, 7],
                pre_period_week: 5,
            },
            n_weeks: 8,
            anniversary_month: 2,
            baseline_weeks: vec![1, 2, 3, 4],
            trim_fraction: 0.01,
            weak_f_threshold: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.graph.validate(self.population.n_members)?;
        self.dgp.validate()?;
        self.window.validate()?;
        if self.n_weeks == 0 {
            return Err(Error::InvalidConfig("n_weeks must be >= 1".into()));
        }
        let in_panel = |w: u32| (1..=self.n_weeks).contains(&w);
        for &w in &self.window.observation_weeks {
            if !in_panel(w) {
                return Err(Error::InvalidConfig(format!(
                    "observation week {w} outside the {}-week panel",
                    self.n_weeks
                )));
            }
        }
        if !in_panel(self.window.pre_period_week) {
            return Err(Error::InvalidConfig(
                "pre_period_week outside the panel".into(),
            ));
        }
        if !(1..=12).contains(&self.anniversary_month) {
            return Err(Error::InvalidConfig(
                "anniversary_month must be in 1..=12".into(),
            ));
        }
        if self.baseline_weeks.is_empty() {
            return Err(Error::InvalidConfig("baseline_weeks is empty".into()));
        }
        for &w in &self.baseline_weeks {
            if !in_panel(w) {
                return Err(Error::InvalidConfig(format!(
                    "baseline week {w} outside the {}-week panel",
                    self.n_weeks
                )));
            }
            if self.window.observation_weeks.contains(&w)
                || w == self.window.control_week
                || w == self.window.pre_period_week
            {
                return Err(Error::InvalidConfig(format!(
                    "baseline week {w} overlaps the experiment window"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::InvalidConfig(
                "trim_fraction must be in [0, 1)".into(),
            ));
        }
        if self.weak_f_threshold < 0.0 {
            return Err(Error::InvalidConfig(
                "weak_f_threshold must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Stable textual form used for the manifest hash.
    pub fn canonical_string(&self) -> String {
        let p = &self.population;
        let g = &self.graph;
        let d = &self.dgp;
        let w = &self.window;
        let weeks = |v: &[u32]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        format!(
            "n_members={};activity_mean={};activity_sd={};sociability_sd={};n_countries={};n_industries={};covariate_activity_weight={};mean_degree={};homophily_strength={};true_beta={};response_prob={};spontaneous_rate={};confound_strength={};shock_strength={};noise_sd={};sociability_weight={};base_pageviews={};alpha_log_sd={};tau_sd={};week_effects={:?};treatment_week={};control_week={};observation_weeks={};pre_period_week={};n_weeks={};anniversary_month={};baseline_weeks={};trim_fraction={};weak_f_threshold={}",
            p.n_members,
            p.activity_mean,
            p.activity_sd,
            p.sociability_sd,
            p.n_countries,
            p.n_industries,
            p.covariate_activity_weight,
            g.mean_degree,
            g.homophily_strength,
            d.true_beta,
            d.response_prob,
            d.spontaneous_rate,
            d.confound_strength,
            d.shock_strength,
            d.noise_sd,
            d.sociability_weight,
            d.base_pageviews,
            d.alpha_log_sd,
            d.tau_sd,
            d.week_effects,
            w.treatment_week,
            w.control_week,
            weeks(&w.observation_weeks),
            w.pre_period_week,
            self.n_weeks,
            self.anniversary_month,
            weeks(&self.baseline_weeks),
            self.trim_fraction,
            self.weak_f_threshold,
        )
    }
}

/// Everything one simulation run produces.
#[derive(Debug, Clone)]
pub struct SimulationArtifacts {
    pub members: Vec<MemberRecord>,
    pub edges: EdgeList,
    pub schedules: Vec<NotificationSchedule>,
    pub assignments: Vec<GroupAssignment>,
    pub panel: Vec<PanelObservation>,
    pub ground_truth: GroundTruth,
}

/// Runs population, graph, scheduling, and the behavioral DGP in one call.
pub fn run_simulation(config: &ScenarioConfig, seed: u64) -> Result<SimulationArtifacts> {
    config.validate()?;
    let mut members = generate_population(&config.population, seed)?;
    let edges = generate_graph(&mut members, &config.graph, seed)?;

    let mut schedules = schedule_anniversaries(&members, config.anniversary_month, seed)?;
    schedules.extend(schedule_birthdays(&members)?);
    schedules.sort_unstable_by_key(|s| (s.member_id, s.occasion));

    let assignments = assign_groups(&schedules, &config.window)?;

    let panel_weeks: Vec<u32> = (1..=config.n_weeks).collect();
    let counts = simulate_messages(&members, &edges, &schedules, &panel_weeks, &config.dgp, seed)?;
    let (panel, ground_truth) = simulate_pageviews(&members, &counts, &config.dgp, seed)?;

    Ok(SimulationArtifacts {
        members,
        edges,
        schedules,
        assignments,
        panel,
        ground_truth,
    })
}

/// The data an estimation run needs; borrowed either from a
/// [`SimulationArtifacts`] or from files loaded by a front end.
#[derive(Debug, Clone, Copy)]
pub struct EstimationInputs<'a> {
    pub panel: &'a [PanelObservation],
    pub schedules: &'a [NotificationSchedule],
    pub assignments: &'a [GroupAssignment],
    pub members: &'a [MemberRecord],
}

impl<'a> EstimationInputs<'a> {
    pub fn from_artifacts(artifacts: &'a SimulationArtifacts) -> Self {
        EstimationInputs {
            panel: &artifacts.panel,
            schedules: &artifacts.schedules,
            assignments: &artifacts.assignments,
            members: &artifacts.members,
        }
    }
}

/// The four-model comparison for one occasion, plus the A/A pre-period test.
#[derive(Debug, Clone)]
pub struct ModelComparison {
    pub occasion: Occasion,
    pub ols: EstimationResult,
    pub ols_controls: EstimationResult,
    pub fixed_effects: EstimationResult,
    pub iv: TwoStageResult,
    pub aa_test: TTestResult,
}

/// Baseline rows for the observational estimators: baseline weeks only,
/// members with any notification scheduled in those weeks removed, top
/// pageviews trimmed.
pub fn baseline_sample(
    panel: &[PanelObservation],
    schedules: &[NotificationSchedule],
    baseline_weeks: &[u32],
    trim_fraction: f64,
) -> Result<Vec<PanelObservation>> {
    let week_set: HashSet<u32> = baseline_weeks.iter().copied().collect();
    let notified: HashSet<u64> = schedules
        .iter()
        .filter(|s| week_set.contains(&s.scheduled_week))
        .map(|s| s.member_id)
        .collect();
    let rows: Vec<PanelObservation> = panel
        .iter()
        .filter(|o| week_set.contains(&o.week) && !notified.contains(&o.member_id))
        .copied()
        .collect();
    trim_outliers(&rows, trim_fraction, TrimColumn::Pageviews)
}

/// Observation-window rows for the IV estimator, top pageviews trimmed.
pub fn observation_sample(
    panel: &[PanelObservation],
    window: &WindowConfig,
    trim_fraction: f64,
) -> Result<Vec<PanelObservation>> {
    let week_set: HashSet<u32> = window.observation_weeks.iter().copied().collect();
    let rows: Vec<PanelObservation> = panel
        .iter()
        .filter(|o| week_set.contains(&o.week))
        .copied()
        .collect();
    trim_outliers(&rows, trim_fraction, TrimColumn::Pageviews)
}

/// Pre-period pageviews split into (treatment, control) for the A/A check.
/// The same top-quantile outlier rule used everywhere else is applied to the
/// pooled pre-period rows; under the null it removes from both arms alike.
pub fn pre_period_samples(
    panel: &[PanelObservation],
    assignments: &[GroupAssignment],
    window: &WindowConfig,
    occasion: Occasion,
    trim_fraction: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let instrument = instrument_from_assignments(assignments, occasion);
    let rows: Vec<PanelObservation> = panel
        .iter()
        .filter(|o| o.week == window.pre_period_week && instrument.contains_key(&o.member_id))
        .copied()
        .collect();
    let rows = trim_outliers(&rows, trim_fraction, TrimColumn::Pageviews)?;
    let mut treatment = Vec::new();
    let mut control = Vec::new();
    for o in rows {
        if instrument[&o.member_id] {
            treatment.push(o.pageviews as f64);
        } else {
            control.push(o.pageviews as f64);
        }
    }
    Ok((treatment, control))
}

/// Runs all four models the way the comparison tables are built: OLS and
/// fixed effects on the baseline sample, 2SLS on the observation window with
/// the occasion's natural assignment as instrument.
pub fn estimate_comparison(
    inputs: &EstimationInputs,
    config: &ScenarioConfig,
    occasion: Occasion,
    controls: &ControlSpec,
) -> Result<ModelComparison> {
    let baseline = baseline_sample(
        inputs.panel,
        inputs.schedules,
        &config.baseline_weeks,
        config.trim_fraction,
    )?;
    if baseline.is_empty() {
        return Err(Error::InsufficientData("baseline sample is empty".into()));
    }

    let outcome: Vec<f64> = baseline.iter().map(|o| o.pageviews as f64).collect();
    let mut design = Design::new();
    design.push(
        "messages_received",
        baseline
            .iter()
            .map(|o| o.messages_received as f64)
            .collect(),
    )?;
    let ols_result = ols(&outcome, &design, true)?;
    let ols_controls_result = ols_with_controls(&baseline, inputs.members, controls)?;
    let fe_result = fixed_effects(&baseline)?;

    let iv = estimate_iv(inputs, config, occasion, Some(controls))?;

    let (treat, ctrl) = pre_period_samples(
        inputs.panel,
        inputs.assignments,
        &config.window,
        occasion,
        config.trim_fraction,
    )?;
    let aa_test = welch_t_test(&treat, &ctrl)?;

    Ok(ModelComparison {
        occasion,
        ols: ols_result,
        ols_controls: ols_controls_result,
        fixed_effects: fe_result,
        iv,
        aa_test,
    })
}

/// The IV leg alone: 2SLS over the observation window with the occasion's
/// natural assignment as the instrument.
pub fn estimate_iv(
    inputs: &EstimationInputs,
    config: &ScenarioConfig,
    occasion: Occasion,
    controls: Option<&ControlSpec>,
) -> Result<TwoStageResult> {
    let obs_rows = observation_sample(inputs.panel, &config.window, config.trim_fraction)?;
    let instrument = instrument_from_assignments(inputs.assignments, occasion);
    if instrument.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {occasion} members in treatment or control"
        )));
    }
    two_stage_least_squares(
        &obs_rows,
        &instrument,
        controls.map(|c| (inputs.members, c)),
        config.weak_f_threshold,
    )
}

/// Coefficient-comparison series (one row per model) for external plotting.
pub fn coefficient_csv(comparisons: &[ModelComparison]) -> String {
    let mut out = String::from("occasion,model,coefficient,std_error\n");
    for c in comparisons {
        let rows: [(&str, &EstimationResult); 4] = [
            ("ols", &c.ols),
            ("ols_controls", &c.ols_controls),
            ("fixed_effects", &c.fixed_effects),
            ("iv_second_stage", &c.iv.second_stage),
        ];
        for (name, r) in rows {
            let coef = r
                .coefficient("messages_received")
                .expect("messages coefficient");
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.occasion, name, coef.estimate, coef.std_error
            ));
        }
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Names of the files [`write_artifacts`] produces.
pub const ARTIFACT_FILES: [&str; 7] = [
    "population.csv",
    "edges.csv",
    "schedules.csv",
    "assignments.csv",
    "panel.csv",
    "ground_truth.csv",
    "manifest.txt",
];

/// Writes the six artifact CSVs plus a manifest recording the config hash
/// and seed.
pub fn write_artifacts(
    dir: &Path,
    config: &ScenarioConfig,
    seed: u64,
    artifacts: &SimulationArtifacts,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, contents: String| -> Result<()> {
        std::fs::write(dir.join(name), contents)?;
        Ok(())
    };
    write("population.csv", population_to_csv(&artifacts.members))?;
    write("edges.csv", artifacts.edges.to_csv())?;
    write("schedules.csv", schedules_to_csv(&artifacts.schedules))?;
    write("assignments.csv", assignments_to_csv(&artifacts.assignments))?;
    write("panel.csv", panel_to_csv(&artifacts.panel))?;
    write("ground_truth.csv", ground_truth_to_csv(&artifacts.ground_truth))?;
    let manifest = format!(
        "config_hash = {:016x}\nseed = {}\n",
        fnv1a(config.canonical_string().as_bytes()),
        seed
    );
    write("manifest.txt", manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notifqueue::Group;

    /// A scenario small enough for unit tests but with every moving part on.
    pub(crate) fn small_scenario() -> ScenarioConfig {
        ScenarioConfig {
            population: PopulationConfig {
                n_members: 3000,
                ..Default::default()
            },
            graph: GraphConfig {
                mean_degree: 10.0,
                homophily_strength: 1.0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn simulation_produces_consistent_artifacts() {
        let config = small_scenario();
        let artifacts = run_simulation(&config, 42).unwrap();
        assert_eq!(artifacts.members.len(), 3000);
        assert_eq!(artifacts.panel.len(), 3000 * 8);
        // anniversary schedules only in the anniversary month's weeks
        for s in artifacts
            .schedules
            .iter()
            .filter(|s| s.occasion == Occasion::Anniversary)
        {
            assert!((5..=8).contains(&s.scheduled_week));
        }
        // treatment members really are scheduled in the treatment week
        let treated: Vec<u64> = artifacts
            .assignments
            .iter()
            .filter(|a| a.occasion == Occasion::Anniversary && a.group == Group::Treatment)
            .map(|a| a.member_id)
            .collect();
        assert!(!treated.is_empty());
        for id in treated {
            let s = artifacts
                .schedules
                .iter()
                .find(|s| s.member_id == id && s.occasion == Occasion::Anniversary)
                .unwrap();
            assert_eq!(s.scheduled_week, config.window.treatment_week);
        }
    }

    #[test]
    fn baseline_sample_excludes_notified_members() {
        let config = small_scenario();
        let artifacts = run_simulation(&config, 7).unwrap();
        let baseline = baseline_sample(
            &artifacts.panel,
            &artifacts.schedules,
            &config.baseline_weeks,
            0.0,
        )
        .unwrap();
        let notified: HashSet<u64> = artifacts
            .schedules
            .iter()
            .filter(|s| config.baseline_weeks.contains(&s.scheduled_week))
            .map(|s| s.member_id)
            .collect();
        assert!(!notified.is_empty());
        for row in &baseline {
            assert!(!notified.contains(&row.member_id));
            assert!(config.baseline_weeks.contains(&row.week));
        }
    }

    #[test]
    fn artifacts_write_deterministically() {
        let config = small_scenario();
        let a = run_simulation(&config, 11).unwrap();
        let b = run_simulation(&config, 11).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_artifacts(dir_a.path(), &config, 11, &a).unwrap();
        write_artifacts(dir_b.path(), &config, 11, &b).unwrap();
        for name in ARTIFACT_FILES {
            let bytes_a = std::fs::read(dir_a.path().join(name)).unwrap();
            let bytes_b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn comparison_runs_end_to_end() {
        let config = small_scenario();
        let artifacts = run_simulation(&config, 3).unwrap();
        let comparison = estimate_comparison(
            &EstimationInputs::from_artifacts(&artifacts),
            &config,
            Occasion::Anniversary,
            &ControlSpec::default(),
        )
        .unwrap();
        let beta_iv = comparison
            .iv
            .second_stage
            .coefficient("messages_received")
            .unwrap()
            .estimate;
        let beta_ols = comparison
            .ols
            .coefficient("messages_received")
            .unwrap()
            .estimate;
        assert!(beta_iv.is_finite());
        assert!(
            beta_ols > artifacts.ground_truth.true_beta,
            "OLS {beta_ols} should exceed truth"
        );
        assert!(!comparison.iv.weak_instrument);
        let csv = coefficient_csv(&[comparison]);
        assert_eq!(csv.lines().count(), 5);
    }
}
