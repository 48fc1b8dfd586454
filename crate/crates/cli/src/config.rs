//! Flat `key = value` run configuration.
//!
//! One file configures the whole pipeline. Lines are UTF-8, `#` starts a
//! comment, blank lines are ignored. Every key has a default (the built-in
//! defaults are themselves a complete, valid configuration); unknown or
//! duplicated keys are rejected with their line number.

use peerlift_core::backtest::CorpusConfig;
use peerlift_core::error::Error;
use peerlift_core::pipeline::ScenarioConfig;
use std::collections::HashSet;
use std::path::Path;

/// Everything the CLI reads from a config file.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub corpus: CorpusConfig,
    /// Backtest selection: keep the top N experiments by |message lift|.
    pub backtest_top_n: usize,
    /// Backtest selection: pageview significance threshold.
    pub backtest_significance_alpha: f64,
}

impl RunConfig {
    pub fn defaults() -> Self {
        RunConfig {
            scenario: ScenarioConfig::default(),
            corpus: CorpusConfig::default(),
            backtest_top_n: 100,
            backtest_significance_alpha: 0.05,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self, Error> {
        let mut config = Self::defaults();
        let mut seen: HashSet<String> = HashSet::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Csv {
                line: line_no,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Csv {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            config.apply(key, value, line_no)?;
        }
        config.scenario.validate()?;
        config.corpus.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), Error> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, Error>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| Error::Csv {
                line,
                message: format!("key `{key}`: cannot parse `{value}`: {e}"),
            })
        }
        fn parse_weeks(key: &str, value: &str, line: usize) -> Result<Vec<u32>, Error> {
            value
                .split(',')
                .map(|s| parse::<u32>(key, s.trim(), line))
                .collect()
        }

        let s = &mut self.scenario;
        let c = &mut self.corpus;
        match key {
            // population
            "n_members" => s.population.n_members = parse(key, value, line)?,
            "activity_mean" => s.population.activity_mean = parse(key, value, line)?,
            "activity_sd" => s.population.activity_sd = parse(key, value, line)?,
            "sociability_sd" => s.population.sociability_sd = parse(key, value, line)?,
            "n_countries" => s.population.n_countries = parse(key, value, line)?,
            "n_industries" => s.population.n_industries = parse(key, value, line)?,
            "covariate_activity_weight" => {
                s.population.covariate_activity_weight = parse(key, value, line)?
            }
            // graph
            "mean_degree" => s.graph.mean_degree = parse(key, value, line)?,
            "homophily_strength" => s.graph.homophily_strength = parse(key, value, line)?,
            // behavioral model
            "true_beta" => s.dgp.true_beta = parse(key, value, line)?,
            "response_prob" => s.dgp.response_prob = parse(key, value, line)?,
            "spontaneous_rate" => s.dgp.spontaneous_rate = parse(key, value, line)?,
            "confound_strength" => s.dgp.confound_strength = parse(key, value, line)?,
            "shock_strength" => s.dgp.shock_strength = parse(key, value, line)?,
            "noise_sd" => s.dgp.noise_sd = parse(key, value, line)?,
            "sociability_weight" => s.dgp.sociability_weight = parse(key, value, line)?,
            "base_pageviews" => s.dgp.base_pageviews = parse(key, value, line)?,
            "alpha_log_sd" => s.dgp.alpha_log_sd = parse(key, value, line)?,
            "tau_sd" => s.dgp.tau_sd = parse(key, value, line)?,
            // experiment window
            "treatment_week" => s.window.treatment_week = parse(key, value, line)?,
            "control_week" => s.window.control_week = parse(key, value, line)?,
            "observation_weeks" => s.window.observation_weeks = parse_weeks(key, value, line)?,
            "pre_period_week" => s.window.pre_period_week = parse(key, value, line)?,
            // calendar
            "n_weeks" => s.n_weeks = parse(key, value, line)?,
            "anniversary_month" => s.anniversary_month = parse(key, value, line)?,
            "baseline_weeks" => s.baseline_weeks = parse_weeks(key, value, line)?,
            // estimation
            "trim_fraction" => s.trim_fraction = parse(key, value, line)?,
            "weak_f_threshold" => s.weak_f_threshold = parse(key, value, line)?,
            // backtest corpus
            "backtest_n_experiments" => c.n_experiments = parse(key, value, line)?,
            "backtest_positive_lift_share" => c.positive_lift_share = parse(key, value, line)?,
            "backtest_lift_median" => c.lift_median = parse(key, value, line)?,
            "backtest_lift_log_sd" => c.lift_log_sd = parse(key, value, line)?,
            "backtest_base_messages" => c.base_messages = parse(key, value, line)?,
            "backtest_messages_log_sd" => c.messages_log_sd = parse(key, value, line)?,
            "backtest_base_pageviews" => c.base_pageviews = parse(key, value, line)?,
            "backtest_pageviews_log_sd" => c.pageviews_log_sd = parse(key, value, line)?,
            "backtest_direct_effect_sd" => c.direct_effect_sd = parse(key, value, line)?,
            "backtest_p_treatment_min" => c.p_treatment_min = parse(key, value, line)?,
            "backtest_p_treatment_max" => c.p_treatment_max = parse(key, value, line)?,
            "backtest_n_users_min" => c.n_users_min = parse(key, value, line)?,
            "backtest_n_users_max" => c.n_users_max = parse(key, value, line)?,
            "backtest_pageview_cv" => c.pageview_cv = parse(key, value, line)?,
            // backtest selection
            "backtest_top_n" => self.backtest_top_n = parse(key, value, line)?,
            "backtest_significance_alpha" => {
                self.backtest_significance_alpha = parse(key, value, line)?
            }
            _ => {
                return Err(Error::Csv {
                    line,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }
}
