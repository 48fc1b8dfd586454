//! Network-effect adjustment of A/B experiment results.
//!
//! Given an estimated peer-effect coefficient, each experiment's pageview
//! lift is corrected for the messages its treatment added or removed: the
//! message delta, scaled by the coefficient and discounted by
//! `R = 1 - P(treatment)` (spillover onto treatment members is already in
//! the measured lift), is folded into the treatment mean before the delta is
//! recomputed.
//!
//! Two adjustment modes are provided. `absolute` multiplies the coefficient
//! (pageviews per message) by the absolute message difference, which is
//! dimensionally consistent. `literal` multiplies it by the relative message
//! delta, following the adjusted-delta formula exactly as printed. They
//! agree when the control message mean is 1.

use crate::error::{Error, Result};
use crate::io::{data_lines, fields, parse_field};
use crate::rng::{substream, Domain};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};
use std::fmt;
use std::str::FromStr;

/// Summary statistics of one A/B experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub experiment_id: u64,
    /// Share of members assigned to treatment, in (0, 1).
    pub p_treatment: f64,
    pub mean_pageviews_t: f64,
    pub mean_pageviews_c: f64,
    pub mean_messages_sent_t: f64,
    pub mean_messages_sent_c: f64,
    pub n_t: u64,
    pub n_c: u64,
    /// p-value of the experiment's pageview movement.
    pub pageview_p_value: f64,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_treatment > 0.0 && self.p_treatment < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "experiment {}: p_treatment must be in (0,1), got {}",
                self.experiment_id, self.p_treatment
            )));
        }
        if self.mean_pageviews_t < 0.0
            || self.mean_pageviews_c < 0.0
            || self.mean_messages_sent_t < 0.0
            || self.mean_messages_sent_c < 0.0
        {
            return Err(Error::InvalidConfig(format!(
                "experiment {}: means must be >= 0",
                self.experiment_id
            )));
        }
        if !(0.0..=1.0).contains(&self.pageview_p_value) {
            return Err(Error::InvalidConfig(format!(
                "experiment {}: pageview_p_value must be in [0,1]",
                self.experiment_id
            )));
        }
        Ok(())
    }
}

/// How the message delta enters the adjustment formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjustMode {
    /// Coefficient times the absolute message difference (default).
    #[default]
    Absolute,
    /// Coefficient times the relative message delta, as printed.
    Literal,
}

impl fmt::Display for AdjustMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdjustMode::Absolute => write!(f, "absolute"),
            AdjustMode::Literal => write!(f, "literal"),
        }
    }
}

impl FromStr for AdjustMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "absolute" => Ok(AdjustMode::Absolute),
            "literal" => Ok(AdjustMode::Literal),
            other => Err(format!("unknown mode `{other}` (expected absolute|literal)")),
        }
    }
}

/// An experiment's lift before and after the network-effect correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedDelta {
    pub experiment_id: u64,
    /// (PV_T - PV_C) / PV_C
    pub raw_delta: f64,
    pub adjusted_delta: f64,
    /// (MS_T - MS_C) / MS_C
    pub messages_delta: f64,
    /// R = 1 - P(treatment)
    pub discount: f64,
    /// |raw - adjusted| / |raw|
    pub error_fraction: f64,
}

/// Relative pageview lift of one experiment.
pub fn raw_delta(record: &ExperimentRecord) -> Result<f64> {
    record.validate()?;
    if record.mean_pageviews_c <= 0.0 {
        return Err(Error::DivisionDegenerate(format!(
            "experiment {}: control pageview mean is zero",
            record.experiment_id
        )));
    }
    Ok((record.mean_pageviews_t - record.mean_pageviews_c) / record.mean_pageviews_c)
}

/// Applies the network-effect correction to one experiment.
pub fn adjust_delta(record: &ExperimentRecord, beta: f64, mode: AdjustMode) -> Result<AdjustedDelta> {
    let raw = raw_delta(record)?;
    let discount = 1.0 - record.p_treatment;
    let message_diff = record.mean_messages_sent_t - record.mean_messages_sent_c;

    let messages_delta = if record.mean_messages_sent_c > 0.0 {
        message_diff / record.mean_messages_sent_c
    } else if message_diff == 0.0 {
        0.0
    } else {
        return Err(Error::DivisionDegenerate(format!(
            "experiment {}: control message mean is zero",
            record.experiment_id
        )));
    };

    let adjustment = match mode {
        AdjustMode::Absolute => beta * message_diff * discount,
        AdjustMode::Literal => beta * messages_delta * discount,
    };
    let adjusted = (record.mean_pageviews_t + adjustment - record.mean_pageviews_c)
        / record.mean_pageviews_c;
    let error_fraction = if raw != 0.0 {
        ((raw - adjusted) / raw).abs()
    } else if adjusted == raw {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(AdjustedDelta {
        experiment_id: record.experiment_id,
        raw_delta: raw,
        adjusted_delta: adjusted,
        messages_delta,
        discount,
        error_fraction,
    })
}

/// One histogram bin of the signed-error series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Aggregate error of the backtest over the selected experiments.
#[derive(Debug, Clone)]
pub struct ErrorSummary {
    /// Mean of |raw - adjusted| / |raw| over the selection.
    pub epsilon: f64,
    pub median_error: f64,
    /// Experiments surviving the top-N ranking and the significance filter.
    pub n_selected: usize,
    /// Of those, experiments dropped from the averages because |raw| < 1e-12.
    pub n_skipped_small_delta: usize,
    /// Signed errors (raw - adjusted) / |raw| per retained experiment, in
    /// experiment-id order.
    pub signed_errors: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
    /// Sample skewness of the signed errors.
    pub skewness: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Builds the histogram series over `n_bins` equal-width bins.
pub fn histogram(values: &[f64], n_bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || n_bins == 0 {
        return Vec::new();
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return vec![HistogramBin {
            low: min,
            high: max,
            count: values.len(),
        }];
    }
    let width = (max - min) / n_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            low: min + i as f64 * width,
            high: min + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = (((v - min) / width) as usize).min(n_bins - 1);
        bins[idx].count += 1;
    }
    bins
}

/// Ranks experiments by message impact, keeps the significant movers, and
/// reports the mean/median relative error between raw and adjusted deltas
/// plus the signed-error histogram.
pub fn aggregate_error(
    records: &[ExperimentRecord],
    beta: f64,
    mode: AdjustMode,
    significance_alpha: f64,
    top_n: usize,
) -> Result<ErrorSummary> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no experiment records".into()));
    }
    if !(0.0..=1.0).contains(&significance_alpha) {
        return Err(Error::InvalidConfig(format!(
            "significance_alpha must be in [0,1], got {significance_alpha}"
        )));
    }

    let mut adjusted: Vec<(AdjustedDelta, f64)> = Vec::with_capacity(records.len());
    for r in records {
        let a = adjust_delta(r, beta, mode)?;
        adjusted.push((a, r.pageview_p_value));
    }

    // Rank by |messages_delta| descending; ties break on experiment id so the
    // selection is deterministic.
    adjusted.sort_by(|(a, _), (b, _)| {
        b.messages_delta
            .abs()
            .partial_cmp(&a.messages_delta.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.experiment_id.cmp(&b.experiment_id))
    });
    adjusted.truncate(top_n);

    let mut selected: Vec<AdjustedDelta> = adjusted
        .into_iter()
        .filter(|(_, p)| *p <= significance_alpha)
        .map(|(a, _)| a)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no experiment in the top {top_n} moved pageviews at p <= {significance_alpha}"
        )));
    }
    selected.sort_by_key(|a| a.experiment_id);

    let mut n_skipped = 0usize;
    let mut error_fractions = Vec::new();
    let mut signed_errors = Vec::new();
    for a in &selected {
        if a.raw_delta.abs() < 1e-12 {
            n_skipped += 1;
            continue;
        }
        error_fractions.push(a.error_fraction);
        signed_errors.push((a.raw_delta - a.adjusted_delta) / a.raw_delta.abs());
    }
    if error_fractions.is_empty() {
        return Err(Error::EmptySelection(
            "every selected experiment has a near-zero raw delta".into(),
        ));
    }

    let epsilon = error_fractions.iter().sum::<f64>() / error_fractions.len() as f64;
    let mut sorted = error_fractions.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_error = median(&sorted);
    let hist = histogram(&signed_errors, 20);
    let skewness = sample_skewness(&signed_errors);

    Ok(ErrorSummary {
        epsilon,
        median_error,
        n_selected: selected.len(),
        n_skipped_small_delta: n_skipped,
        signed_errors,
        histogram: hist,
        skewness,
    })
}

/// Parameters of the synthetic experiment corpus.
#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_experiments: usize,
    /// Share of experiments that increase messages sent.
    pub positive_lift_share: f64,
    /// Median of the |message lift| distribution (lognormal).
    pub lift_median: f64,
    /// Log-scale sigma of the |message lift| distribution. The default pair
    /// gives mean |lift| about 8.3% with median 4.6%.
    pub lift_log_sd: f64,
    /// Median control-arm messages sent per user.
    pub base_messages: f64,
    pub messages_log_sd: f64,
    /// Median control-arm pageviews per user.
    pub base_pageviews: f64,
    pub pageviews_log_sd: f64,
    /// Standard deviation of the experiment's direct relative pageview effect.
    pub direct_effect_sd: f64,
    pub p_treatment_min: f64,
    pub p_treatment_max: f64,
    pub n_users_min: u64,
    pub n_users_max: u64,
    /// Pageview coefficient of variation used in the p-value proxy.
    pub pageview_cv: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_experiments: 200,
            positive_lift_share: 0.8,
            lift_median: 0.046,
            lift_log_sd: 1.086,
            base_messages: 5.0,
            messages_log_sd: 0.5,
            base_pageviews: 100.0,
            pageviews_log_sd: 0.3,
            direct_effect_sd: 0.015,
            p_treatment_min: 0.1,
            p_treatment_max: 0.9,
            n_users_min: 100_000,
            n_users_max: 500_000,
            pageview_cv: 1.5,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experiments < 1 {
            return Err(Error::InvalidConfig(
                "n_experiments must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.positive_lift_share) {
            return Err(Error::InvalidConfig(
                "positive_lift_share must be in [0,1]".into(),
            ));
        }
        if self.lift_median <= 0.0 || self.base_messages <= 0.0 || self.base_pageviews <= 0.0 {
            return Err(Error::InvalidConfig(
                "lift_median, base_messages, base_pageviews must be positive".into(),
            ));
        }
        if !(self.p_treatment_min > 0.0
            && self.p_treatment_min <= self.p_treatment_max
            && self.p_treatment_max < 1.0)
        {
            return Err(Error::InvalidConfig(
                "need 0 < p_treatment_min <= p_treatment_max < 1".into(),
            ));
        }
        if self.n_users_min == 0 || self.n_users_min > self.n_users_max {
            return Err(Error::InvalidConfig(
                "need 0 < n_users_min <= n_users_max".into(),
            ));
        }
        Ok(())
    }

    /// Expected mean |message lift| implied by the lognormal parameters.
    pub fn expected_mean_abs_lift(&self) -> f64 {
        self.lift_median * (0.5 * self.lift_log_sd * self.lift_log_sd).exp()
    }
}

/// Generates a deterministic synthetic experiment corpus, one substream per
/// experiment. Output is ordered by experiment id.
pub fn simulate_experiment_corpus(config: &CorpusConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let std_normal = NormalDist::new(0.0, 1.0).expect("unit normal");

    let mut records = Vec::with_capacity(config.n_experiments);
    for i in 0..config.n_experiments as u64 {
        let mut rng = substream(seed, Domain::ExperimentCorpus, i);

        let p_treatment = if config.p_treatment_min == config.p_treatment_max {
            config.p_treatment_min
        } else {
            rng.random_range(config.p_treatment_min..config.p_treatment_max)
        };

        let magnitude =
            (config.lift_median.ln() + config.lift_log_sd * unit.sample(&mut rng)).exp();
        let positive = rng.random_range(0.0..1.0) < config.positive_lift_share;
        let lift = if positive {
            magnitude
        } else {
            -magnitude.min(0.9)
        };

        let ms_c = (config.base_messages.ln() + config.messages_log_sd * unit.sample(&mut rng)).exp();
        let ms_t = ms_c * (1.0 + lift);

        let pv_c =
            (config.base_pageviews.ln() + config.pageviews_log_sd * unit.sample(&mut rng)).exp();
        let direct = config.direct_effect_sd * unit.sample(&mut rng);
        let pv_t = (pv_c * (1.0 + direct)).max(0.0);

        let n_users = rng.random_range(config.n_users_min..=config.n_users_max);
        let n_t = ((n_users as f64) * p_treatment).round().max(1.0) as u64;
        let n_c = (n_users - n_t).max(1);

        // p-value proxy: z-test of the relative pageview effect against the
        // sampling noise implied by the pageview coefficient of variation.
        let se_rel = config.pageview_cv * ((1.0 / n_t as f64) + (1.0 / n_c as f64)).sqrt();
        let z = if se_rel > 0.0 { direct.abs() / se_rel } else { 0.0 };
        let pageview_p_value = (2.0 * (1.0 - std_normal.cdf(z))).clamp(0.0, 1.0);

        records.push(ExperimentRecord {
            experiment_id: i,
            p_treatment,
            mean_pageviews_t: pv_t,
            mean_pageviews_c: pv_c,
            mean_messages_sent_t: ms_t,
            mean_messages_sent_c: ms_c,
            n_t,
            n_c,
            pageview_p_value,
        });
    }
    Ok(records)
}

pub const EXPERIMENT_HEADER: &str = "experiment_id,p_treatment,mean_pageviews_t,mean_pageviews_c,mean_messages_sent_t,mean_messages_sent_c,n_t,n_c,pageview_p_value";

pub fn experiments_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from(EXPERIMENT_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.experiment_id,
            r.p_treatment,
            r.mean_pageviews_t,
            r.mean_pageviews_c,
            r.mean_messages_sent_t,
            r.mean_messages_sent_c,
            r.n_t,
            r.n_c,
            r.pageview_p_value
        ));
    }
    out
}

pub fn experiments_from_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut records = Vec::new();
    for (line_no, line) in data_lines(text, EXPERIMENT_HEADER)? {
        let f = fields(line_no, line, 9)?;
        let record = ExperimentRecord {
            experiment_id: parse_field(line_no, "experiment_id", f[0])?,
            p_treatment: parse_field(line_no, "p_treatment", f[1])?,
            mean_pageviews_t: parse_field(line_no, "mean_pageviews_t", f[2])?,
            mean_pageviews_c: parse_field(line_no, "mean_pageviews_c", f[3])?,
            mean_messages_sent_t: parse_field(line_no, "mean_messages_sent_t", f[4])?,
            mean_messages_sent_c: parse_field(line_no, "mean_messages_sent_c", f[5])?,
            n_t: parse_field(line_no, "n_t", f[6])?,
            n_c: parse_field(line_no, "n_c", f[7])?,
            pageview_p_value: parse_field(line_no, "pageview_p_value", f[8])?,
        };
        records.push(record);
    }
    Ok(records)
}

pub const ADJUSTED_HEADER: &str =
    "experiment_id,raw_delta,adjusted_delta,messages_delta,discount,error_fraction";

pub fn adjusted_to_csv(deltas: &[AdjustedDelta]) -> String {
    let mut out = String::from(ADJUSTED_HEADER);
    out.push('\n');
    for d in deltas {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.experiment_id,
            d.raw_delta,
            d.adjusted_delta,
            d.messages_delta,
            d.discount,
            d.error_fraction
        ));
    }
    out
}

pub fn histogram_to_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for b in bins {
        out.push_str(&format!("{},{},{}\n", b.low, b.high, b.count));
    }
    out
}

pub fn summary_to_csv(summary: &ErrorSummary) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("epsilon,{}\n", summary.epsilon));
    out.push_str(&format!("median_error,{}\n", summary.median_error));
    out.push_str(&format!("n_selected,{}\n", summary.n_selected));
    out.push_str(&format!(
        "n_skipped_small_delta,{}\n",
        summary.n_skipped_small_delta
    ));
    out.push_str(&format!("skewness,{}\n", summary.skewness));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked_example() -> ExperimentRecord {
        ExperimentRecord {
            experiment_id: 1,
            p_treatment: 0.5,
            mean_pageviews_t: 110.0,
            mean_pageviews_c: 100.0,
            mean_messages_sent_t: 5.0,
            mean_messages_sent_c: 4.0,
            n_t: 1000,
            n_c: 1000,
            pageview_p_value: 0.01,
        }
    }

    #[test]
    fn raw_delta_hand_arithmetic() {
        assert_eq!(raw_delta(&worked_example()).unwrap(), 0.10);
        let mut null = worked_example();
        null.mean_pageviews_t = 100.0;
        assert_eq!(raw_delta(&null).unwrap(), 0.0);
        let mut bad = worked_example();
        bad.mean_pageviews_c = 0.0;
        assert!(matches!(
            raw_delta(&bad),
            Err(Error::DivisionDegenerate(_))
        ));
    }

    #[test]
    fn adjust_delta_worked_example_both_modes() {
        let record = worked_example();
        let abs = adjust_delta(&record, 2.0, AdjustMode::Absolute).unwrap();
        assert_eq!(abs.discount, 0.5);
        assert_eq!(abs.adjusted_delta, 0.11);
        assert_relative_eq!(abs.error_fraction, 0.10, epsilon = 1e-12);

        let lit = adjust_delta(&record, 2.0, AdjustMode::Literal).unwrap();
        assert_eq!(lit.messages_delta, 0.25);
        assert_eq!(lit.adjusted_delta, 0.1025);
    }

    #[test]
    fn zero_message_lift_means_no_adjustment() {
        let mut record = worked_example();
        record.mean_messages_sent_t = 4.0;
        for mode in [AdjustMode::Absolute, AdjustMode::Literal] {
            let a = adjust_delta(&record, 5.0, mode).unwrap();
            assert_eq!(a.adjusted_delta, a.raw_delta);
            assert_eq!(a.messages_delta, 0.0);
            assert_eq!(a.error_fraction, 0.0);
        }
    }

    #[test]
    fn literal_mode_rejects_zero_control_messages() {
        let mut record = worked_example();
        record.mean_messages_sent_c = 0.0;
        assert!(matches!(
            adjust_delta(&record, 2.0, AdjustMode::Literal),
            Err(Error::DivisionDegenerate(_))
        ));
    }

    #[test]
    fn adjustment_monotone_in_beta() {
        let record = worked_example();
        let mut last = f64::NEG_INFINITY;
        for k in 0..20 {
            let beta = k as f64 * 0.5;
            let a = adjust_delta(&record, beta, AdjustMode::Absolute).unwrap();
            assert!(a.adjusted_delta > last);
            last = a.adjusted_delta;
        }
    }

    #[test]
    fn aggregate_error_hand_mean() {
        // Two experiments engineered to have error fractions 0.10 and 0.30.
        let e1 = worked_example(); // error 0.10 at beta 2, absolute
        let mut e2 = worked_example();
        e2.experiment_id = 2;
        e2.mean_messages_sent_t = 7.0; // diff 3 -> adjustment 3 -> delta' 0.13
        let summary = aggregate_error(&[e1.clone(), e2.clone()], 2.0, AdjustMode::Absolute, 0.05, 100)
            .unwrap();
        assert_relative_eq!(summary.epsilon, 0.20, epsilon = 1e-12);
        assert_relative_eq!(summary.median_error, 0.20, epsilon = 1e-12);
        assert_eq!(summary.n_selected, 2);

        // single experiment with no message movement: epsilon = 0
        let mut null = worked_example();
        null.mean_messages_sent_t = 4.0;
        let s = aggregate_error(&[null], 2.0, AdjustMode::Absolute, 0.05, 100).unwrap();
        assert_eq!(s.epsilon, 0.0);
    }

    #[test]
    fn aggregate_error_is_order_and_duplication_invariant() {
        let records = simulate_experiment_corpus(
            &CorpusConfig {
                n_experiments: 30,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let base = aggregate_error(&records, 2.0, AdjustMode::Absolute, 1.0, 10_000).unwrap();

        let mut reversed = records.clone();
        reversed.reverse();
        let rev = aggregate_error(&reversed, 2.0, AdjustMode::Absolute, 1.0, 10_000).unwrap();
        assert_eq!(base.epsilon, rev.epsilon);
        assert_eq!(base.median_error, rev.median_error);

        let mut doubled = records.clone();
        doubled.extend(records.iter().cloned());
        let dup = aggregate_error(&doubled, 2.0, AdjustMode::Absolute, 1.0, 10_000).unwrap();
        assert_relative_eq!(base.epsilon, dup.epsilon, epsilon = 1e-12);
        assert_relative_eq!(base.median_error, dup.median_error, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_error_empty_selection() {
        let mut record = worked_example();
        record.pageview_p_value = 0.9;
        assert!(matches!(
            aggregate_error(&[record], 2.0, AdjustMode::Absolute, 0.05, 100),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn corpus_boundary_and_determinism() {
        let one = simulate_experiment_corpus(
            &CorpusConfig {
                n_experiments: 1,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        one[0].validate().unwrap();

        let cfg = CorpusConfig {
            n_experiments: 100,
            ..Default::default()
        };
        let a = simulate_experiment_corpus(&cfg, 9).unwrap();
        let b = simulate_experiment_corpus(&cfg, 9).unwrap();
        assert_eq!(a, b);

        assert!(simulate_experiment_corpus(
            &CorpusConfig {
                n_experiments: 0,
                ..Default::default()
            },
            1
        )
        .is_err());
    }

    #[test]
    fn corpus_mean_abs_lift_near_target() {
        let cfg = CorpusConfig {
            n_experiments: 2000,
            ..Default::default()
        };
        let records = simulate_experiment_corpus(&cfg, 17).unwrap();
        let lifts: Vec<f64> = records
            .iter()
            .map(|r| {
                ((r.mean_messages_sent_t - r.mean_messages_sent_c) / r.mean_messages_sent_c).abs()
            })
            .collect();
        let n = lifts.len() as f64;
        let mean = lifts.iter().sum::<f64>() / n;
        let var = lifts.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let target = cfg.expected_mean_abs_lift();
        assert!(
            (mean - target).abs() < 3.0 * se,
            "mean |lift| {mean} vs target {target} (se {se})"
        );
    }

    #[test]
    fn discount_bounds() {
        let records = simulate_experiment_corpus(&CorpusConfig::default(), 2).unwrap();
        for r in &records {
            let a = adjust_delta(r, 2.0, AdjustMode::Absolute).unwrap();
            assert!(a.discount > 0.0 && a.discount < 1.0);
        }
    }

    #[test]
    fn experiments_csv_round_trips() {
        let records = simulate_experiment_corpus(
            &CorpusConfig {
                n_experiments: 25,
                ..Default::default()
            },
            8,
        )
        .unwrap();
        let csv = experiments_to_csv(&records);
        let parsed = experiments_from_csv(&csv).unwrap();
        assert_eq!(parsed, records);
        assert_eq!(experiments_to_csv(&parsed), csv);
    }

    #[test]
    fn histogram_covers_values() {
        let values = vec![-1.0, -0.5, 0.0, 0.25, 1.0];
        let bins = histogram(&values, 4);
        assert_eq!(bins.len(), 4);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), values.len());
        assert_eq!(bins[0].low, -1.0);
        assert_eq!(bins[3].high, 1.0);
    }
}
