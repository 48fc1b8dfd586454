//! The econometric core: OLS (with and without categorical controls),
//! two-way fixed effects, two-stage least squares with weak-instrument
//! diagnostics, Welch t-tests, and top-quantile outlier trimming.
//!
//! Every estimator is a pure function of immutable inputs and solves its
//! least-squares step through one column-pivoted QR routine.

mod linalg;
pub mod report;

use crate::behavior::PanelObservation;
use crate::error::{Error, Result};
use crate::notifqueue::{Group, GroupAssignment, Occasion};
use crate::synthnet::MemberRecord;
use linalg::least_squares;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Which model produced an [`EstimationResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Ols,
    OlsControls,
    FixedEffects,
    IvSecondStage,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelTag::Ols => write!(f, "ols"),
            ModelTag::OlsControls => write!(f, "ols_controls"),
            ModelTag::FixedEffects => write!(f, "fixed_effects"),
            ModelTag::IvSecondStage => write!(f, "iv_second_stage"),
        }
    }
}

/// A coefficient with its inference statistics.
#[derive(Debug, Clone)]
pub struct CoefficientEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

/// Output of one regression.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub model_tag: ModelTag,
    pub coefficients: Vec<CoefficientEstimate>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub n_observations: usize,
    pub residual_dof: usize,
    /// Non-fatal notes, e.g. degenerate control levels that were dropped.
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientEstimate> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Output of a two-stage least squares fit.
#[derive(Debug, Clone)]
pub struct TwoStageResult {
    /// Stage 1: messages_received on the instrument (tagged `ols`).
    pub first_stage: EstimationResult,
    /// Stage 2: pageviews on fitted messages.
    pub second_stage: EstimationResult,
    /// Partial F of the instrument in stage 1.
    pub first_stage_f: f64,
    /// Group-mean ratio (y_T - y_C) / (M_T - M_C); equals the second-stage
    /// coefficient when there are no controls.
    pub wald_estimate: f64,
    /// Raised (not an error) when `first_stage_f` is below the caller's
    /// threshold.
    pub weak_instrument: bool,
}

/// Welch's t-test with Satterthwaite degrees of freedom.
#[derive(Debug, Clone)]
pub struct TTestResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub degrees_of_freedom: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

impl TTestResult {
    /// Renders the test the way the A/A check is reported, e.g.
    /// `t = 1.15, p = 0.25`.
    pub fn report_string(&self) -> String {
        format!("t = {:.2}, p = {:.2}", self.t_stat, self.p_value)
    }
}

/// A design matrix with named columns. The intercept, when requested, is
/// added by the estimator and named `intercept`.
#[derive(Debug, Clone, Default)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: Option<usize>,
}

impl Design {
    pub fn new() -> Self {
        Design::default()
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) -> Result<()> {
        match self.n_rows {
            Some(n) if n != column.len() => {
                return Err(Error::InconsistentInput(format!(
                    "column length {} does not match design rows {n}",
                    column.len()
                )))
            }
            None => self.n_rows = Some(column.len()),
            _ => {}
        }
        self.names.push(name.into());
        self.columns.push(column);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows.unwrap_or(0)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    fn to_matrix(&self, include_intercept: bool) -> (DMatrix<f64>, Vec<String>) {
        let n = self.n_rows();
        let extra = usize::from(include_intercept);
        let p = self.columns.len() + extra;
        let mut x = DMatrix::zeros(n, p);
        let mut names = Vec::with_capacity(p);
        if include_intercept {
            names.push("intercept".to_string());
            for i in 0..n {
                x[(i, 0)] = 1.0;
            }
        }
        for (j, (name, col)) in self.names.iter().zip(&self.columns).enumerate() {
            names.push(name.clone());
            for i in 0..n {
                x[(i, j + extra)] = col[i];
            }
        }
        (x, names)
    }
}

/// Standard-error flavor. Classical is the default; HC1 rescales the
/// heteroskedasticity-robust sandwich by n/(n-p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeKind {
    #[default]
    Classical,
    Hc1,
}

fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if !t.is_finite() || dof <= 0.0 {
        return f64::NAN;
    }
    match StudentsT::new(0.0, 1.0, dof) {
        Ok(dist) => 2.0 * (1.0 - dist.cdf(t.abs())),
        Err(_) => f64::NAN,
    }
}

fn f_upper_p(f: f64, d1: f64, d2: f64) -> f64 {
    if !f.is_finite() || f < 0.0 || d1 <= 0.0 || d2 <= 0.0 {
        return f64::NAN;
    }
    match FisherSnedecor::new(d1, d2) {
        Ok(dist) => 1.0 - dist.cdf(f),
        Err(_) => f64::NAN,
    }
}

fn fit_ols(
    outcome: &[f64],
    design: &Design,
    include_intercept: bool,
    se_kind: SeKind,
    model_tag: ModelTag,
    warnings: Vec<String>,
) -> Result<EstimationResult> {
    let n = outcome.len();
    if design.n_rows() != n {
        return Err(Error::InconsistentInput(format!(
            "outcome has {n} rows, design has {}",
            design.n_rows()
        )));
    }
    if design.n_columns() == 0 && !include_intercept {
        return Err(Error::InvalidConfig(
            "design needs at least one column or an intercept".into(),
        ));
    }
    let (x, names) = design.to_matrix(include_intercept);
    let p = x.ncols();
    let y = DVector::from_column_slice(outcome);
    let fit = least_squares(&x, &y, &names)?;

    let dof = n - p;
    let sigma2 = fit.rss / dof as f64;
    let se: Vec<f64> = match se_kind {
        SeKind::Classical => (0..p)
            .map(|j| (sigma2 * fit.xtx_inv[(j, j)]).max(0.0).sqrt())
            .collect(),
        SeKind::Hc1 => {
            // (X'X)^{-1} X' diag(e^2) X (X'X)^{-1} * n/(n-p)
            let mut meat = DMatrix::zeros(p, p);
            for i in 0..n {
                let e2 = fit.residuals[i] * fit.residuals[i];
                for j in 0..p {
                    for k in 0..p {
                        meat[(j, k)] += e2 * x[(i, j)] * x[(i, k)];
                    }
                }
            }
            let cov = &fit.xtx_inv * meat * &fit.xtx_inv * (n as f64 / dof as f64);
            (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect()
        }
    };

    let coefficients: Vec<CoefficientEstimate> = names
        .iter()
        .zip(&fit.coef)
        .zip(&se)
        .map(|((name, &estimate), &std_error)| {
            let t_stat = if std_error > 0.0 {
                estimate / std_error
            } else if estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY * estimate.signum()
            };
            CoefficientEstimate {
                name: name.clone(),
                estimate,
                std_error,
                t_stat,
                p_value: t_two_sided_p(t_stat, dof as f64),
            }
        })
        .collect();

    let (r_squared, n_slopes) = if include_intercept {
        let mean = outcome.iter().sum::<f64>() / n as f64;
        let tss: f64 = outcome.iter().map(|v| (v - mean).powi(2)).sum();
        let r2 = if tss > 0.0 { 1.0 - fit.rss / tss } else { 0.0 };
        (r2, p - 1)
    } else {
        let tss: f64 = outcome.iter().map(|v| v * v).sum();
        let r2 = if tss > 0.0 { 1.0 - fit.rss / tss } else { 0.0 };
        (r2, p)
    };
    let r_squared = r_squared.clamp(0.0, 1.0);
    let denom_obs = if include_intercept { n - 1 } else { n };
    let adj_r_squared = if dof > 0 {
        (1.0 - (1.0 - r_squared) * denom_obs as f64 / dof as f64).min(r_squared)
    } else {
        r_squared
    };

    let (f_statistic, f_p_value) = if n_slopes == 0 || r_squared >= 1.0 {
        if r_squared >= 1.0 && n_slopes > 0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NAN, f64::NAN)
        }
    } else {
        let f = (r_squared / n_slopes as f64) / ((1.0 - r_squared) / dof as f64);
        (f, f_upper_p(f, n_slopes as f64, dof as f64))
    };

    Ok(EstimationResult {
        model_tag,
        coefficients,
        r_squared,
        adj_r_squared,
        f_statistic,
        f_p_value,
        n_observations: n,
        residual_dof: dof,
        warnings,
    })
}

/// Ordinary least squares of `outcome` on the named design columns.
pub fn ols(outcome: &[f64], design: &Design, include_intercept: bool) -> Result<EstimationResult> {
    fit_ols(
        outcome,
        design,
        include_intercept,
        SeKind::Classical,
        ModelTag::Ols,
        Vec::new(),
    )
}

/// OLS with a standard-error choice; used by callers exposing the robust
/// option.
pub fn ols_with_se(
    outcome: &[f64],
    design: &Design,
    include_intercept: bool,
    se_kind: SeKind,
) -> Result<EstimationResult> {
    fit_ols(
        outcome,
        design,
        include_intercept,
        se_kind,
        ModelTag::Ols,
        Vec::new(),
    )
}

/// Which member covariates enter as controls. Country, industry, and
/// connections decile are categorical (one-hot with a dropped reference
/// level); tenure enters linearly.
#[derive(Debug, Clone)]
pub struct ControlSpec {
    pub country: bool,
    pub industry: bool,
    pub connections_decile: bool,
    pub tenure_years: bool,
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec {
            country: true,
            industry: true,
            connections_decile: true,
            tenure_years: true,
        }
    }
}

fn push_categorical(
    design: &mut Design,
    prefix: &str,
    values: &[u32],
    warnings: &mut Vec<String>,
) -> Result<()> {
    let levels: BTreeSet<u32> = values.iter().copied().collect();
    if levels.len() < 2 {
        warnings.push(format!(
            "control `{prefix}` has a single observed level and was dropped"
        ));
        return Ok(());
    }
    // First level is the reference.
    for level in levels.iter().skip(1) {
        let col: Vec<f64> = values
            .iter()
            .map(|&v| if v == *level { 1.0 } else { 0.0 })
            .collect();
        design.push(format!("{prefix}_{level}"), col)?;
    }
    Ok(())
}

fn build_control_columns(
    design: &mut Design,
    rows: &[&MemberRecord],
    spec: &ControlSpec,
    warnings: &mut Vec<String>,
) -> Result<()> {
    if spec.connections_decile {
        let vals: Vec<u32> = rows.iter().map(|m| m.connections_decile as u32).collect();
        push_categorical(design, "connections_decile", &vals, warnings)?;
    }
    if spec.country {
        let vals: Vec<u32> = rows.iter().map(|m| m.country).collect();
        push_categorical(design, "country", &vals, warnings)?;
    }
    if spec.industry {
        let vals: Vec<u32> = rows.iter().map(|m| m.industry).collect();
        push_categorical(design, "industry", &vals, warnings)?;
    }
    if spec.tenure_years {
        let col: Vec<f64> = rows.iter().map(|m| m.tenure_years as f64).collect();
        if col.windows(2).all(|w| w[0] == w[1]) {
            warnings.push(
                "control `tenure_years` is constant in the sample and was dropped".to_string(),
            );
        } else {
            design.push("tenure_years", col)?;
        }
    }
    Ok(())
}

fn member_index(members: &[MemberRecord]) -> HashMap<u64, usize> {
    members
        .iter()
        .enumerate()
        .map(|(i, m)| (m.member_id, i))
        .collect()
}

/// OLS of pageviews on messages received plus demographic controls.
pub fn ols_with_controls(
    panel: &[PanelObservation],
    members: &[MemberRecord],
    spec: &ControlSpec,
) -> Result<EstimationResult> {
    let index = member_index(members);
    let mut rows: Vec<&MemberRecord> = Vec::with_capacity(panel.len());
    for obs in panel {
        let &i = index.get(&obs.member_id).ok_or_else(|| {
            Error::InconsistentInput(format!(
                "panel references member {} missing from the population",
                obs.member_id
            ))
        })?;
        rows.push(&members[i]);
    }

    let mut warnings = Vec::new();
    let mut design = Design::new();
    design.push(
        "messages_received",
        panel.iter().map(|o| o.messages_received as f64).collect(),
    )?;
    build_control_columns(&mut design, &rows, spec, &mut warnings)?;
    let outcome: Vec<f64> = panel.iter().map(|o| o.pageviews as f64).collect();
    fit_ols(
        &outcome,
        &design,
        true,
        SeKind::Classical,
        ModelTag::OlsControls,
        warnings,
    )
}

/// Two-way fixed effects ("within") regression of pageviews on messages
/// received, absorbing member and week effects by alternating demeaning.
///
/// Degrees of freedom are corrected for the absorbed effects, so the result
/// matches full dummy-variable OLS exactly on small instances.
pub fn fixed_effects(panel: &[PanelObservation]) -> Result<EstimationResult> {
    const TOL: f64 = 1e-10;
    let n = panel.len();
    let member_ids: BTreeSet<u64> = panel.iter().map(|o| o.member_id).collect();
    let week_ids: BTreeSet<u32> = panel.iter().map(|o| o.week).collect();
    let n_members = member_ids.len();
    let n_weeks = week_ids.len();
    if n_weeks < 2 {
        return Err(Error::InsufficientData(
            "fixed effects need at least 2 weeks".into(),
        ));
    }
    let mut seen: BTreeSet<(u64, u32)> = BTreeSet::new();
    for o in panel {
        if !seen.insert((o.member_id, o.week)) {
            return Err(Error::InconsistentInput(format!(
                "duplicate panel row for member {} week {}",
                o.member_id, o.week
            )));
        }
    }

    let member_of: HashMap<u64, usize> = member_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let week_of: HashMap<u32, usize> = week_ids
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, i))
        .collect();
    let mi: Vec<usize> = panel.iter().map(|o| member_of[&o.member_id]).collect();
    let wi: Vec<usize> = panel.iter().map(|o| week_of[&o.week]).collect();

    let mut x: Vec<f64> = panel.iter().map(|o| o.messages_received as f64).collect();
    let mut y: Vec<f64> = panel.iter().map(|o| o.pageviews as f64).collect();
    let x_scale: f64 = x.iter().map(|v| v * v).sum();

    // Alternating projections onto the two demeaned spaces.
    let mut member_count = vec![0.0f64; n_members];
    for &m in &mi {
        member_count[m] += 1.0;
    }
    let mut week_count = vec![0.0f64; n_weeks];
    for &w in &wi {
        week_count[w] += 1.0;
    }
    for _ in 0..10_000 {
        let mut shift: f64 = 0.0;
        for (dim, idx, counts) in [
            (n_members, &mi, &member_count),
            (n_weeks, &wi, &week_count),
        ] {
            let mut mean_x = vec![0.0f64; dim];
            let mut mean_y = vec![0.0f64; dim];
            for k in 0..n {
                mean_x[idx[k]] += x[k];
                mean_y[idx[k]] += y[k];
            }
            for g in 0..dim {
                mean_x[g] /= counts[g];
                mean_y[g] /= counts[g];
            }
            for k in 0..n {
                x[k] -= mean_x[idx[k]];
                y[k] -= mean_y[idx[k]];
                shift = shift.max(mean_x[idx[k]].abs()).max(mean_y[idx[k]].abs());
            }
        }
        if shift < TOL {
            break;
        }
    }

    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx <= 1e-12 * (1.0 + x_scale) {
        return Err(Error::NoWithinVariation);
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let beta = sxy / sxx;

    let rss: f64 = y.iter().zip(x.iter()).map(|(yy, xx)| {
        let e = yy - beta * xx;
        e * e
    }).sum();
    // absorbed parameters: grand mean + (members - 1) + (weeks - 1)
    let absorbed = n_members + n_weeks - 1;
    if n < absorbed + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot identify {absorbed} absorbed effects plus a slope"
        )));
    }
    // A saturated panel still identifies the slope; inference is undefined.
    let dof = n - absorbed - 1;
    let (se, t_stat, p_value) = if dof > 0 {
        let sigma2 = rss / dof as f64;
        let se = (sigma2 / sxx).sqrt();
        let t = beta / se;
        (se, t, t_two_sided_p(t, dof as f64))
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    // Overall R^2 of the dummy-variable representation.
    let raw_y: Vec<f64> = panel.iter().map(|o| o.pageviews as f64).collect();
    let mean_y = raw_y.iter().sum::<f64>() / n as f64;
    let tss: f64 = raw_y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let adj_r_squared = if dof > 0 {
        (1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / dof as f64).min(r_squared)
    } else {
        r_squared
    };
    let f_statistic = t_stat * t_stat;

    Ok(EstimationResult {
        model_tag: ModelTag::FixedEffects,
        coefficients: vec![CoefficientEstimate {
            name: "messages_received".to_string(),
            estimate: beta,
            std_error: se,
            t_stat,
            p_value,
        }],
        r_squared,
        adj_r_squared,
        f_statistic,
        f_p_value: f_upper_p(f_statistic, 1.0, dof as f64),
        n_observations: n,
        residual_dof: dof,
        warnings: Vec::new(),
    })
}

/// Builds the per-member binary instrument from group assignments for one
/// occasion: treatment -> 1, control -> 0, excluded members absent.
pub fn instrument_from_assignments(
    assignments: &[GroupAssignment],
    occasion: Occasion,
) -> BTreeMap<u64, bool> {
    assignments
        .iter()
        .filter(|a| a.occasion == occasion)
        .filter_map(|a| match a.group {
            Group::Treatment => Some((a.member_id, true)),
            Group::Control => Some((a.member_id, false)),
            Group::Excluded => None,
        })
        .collect()
}

/// Two-stage least squares of pageviews on messages received, instrumented
/// by the per-member binary treatment indicator.
///
/// Panel rows are collapsed to member-level totals over the weeks present
/// (the observation window), matching the member-level estimating equations.
/// Controls, when supplied, enter both stages. Second-stage standard errors
/// use structural residuals computed from the original (not fitted)
/// messages. A first-stage partial F below `weak_f_threshold` sets the
/// `weak_instrument` flag; the result is still returned.
pub fn two_stage_least_squares(
    panel: &[PanelObservation],
    instrument: &BTreeMap<u64, bool>,
    controls: Option<(&[MemberRecord], &ControlSpec)>,
    weak_f_threshold: f64,
) -> Result<TwoStageResult> {
    // Collapse to member level.
    let mut totals: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for obs in panel {
        if instrument.contains_key(&obs.member_id) {
            let slot = totals.entry(obs.member_id).or_insert((0.0, 0.0));
            slot.0 += obs.messages_received as f64;
            slot.1 += obs.pageviews as f64;
        }
    }
    if totals.is_empty() {
        return Err(Error::InsufficientData(
            "no panel rows match the instrument sample".into(),
        ));
    }
    let ids: Vec<u64> = totals.keys().copied().collect();
    let m: Vec<f64> = totals.values().map(|v| v.0).collect();
    let y: Vec<f64> = totals.values().map(|v| v.1).collect();
    let t: Vec<f64> = ids
        .iter()
        .map(|id| if instrument[id] { 1.0 } else { 0.0 })
        .collect();

    let n_treat = t.iter().filter(|&&v| v == 1.0).count();
    if n_treat == 0 || n_treat == ids.len() {
        return Err(Error::InsufficientData(
            "instrument does not vary within the sample".into(),
        ));
    }

    // Wald ratio from group means.
    let group_mean = |vals: &[f64], arm: f64| {
        let picked: Vec<f64> = vals
            .iter()
            .zip(&t)
            .filter(|(_, &ti)| ti == arm)
            .map(|(&v, _)| v)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let m_contrast = group_mean(&m, 1.0) - group_mean(&m, 0.0);
    if m_contrast == 0.0 {
        return Err(Error::DivisionDegenerate(
            "first-stage contrast in messages is zero".into(),
        ));
    }
    let wald_estimate = (group_mean(&y, 1.0) - group_mean(&y, 0.0)) / m_contrast;

    // Member-rows for controls.
    let mut warnings = Vec::new();
    let control_rows: Option<Vec<&MemberRecord>> = match controls {
        Some((members, _)) => {
            let index = member_index(members);
            let mut rows = Vec::with_capacity(ids.len());
            for id in &ids {
                let &i = index.get(id).ok_or_else(|| {
                    Error::InconsistentInput(format!(
                        "instrument references member {id} missing from the population"
                    ))
                })?;
                rows.push(&members[i]);
            }
            Some(rows)
        }
        None => None,
    };

    let build_design = |lead_name: &str, lead: &[f64], warnings: &mut Vec<String>| -> Result<Design> {
        let mut design = Design::new();
        design.push(lead_name, lead.to_vec())?;
        if let (Some(rows), Some((_, spec))) = (&control_rows, controls) {
            build_control_columns(&mut design, rows, spec, warnings)?;
        }
        Ok(design)
    };

    // Stage 1: messages on the instrument (plus controls).
    let stage1_design = build_design("peer_treatment", &t, &mut warnings)?;
    let first_stage = fit_ols(
        &m,
        &stage1_design,
        true,
        SeKind::Classical,
        ModelTag::Ols,
        warnings.clone(),
    )?;
    let gamma = first_stage
        .coefficient("peer_treatment")
        .expect("stage-1 instrument coefficient");
    let first_stage_f = gamma.t_stat * gamma.t_stat;

    // Stage 2: pageviews on fitted messages (plus the same controls).
    let (x1, names1) = stage1_design.to_matrix(true);
    let gamma_vec = DVector::from_iterator(
        names1.len(),
        names1
            .iter()
            .map(|name| first_stage.coefficient(name).unwrap().estimate),
    );
    let fitted_m = &x1 * &gamma_vec;

    let mut stage2_warnings = Vec::new();
    let stage2_design = build_design(
        "messages_received",
        fitted_m.as_slice(),
        &mut stage2_warnings,
    )?;
    let (x2, names2) = stage2_design.to_matrix(true);
    let y_vec = DVector::from_column_slice(&y);
    let fit2 = least_squares(&x2, &y_vec, &names2)?;

    // Structural residuals from the ORIGINAL messages.
    let mut x_orig = x2.clone();
    let m_col = names2
        .iter()
        .position(|n| n == "messages_received")
        .expect("messages column");
    for i in 0..x_orig.nrows() {
        x_orig[(i, m_col)] = m[i];
    }
    let coef_vec = DVector::from_column_slice(&fit2.coef);
    let structural_resid = &y_vec - &x_orig * &coef_vec;
    let rss: f64 = structural_resid.iter().map(|e| e * e).sum();
    let n_obs = y.len();
    let p = names2.len();
    if n_obs <= p {
        return Err(Error::InsufficientData(format!(
            "{n_obs} members cannot identify {p} second-stage coefficients"
        )));
    }
    let dof = n_obs - p;
    let sigma2 = rss / dof as f64;

    let coefficients: Vec<CoefficientEstimate> = names2
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = fit2.coef[j];
            let std_error = (sigma2 * fit2.xtx_inv[(j, j)]).max(0.0).sqrt();
            let t_stat = if std_error > 0.0 { estimate / std_error } else { 0.0 };
            CoefficientEstimate {
                name: name.clone(),
                estimate,
                std_error,
                t_stat,
                p_value: t_two_sided_p(t_stat, dof as f64),
            }
        })
        .collect();

    let mean_y = y.iter().sum::<f64>() / n_obs as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let n_slopes = p - 1;
    let adj_r_squared = (1.0
        - (1.0 - r_squared) * (n_obs as f64 - 1.0) / dof as f64)
        .min(r_squared);
    let f_statistic = if n_slopes > 0 && r_squared < 1.0 {
        (r_squared / n_slopes as f64) / ((1.0 - r_squared) / dof as f64)
    } else {
        f64::NAN
    };

    // Kept out of stage-2 warnings: they duplicate stage 1's.
    stage2_warnings.clear();
    let second_stage = EstimationResult {
        model_tag: ModelTag::IvSecondStage,
        coefficients,
        r_squared,
        adj_r_squared,
        f_statistic,
        f_p_value: f_upper_p(f_statistic, n_slopes.max(1) as f64, dof as f64),
        n_observations: n_obs,
        residual_dof: dof,
        warnings: stage2_warnings,
    };

    Ok(TwoStageResult {
        weak_instrument: first_stage_f < weak_f_threshold,
        first_stage,
        second_stage,
        first_stage_f,
        wald_estimate,
    })
}

/// Welch's two-sample t-test with Satterthwaite degrees of freedom and a
/// two-sided p-value.
pub fn welch_t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<TTestResult> {
    let n1 = sample_a.len();
    let n2 = sample_b.len();
    if n1 < 2 || n2 < 2 {
        return Err(Error::InsufficientData(format!(
            "welch t-test needs at least 2 observations per sample, got {n1} and {n2}"
        )));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mean_a = mean(sample_a);
    let mean_b = mean(sample_b);
    let var = |s: &[f64], m: f64| s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
    let va = var(sample_a, mean_a) / n1 as f64;
    let vb = var(sample_b, mean_b) / n2 as f64;
    let se2 = va + vb;

    if se2 == 0.0 {
        if mean_a == mean_b {
            return Ok(TTestResult {
                t_stat: 0.0,
                p_value: 1.0,
                degrees_of_freedom: (n1 + n2 - 2) as f64,
                mean_a,
                mean_b,
            });
        }
        return Err(Error::InsufficientData(
            "both samples have zero variance but different means".into(),
        ));
    }

    let t_stat = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2
        / (va * va / (n1 as f64 - 1.0) + vb * vb / (n2 as f64 - 1.0));
    Ok(TTestResult {
        t_stat,
        p_value: t_two_sided_p(t_stat, df),
        degrees_of_freedom: df,
        mean_a,
        mean_b,
    })
}

/// Column to trim on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimColumn {
    Pageviews,
    MessagesReceived,
}

/// Removes member-weeks whose value lies strictly above the
/// `1 - top_fraction` nearest-rank quantile. Input order is preserved.
pub fn trim_outliers(
    panel: &[PanelObservation],
    top_fraction: f64,
    on: TrimColumn,
) -> Result<Vec<PanelObservation>> {
    if !(0.0..1.0).contains(&top_fraction) {
        return Err(Error::InvalidConfig(format!(
            "top_fraction must be in [0, 1), got {top_fraction}"
        )));
    }
    if panel.is_empty() || top_fraction == 0.0 {
        return Ok(panel.to_vec());
    }
    let value = |o: &PanelObservation| match on {
        TrimColumn::Pageviews => o.pageviews,
        TrimColumn::MessagesReceived => o.messages_received,
    };
    let mut values: Vec<u32> = panel.iter().map(value).collect();
    values.sort_unstable();
    let n = values.len();
    // nearest-rank: smallest index k (1-based) with k >= (1 - f) * n
    let rank = ((1.0 - top_fraction) * n as f64).ceil().max(1.0) as usize;
    let cutoff = values[rank.min(n) - 1];
    Ok(panel
        .iter()
        .filter(|o| value(o) <= cutoff)
        .copied()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs(member_id: u64, week: u32, messages: u32, pageviews: u32) -> PanelObservation {
        PanelObservation {
            member_id,
            week,
            messages_received: messages,
            pageviews,
        }
    }

    #[test]
    fn ols_exact_fit_without_intercept() {
        let mut design = Design::new();
        design.push("x", vec![1.0, 2.0, 3.0]).unwrap();
        let result = ols(&[2.0, 4.0, 6.0], &design, false).unwrap();
        let c = result.coefficient("x").unwrap();
        assert_relative_eq!(c.estimate, 2.0, epsilon = 1e-12);
        assert_relative_eq!(result.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_hand_normal_equations() {
        // slope = cov/var = 3/5, intercept = 2 - 0.6 * 2.5 = 0.5
        let mut design = Design::new();
        design.push("x", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let result = ols(&[1.0, 2.0, 2.0, 3.0], &design, true).unwrap();
        assert_relative_eq!(
            result.coefficient("x").unwrap().estimate,
            0.6,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            result.coefficient("intercept").unwrap().estimate,
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ols_rejects_constant_column_with_intercept() {
        let mut design = Design::new();
        design.push("x", vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let err = ols(&[1.0, 2.0, 2.0, 3.0], &design, true).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }), "{err:?}");
    }

    #[test]
    fn ols_residuals_orthogonal() {
        let mut design = Design::new();
        design
            .push("x", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap();
        design
            .push("z", vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5])
            .unwrap();
        let y = vec![2.0, 1.0, 4.0, 3.0, 5.0, 4.5];
        let result = ols(&y, &design, true).unwrap();
        // reconstruct residuals
        let b0 = result.coefficient("intercept").unwrap().estimate;
        let bx = result.coefficient("x").unwrap().estimate;
        let bz = result.coefficient("z").unwrap().estimate;
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let zs = [0.5, -1.0, 2.0, 0.0, 1.5, -0.5];
        let mut dot_x = 0.0;
        let mut dot_z = 0.0;
        let mut dot_1 = 0.0;
        for i in 0..6 {
            let e = y[i] - (b0 + bx * xs[i] + bz * zs[i]);
            dot_x += e * xs[i];
            dot_z += e * zs[i];
            dot_1 += e;
        }
        let scale: f64 = y.iter().sum();
        assert!(dot_x.abs() < 1e-8 * scale);
        assert!(dot_z.abs() < 1e-8 * scale);
        assert!(dot_1.abs() < 1e-8 * scale);
    }

    #[test]
    fn degenerate_controls_reduce_to_univariate_ols() {
        // All covariates single-valued: every control is dropped with a
        // warning and the messages coefficient equals plain OLS.
        let members: Vec<MemberRecord> = (0..6)
            .map(|id| MemberRecord {
                member_id: id,
                latent_activity: 0.0,
                latent_sociability: 0.0,
                birth_week: 1,
                anniversary_month: 1,
                country: 3,
                industry: 2,
                connections_decile: 5,
                tenure_years: 10,
            })
            .collect();
        let panel: Vec<PanelObservation> = (0..6)
            .map(|i| obs(i, 1, i as u32, (3 * i + 1) as u32))
            .collect();
        let with_controls =
            ols_with_controls(&panel, &members, &ControlSpec::default()).unwrap();
        assert_eq!(with_controls.warnings.len(), 4);

        let mut design = Design::new();
        design
            .push(
                "messages_received",
                panel.iter().map(|o| o.messages_received as f64).collect(),
            )
            .unwrap();
        let y: Vec<f64> = panel.iter().map(|o| o.pageviews as f64).collect();
        let univariate = ols(&y, &design, true).unwrap();
        assert_relative_eq!(
            with_controls
                .coefficient("messages_received")
                .unwrap()
                .estimate,
            univariate
                .coefficient("messages_received")
                .unwrap()
                .estimate,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pure_noise_control_barely_moves_the_coefficient() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let n = 400;
        let messages: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..8.0)).collect();
        let y: Vec<f64> = messages
            .iter()
            .map(|&m| 3.0 + 2.0 * m + rng.random_range(-4.0..4.0))
            .collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut base = Design::new();
        base.push("messages_received", messages.clone()).unwrap();
        let without = ols(&y, &base, true).unwrap();

        let mut with_noise = Design::new();
        with_noise.push("messages_received", messages).unwrap();
        with_noise.push("noise", noise).unwrap();
        let with = ols(&y, &with_noise, true).unwrap();

        let a = without.coefficient("messages_received").unwrap();
        let b = with.coefficient("messages_received").unwrap();
        assert!(
            (a.estimate - b.estimate).abs() < a.std_error,
            "noise control moved the coefficient by more than one SE"
        );
    }

    #[test]
    fn fe_hand_example() {
        // Two members, two weeks; hand two-way within transform gives
        // beta = 1.25 / 0.25 = 5.
        let panel = vec![
            obs(0, 1, 1, 10),
            obs(0, 2, 3, 18),
            obs(1, 1, 2, 5),
            obs(1, 2, 3, 8),
        ];
        let result = fixed_effects(&panel).unwrap();
        assert_relative_eq!(
            result.coefficient("messages_received").unwrap().estimate,
            5.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn fe_exact_model_recovers_beta() {
        // pv = 3 m + sigma_i + tau_t with zero noise -> beta = 3 exactly.
        let sigmas = [10.0, 20.0, 30.0];
        let taus = [0.0, 5.0, 2.0, 7.0];
        let mut panel = Vec::new();
        for (i, sigma) in sigmas.iter().enumerate() {
            for (t, tau) in taus.iter().enumerate() {
                let m = ((i + 1) * (t + 1) % 5) as u32 + i as u32;
                let pv = (3.0 * m as f64 + sigma + tau) as u32;
                panel.push(obs(i as u64, t as u32, m, pv));
            }
        }
        let result = fixed_effects(&panel).unwrap();
        assert_relative_eq!(
            result.coefficient("messages_received").unwrap().estimate,
            3.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn fe_no_within_variation() {
        let panel = vec![
            obs(0, 1, 2, 10),
            obs(0, 2, 2, 12),
            obs(1, 1, 5, 9),
            obs(1, 2, 5, 14),
        ];
        // messages constant within member; week demeaning also leaves nothing
        let err = fixed_effects(&panel).unwrap_err();
        assert!(matches!(err, Error::NoWithinVariation), "{err:?}");
    }

    #[test]
    fn fe_equals_dummy_ols_small() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n_members = rng.random_range(3..8usize);
            let n_weeks = rng.random_range(2..6usize);
            let mut panel = Vec::new();
            for i in 0..n_members {
                for t in 0..n_weeks {
                    panel.push(obs(
                        i as u64,
                        t as u32,
                        rng.random_range(0..7u32),
                        rng.random_range(0..40u32),
                    ));
                }
            }
            let fe = match fixed_effects(&panel) {
                Ok(r) => r,
                Err(Error::NoWithinVariation) => continue,
                Err(e) => panic!("{e:?}"),
            };

            // dummy-variable OLS
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

            let a = fe.coefficient("messages_received").unwrap();
            let b = dummy.coefficient("messages_received").unwrap();
            assert_relative_eq!(a.estimate, b.estimate, max_relative = 1e-8);
            assert_relative_eq!(a.std_error, b.std_error, max_relative = 1e-6);
            assert_eq!(fe.residual_dof, dummy.residual_dof);
        }
    }

    #[test]
    fn tsls_wald_hand_example() {
        // group means: y_T = 12, y_C = 10, M_T = 4, M_C = 3 -> beta = 2
        let mut panel = Vec::new();
        let mut instrument = BTreeMap::new();
        // treated members: totals (4, 12) +- symmetric spread
        let arms = [
            (0u64, true, 3u32, 11u32),
            (1, true, 5, 13),
            (2, false, 2, 9),
            (3, false, 4, 11),
        ];
        for (id, treated, m, y) in arms {
            panel.push(obs(id, 1, m, y));
            instrument.insert(id, treated);
        }
        let result = two_stage_least_squares(&panel, &instrument, None, 10.0).unwrap();
        assert_relative_eq!(result.wald_estimate, 2.0, epsilon = 1e-12);
        let beta = result
            .second_stage
            .coefficient("messages_received")
            .unwrap()
            .estimate;
        let rel = ((beta - result.wald_estimate) / result.wald_estimate).abs();
        assert!(rel < 1e-10, "2SLS {beta} vs Wald {}", result.wald_estimate);
    }

    #[test]
    fn tsls_zero_contrast_is_degenerate() {
        let panel = vec![obs(0, 1, 3, 10), obs(1, 1, 3, 12), obs(2, 1, 3, 9), obs(3, 1, 3, 14)];
        let instrument: BTreeMap<u64, bool> =
            [(0, true), (1, true), (2, false), (3, false)].into_iter().collect();
        let err = two_stage_least_squares(&panel, &instrument, None, 10.0).unwrap_err();
        assert!(matches!(err, Error::DivisionDegenerate(_)), "{err:?}");
    }

    #[test]
    fn welch_identical_samples() {
        let result = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(result.t_stat, 0.0);
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn welch_hand_example() {
        // means 2 and 3, variances 1: t = -1.2247, df = 4, p ~ 0.288
        let result = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(result.t_stat, -1.224744871391589, epsilon = 1e-12);
        assert_relative_eq!(result.degrees_of_freedom, 4.0, epsilon = 1e-12);
        assert!(
            (result.p_value - 0.288).abs() < 0.002,
            "p = {}",
            result.p_value
        );
    }

    #[test]
    fn welch_constant_equal_samples_defined() {
        let result = welch_t_test(&[5.0, 5.0, 5.0], &[5.0, 5.0]).unwrap();
        assert_eq!(result.t_stat, 0.0);
        assert_eq!(result.p_value, 1.0);
        assert_eq!(result.degrees_of_freedom, 3.0);
    }

    #[test]
    fn welch_rejects_tiny_samples() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn welch_report_string_matches_paper_style() {
        let result = TTestResult {
            t_stat: 1.15,
            p_value: 0.25,
            degrees_of_freedom: 100.0,
            mean_a: 0.0,
            mean_b: 0.0,
        };
        assert_eq!(result.report_string(), "t = 1.15, p = 0.25");
    }

    #[test]
    fn trim_nearest_rank() {
        // values 1..=200, top 1%: 99th percentile nearest-rank = 198
        let panel: Vec<PanelObservation> =
            (1..=200).map(|v| obs(v as u64, 1, 0, v as u32)).collect();
        let trimmed = trim_outliers(&panel, 0.01, TrimColumn::Pageviews).unwrap();
        assert_eq!(trimmed.len(), 198);
        assert!(trimmed.iter().all(|o| o.pageviews <= 198));
    }

    #[test]
    fn trim_all_equal_removes_nothing() {
        let panel: Vec<PanelObservation> = (0..50).map(|i| obs(i, 1, 0, 7)).collect();
        let trimmed = trim_outliers(&panel, 0.01, TrimColumn::Pageviews).unwrap();
        assert_eq!(trimmed.len(), 50);
    }

    #[test]
    fn trim_zero_fraction_is_identity() {
        let panel: Vec<PanelObservation> = (0..10).map(|i| obs(i, 1, 0, i as u32)).collect();
        let trimmed = trim_outliers(&panel, 0.0, TrimColumn::Pageviews).unwrap();
        assert_eq!(trimmed, panel);
    }

    #[test]
    fn instrument_extraction() {
        let assignments = vec![
            GroupAssignment {
                member_id: 0,
                occasion: Occasion::Anniversary,
                group: Group::Treatment,
            },
            GroupAssignment {
                member_id: 1,
                occasion: Occasion::Anniversary,
                group: Group::Control,
            },
            GroupAssignment {
                member_id: 2,
                occasion: Occasion::Anniversary,
                group: Group::Excluded,
            },
            GroupAssignment {
                member_id: 3,
                occasion: Occasion::Birthday,
                group: Group::Treatment,
            },
        ];
        let iv = instrument_from_assignments(&assignments, Occasion::Anniversary);
        assert_eq!(iv.len(), 2);
        assert_eq!(iv[&0], true);
        assert_eq!(iv[&1], false);
    }
}
