//! The data-generating process: schedules become peer messages, messages
//! become engagement.
//!
//! Messages arrive through two channels. Encouraged messages follow a
//! notification: each peer of a scheduled member independently sends a
//! congratulation with probability `response_prob`, in the scheduled week
//! only. Spontaneous messages are Poisson with a rate that loads on the
//! ego's latent activity (the time-invariant confounder), on a common weekly
//! shock interacted with activity (the time-varying confounder that survives
//! fixed effects), and on the peers' sociability.
//!
//! Pageviews are linear in messages received with slope `true_beta`, plus
//! person and week effects, the same two confounding terms, and Gaussian
//! noise, truncated at zero and rounded. Pageviews never read the
//! notification schedule or group assignment: the exclusion restriction
//! holds by construction.

use crate::error::{Error, Result};
use crate::io::{data_lines, fields, parse_field};
use crate::notifqueue::NotificationSchedule;
use crate::rng::{substream, Domain};
use crate::synthnet::{EdgeList, MemberRecord};
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use std::collections::HashMap;

/// Parameters of the data-generating process.
#[derive(Debug, Clone)]
pub struct DGPConfig {
    /// The true causal effect: pageviews per received message.
    pub true_beta: f64,
    /// Probability a notified peer sends a congratulation message.
    pub response_prob: f64,
    /// Baseline expected spontaneous messages per (ego, week).
    pub spontaneous_rate: f64,
    /// Weight of latent activity in both message receipt and pageviews:
    /// the bias dial.
    pub confound_strength: f64,
    /// Weight of the common weekly shock entering both channels; this is the
    /// time-varying confounding that defeats person fixed effects.
    pub shock_strength: f64,
    /// Pageview noise standard deviation.
    pub noise_sd: f64,
    /// Weight of mean peer sociability in the spontaneous message rate.
    pub sociability_weight: f64,
    /// Median of the person effect alpha_i.
    pub base_pageviews: f64,
    /// Log-scale spread of the person effect: alpha_i is lognormal,
    /// `base_pageviews * exp(alpha_log_sd * z)`. Engagement baselines are
    /// heavy-tailed, which is what makes top-quantile trimming an outlier
    /// control rather than an outcome filter.
    pub alpha_log_sd: f64,
    /// Standard deviation of drawn week effects tau_t.
    pub tau_sd: f64,
    /// Explicit per-week additive engagement terms tau_t, matched by position
    /// to the simulated weeks; when `None`, tau_t is drawn per week from
    /// `N(0, tau_sd)`.
    pub week_effects: Option<Vec<f64>>,
}

impl Default for DGPConfig {
    fn default() -> Self {
        DGPConfig {
            true_beta: 2.0,
            response_prob: 0.5,
            spontaneous_rate: 0.4,
            confound_strength: 2.5,
            shock_strength: 1.5,
            noise_sd: 3.0,
            sociability_weight: 0.5,
            base_pageviews: 25.0,
            alpha_log_sd: 0.7,
            tau_sd: 1.0,
            week_effects: None,
        }
    }
}

impl DGPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.response_prob) {
            return Err(Error::InvalidConfig(format!(
                "response_prob must be in [0,1], got {}",
                self.response_prob
            )));
        }
        if self.spontaneous_rate < 0.0 {
            return Err(Error::InvalidConfig("spontaneous_rate must be >= 0".into()));
        }
        if self.noise_sd < 0.0 || self.alpha_log_sd < 0.0 || self.tau_sd < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_sd, alpha_log_sd, tau_sd must be >= 0".into(),
            ));
        }
        if self.base_pageviews < 0.0 {
            return Err(Error::InvalidConfig("base_pageviews must be >= 0".into()));
        }
        if !self.true_beta.is_finite() {
            return Err(Error::InvalidConfig("true_beta must be finite".into()));
        }
        Ok(())
    }
}

/// One panel row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelObservation {
    pub member_id: u64,
    pub week: u32,
    pub messages_received: u32,
    pub pageviews: u32,
}

/// Everything the DGP used, recorded exactly as used, so estimators can be
/// checked against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub true_beta: f64,
    pub seed: u64,
    /// Person effect per member id.
    pub alpha: Vec<(u64, f64)>,
    /// Week effect per week.
    pub tau: Vec<(u32, f64)>,
    /// Common weekly shock per week.
    pub shock: Vec<(u32, f64)>,
}

/// Dense per-(ego, week) message counts over a fixed set of weeks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageCounts {
    member_ids: Vec<u64>,
    weeks: Vec<u32>,
    counts: Vec<u32>, // member-major, week-minor
}

impl MessageCounts {
    pub fn new(member_ids: Vec<u64>, weeks: Vec<u32>, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != member_ids.len() * weeks.len() {
            return Err(Error::InconsistentInput(format!(
                "counts length {} != members {} x weeks {}",
                counts.len(),
                member_ids.len(),
                weeks.len()
            )));
        }
        Ok(MessageCounts {
            member_ids,
            weeks,
            counts,
        })
    }

    pub fn member_ids(&self) -> &[u64] {
        &self.member_ids
    }

    pub fn weeks(&self) -> &[u32] {
        &self.weeks
    }

    pub fn get(&self, member_index: usize, week_index: usize) -> u32 {
        self.counts[member_index * self.weeks.len() + week_index]
    }

    fn get_mut(&mut self, member_index: usize, week_index: usize) -> &mut u32 {
        &mut self.counts[member_index * self.weeks.len() + week_index]
    }

    pub fn bump(&mut self, member_index: usize, week_index: usize, by: u32) {
        *self.get_mut(member_index, week_index) += by;
    }
}

/// Simulates per-(ego, week) message counts over `panel_weeks`.
pub fn simulate_messages(
    members: &[MemberRecord],
    graph: &EdgeList,
    schedules: &[NotificationSchedule],
    panel_weeks: &[u32],
    config: &DGPConfig,
    seed: u64,
) -> Result<MessageCounts> {
    config.validate()?;
    if panel_weeks.is_empty() {
        return Err(Error::InvalidConfig("panel_weeks is empty".into()));
    }
    let n = members.len();
    let adjacency = graph.adjacency(n)?;
    let id_to_index: HashMap<u64, usize> = members
        .iter()
        .enumerate()
        .map(|(i, m)| (m.member_id, i))
        .collect();

    let mut by_member: HashMap<u64, Vec<&NotificationSchedule>> = HashMap::new();
    for s in schedules {
        if !id_to_index.contains_key(&s.member_id) {
            return Err(Error::InconsistentInput(format!(
                "schedule references unknown member {}",
                s.member_id
            )));
        }
        by_member.entry(s.member_id).or_default().push(s);
    }
    for entries in by_member.values_mut() {
        entries.sort_unstable_by_key(|s| (s.scheduled_week, s.occasion));
    }

    // Mean peer sociability per ego; zero for isolated members.
    let peer_sociability: Vec<f64> = adjacency
        .iter()
        .map(|peers| {
            if peers.is_empty() {
                0.0
            } else {
                peers
                    .iter()
                    .map(|&p| members[p as usize].latent_sociability)
                    .sum::<f64>()
                    / peers.len() as f64
            }
        })
        .collect();

    let shocks: Vec<f64> = panel_weeks
        .iter()
        .map(|&w| weekly_shock(seed, w))
        .collect();

    let mut counts = vec![0u32; n * panel_weeks.len()];
    for (i, m) in members.iter().enumerate() {
        let mut rng = substream(seed, Domain::Messages, m.member_id);
        let degree = adjacency[i].len() as u64;
        let entries = by_member.get(&m.member_id);
        for (w_idx, &week) in panel_weeks.iter().enumerate() {
            let mut total: u64 = 0;

            // spontaneous channel
            let raw_rate = 1.0
                + config.confound_strength * m.latent_activity
                + config.shock_strength * shocks[w_idx] * m.latent_activity
                + config.sociability_weight * peer_sociability[i];
            let lambda = config.spontaneous_rate * raw_rate.max(0.0);
            if lambda > 0.0 {
                let poisson = Poisson::new(lambda).expect("positive rate");
                total += poisson.sample(&mut rng) as u64;
            }

            // encouraged channel: peers respond in the scheduled week
            if let Some(entries) = entries {
                for s in entries.iter().filter(|s| s.scheduled_week == week) {
                    if degree > 0 && config.response_prob > 0.0 {
                        let binom = Binomial::new(degree, config.response_prob)
                            .expect("valid response probability");
                        total += binom.sample(&mut rng);
                    } else {
                        let _ = s;
                    }
                }
            }

            counts[i * panel_weeks.len() + w_idx] = total.min(u32::MAX as u64) as u32;
        }
    }

    MessageCounts::new(members.iter().map(|m| m.member_id).collect(), panel_weeks.to_vec(), counts)
}

fn weekly_shock(seed: u64, week: u32) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.sample(&mut substream(seed, Domain::WeeklyShock, week as u64))
}

/// Turns message counts into pageview panel rows and returns the ground
/// truth used. Pageviews depend on messages received, never on whether or
/// when peers were notified.
pub fn simulate_pageviews(
    members: &[MemberRecord],
    messages: &MessageCounts,
    config: &DGPConfig,
    seed: u64,
) -> Result<(Vec<PanelObservation>, GroundTruth)> {
    config.validate()?;
    if messages.member_ids().len() != members.len() {
        return Err(Error::InconsistentInput(format!(
            "message counts cover {} members, population has {}",
            messages.member_ids().len(),
            members.len()
        )));
    }
    for (m, &id) in members.iter().zip(messages.member_ids()) {
        if m.member_id != id {
            return Err(Error::InconsistentInput(format!(
                "message counts member order mismatch at member {id}"
            )));
        }
    }
    let weeks = messages.weeks().to_vec();
    if let Some(effects) = &config.week_effects {
        if effects.len() != weeks.len() {
            return Err(Error::InvalidConfig(format!(
                "week_effects has {} entries for {} weeks",
                effects.len(),
                weeks.len()
            )));
        }
    }

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let tau: Vec<f64> = match &config.week_effects {
        Some(effects) => effects.clone(),
        None => weeks
            .iter()
            .map(|&w| {
                config.tau_sd * unit.sample(&mut substream(seed, Domain::WeekEffect, w as u64))
            })
            .collect(),
    };
    let shocks: Vec<f64> = weeks.iter().map(|&w| weekly_shock(seed, w)).collect();

    let mut panel = Vec::with_capacity(members.len() * weeks.len());
    let mut alpha = Vec::with_capacity(members.len());
    for (i, m) in members.iter().enumerate() {
        let a_i = config.base_pageviews
            * (config.alpha_log_sd
                * unit.sample(&mut substream(seed, Domain::PersonEffect, m.member_id)))
            .exp();
        alpha.push((m.member_id, a_i));
        let mut noise_rng = substream(seed, Domain::PageviewNoise, m.member_id);
        for (w_idx, &week) in weeks.iter().enumerate() {
            let noise = if config.noise_sd > 0.0 {
                config.noise_sd * unit.sample(&mut noise_rng)
            } else {
                0.0
            };
            let mean = a_i
                + tau[w_idx]
                + config.true_beta * messages.get(i, w_idx) as f64
                + config.confound_strength * m.latent_activity
                + config.shock_strength * shocks[w_idx] * m.latent_activity
                + noise;
            let pageviews = mean.round().max(0.0) as u32;
            panel.push(PanelObservation {
                member_id: m.member_id,
                week,
                messages_received: messages.get(i, w_idx),
                pageviews,
            });
        }
    }

    let truth = GroundTruth {
        true_beta: config.true_beta,
        seed,
        alpha,
        tau: weeks.iter().copied().zip(tau).collect(),
        shock: weeks.iter().copied().zip(shocks).collect(),
    };
    Ok((panel, truth))
}

pub const PANEL_HEADER: &str = "member_id,week,messages_received,pageviews";

pub fn panel_to_csv(panel: &[PanelObservation]) -> String {
    let mut out = String::from(PANEL_HEADER);
    out.push('\n');
    for p in panel {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.member_id, p.week, p.messages_received, p.pageviews
        ));
    }
    out
}

pub fn panel_from_csv(text: &str) -> Result<Vec<PanelObservation>> {
    let mut panel = Vec::new();
    for (line_no, line) in data_lines(text, PANEL_HEADER)? {
        let f = fields(line_no, line, 4)?;
        panel.push(PanelObservation {
            member_id: parse_field(line_no, "member_id", f[0])?,
            week: parse_field(line_no, "week", f[1])?,
            messages_received: parse_field(line_no, "messages_received", f[2])?,
            pageviews: parse_field(line_no, "pageviews", f[3])?,
        });
    }
    Ok(panel)
}

/// Ground-truth sidecar: `member_id,alpha_i` rows preceded by a `#` header
/// block carrying `true_beta`, the seed, and the per-week `tau`/`shock`
/// values.
pub fn ground_truth_to_csv(truth: &GroundTruth) -> String {
    let mut out = String::new();
    out.push_str(&format!("# true_beta = {}\n", truth.true_beta));
    out.push_str(&format!("# seed = {}\n", truth.seed));
    for (week, tau) in &truth.tau {
        out.push_str(&format!("# tau_{week} = {tau}\n"));
    }
    for (week, shock) in &truth.shock {
        out.push_str(&format!("# shock_{week} = {shock}\n"));
    }
    out.push_str("member_id,alpha_i\n");
    for (id, a) in &truth.alpha {
        out.push_str(&format!("{id},{a}\n"));
    }
    out
}

pub fn ground_truth_from_csv(text: &str) -> Result<GroundTruth> {
    let mut true_beta = None;
    let mut seed = None;
    let mut tau = Vec::new();
    let mut shock = Vec::new();
    let mut alpha = Vec::new();
    let mut in_header_block = true;
    let mut saw_column_header = false;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if in_header_block && line.starts_with('#') {
            let body = line.trim_start_matches('#').trim();
            let (key, value) = body.split_once('=').ok_or_else(|| {
                Error::csv(line_no, format!("expected `key = value`, found `{body}`"))
            })?;
            let key = key.trim();
            let value: f64 = parse_field(line_no, key, value.trim())?;
            if key == "true_beta" {
                true_beta = Some(value);
            } else if key == "seed" {
                seed = Some(value as u64);
            } else if let Some(week) = key.strip_prefix("tau_") {
                tau.push((parse_field(line_no, "tau week", week)?, value));
            } else if let Some(week) = key.strip_prefix("shock_") {
                shock.push((parse_field(line_no, "shock week", week)?, value));
            } else {
                return Err(Error::csv(line_no, format!("unknown header key `{key}`")));
            }
            continue;
        }
        in_header_block = false;
        if !saw_column_header {
            if line != "member_id,alpha_i" {
                return Err(Error::csv(
                    line_no,
                    format!("expected header `member_id,alpha_i`, found `{line}`"),
                ));
            }
            saw_column_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f = fields(line_no, line, 2)?;
        alpha.push((
            parse_field(line_no, "member_id", f[0])?,
            parse_field(line_no, "alpha_i", f[1])?,
        ));
    }

    Ok(GroundTruth {
        true_beta: true_beta
            .ok_or_else(|| Error::csv(1, "missing `# true_beta = ...` header"))?,
        seed: seed.ok_or_else(|| Error::csv(1, "missing `# seed = ...` header"))?,
        alpha,
        tau,
        shock,
    })
}
