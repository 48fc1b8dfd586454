//! Synthetic member population and homophilous friendship graph.
//!
//! The population model plants exactly the confounding channels the
//! estimators have to contend with: `latent_activity` drives both baseline
//! engagement and attractiveness as a message target, `latent_sociability`
//! drives message sending, and the demographic covariates are mildly
//! correlated with activity so that regression controls help a little but
//! not much. Occasion timing (birth week, anniversary month) is drawn
//! uniformly and independently of everything else; that exogeneity is what
//! licenses using the notification schedule as an instrument.

use crate::error::{Error, Result};
use crate::io::{data_lines, fields, parse_field};
use crate::rng::{pair_unit, substream, Domain};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One synthetic member.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberRecord {
    pub member_id: u64,
    /// Drives both baseline pageviews and attractiveness as a message target:
    /// the confounder.
    pub latent_activity: f64,
    /// Drives propensity to send messages.
    pub latent_sociability: f64,
    /// Week of the year the member was born, 1..=52.
    pub birth_week: u32,
    /// Month the member's work anniversary falls in, 1..=12.
    pub anniversary_month: u32,
    pub country: u32,
    pub industry: u32,
    /// Decile (1..=10) of realized degree; written back by [`generate_graph`].
    pub connections_decile: u8,
    pub tenure_years: u32,
}

/// Undirected simple graph over member ids, stored as sorted `(a, b)` pairs
/// with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    edges: Vec<(u64, u64)>,
}

impl EdgeList {
    pub fn new(mut edges: Vec<(u64, u64)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(Error::InconsistentInput(format!(
                    "self-loop on member {}",
                    e.0
                )));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(EdgeList { edges })
    }

    pub fn edges(&self) -> &[(u64, u64)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Adjacency lists for members `0..n`. Edge endpoints must be `< n`.
    pub fn adjacency(&self, n: usize) -> Result<Vec<Vec<u64>>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InconsistentInput(format!(
                    "edge ({a},{b}) references a member outside 0..{n}"
                )));
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        Ok(adj)
    }

    pub fn degrees(&self, n: usize) -> Result<Vec<usize>> {
        let mut deg = vec![0usize; n];
        for &(a, b) in &self.edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InconsistentInput(format!(
                    "edge ({a},{b}) references a member outside 0..{n}"
                )));
            }
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        Ok(deg)
    }

    pub fn mean_degree(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / n as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("member_a,member_b\n");
        for &(a, b) in &self.edges {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (line_no, line) in data_lines(text, "member_a,member_b")? {
            let f = fields(line_no, line, 2)?;
            let a: u64 = parse_field(line_no, "member_a", f[0])?;
            let b: u64 = parse_field(line_no, "member_b", f[1])?;
            if a >= b {
                return Err(Error::csv(
                    line_no,
                    format!("edges must satisfy member_a < member_b, got ({a},{b})"),
                ));
            }
            edges.push((a, b));
        }
        EdgeList::new(edges)
    }
}

/// Parameters of the population model.
#[derive(Debug, Clone)]
pub struct PopulationConfig {
    pub n_members: usize,
    /// Mean of the latent activity trait.
    pub activity_mean: f64,
    /// Standard deviation of the latent activity trait.
    pub activity_sd: f64,
    /// Standard deviation of the latent sociability trait (mean 0).
    pub sociability_sd: f64,
    pub n_countries: u32,
    pub n_industries: u32,
    /// Correlation-ish weight tying demographic covariates to activity.
    /// Small values make "OLS with controls" only slightly less biased than
    /// plain OLS.
    pub covariate_activity_weight: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_members: 10_000,
            activity_mean: 0.0,
            activity_sd: 1.0,
            sociability_sd: 1.0,
            n_countries: 8,
            n_industries: 12,
            covariate_activity_weight: 0.35,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_members < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_members must be >= 2, got {}",
                self.n_members
            )));
        }
        if self.activity_sd <= 0.0 || self.sociability_sd <= 0.0 {
            return Err(Error::InvalidConfig(
                "trait standard deviations must be positive".into(),
            ));
        }
        if self.n_countries == 0 || self.n_industries == 0 {
            return Err(Error::InvalidConfig(
                "n_countries and n_industries must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters of the graph model.
#[derive(Debug, Clone)]
pub struct GraphConfig {
    /// Target mean degree; realized mean degree lands within a few percent.
    pub mean_degree: f64,
    /// Weight of latent-trait similarity in the edge-probability logit.
    /// Zero gives an Erdős–Rényi graph.
    pub homophily_strength: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            mean_degree: 20.0,
            homophily_strength: 1.0,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self, n_members: usize) -> Result<()> {
        if self.mean_degree < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "mean_degree must be >= 1, got {}",
                self.mean_degree
            )));
        }
        if self.mean_degree >= n_members as f64 {
            return Err(Error::InvalidConfig(format!(
                "mean_degree {} must be < n_members {}",
                self.mean_degree, n_members
            )));
        }
        if self.homophily_strength < 0.0 {
            return Err(Error::InvalidConfig(
                "homophily_strength must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Standard normal CDF via the complementary error function (Abramowitz &
/// Stegun 7.1.26); good to ~1e-7, plenty for bucketing covariates.
fn std_normal_cdf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs() / std::f64::consts::SQRT_2);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erfc = poly * (-x * x / 2.0).exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

/// Generates the member population. Each member is drawn from its own RNG
/// substream keyed by `(seed, member_id)`, so the result does not depend on
/// generation order.
pub fn generate_population(config: &PopulationConfig, seed: u64) -> Result<Vec<MemberRecord>> {
    config.validate()?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let w = config.covariate_activity_weight;
    let resid = (1.0 - w * w).max(0.0).sqrt();

    let mut members = Vec::with_capacity(config.n_members);
    for id in 0..config.n_members as u64 {
        let mut rng = substream(seed, Domain::PopulationTraits, id);
        let z_activity: f64 = normal.sample(&mut rng);
        let z_sociability: f64 = normal.sample(&mut rng);
        let latent_activity = config.activity_mean + config.activity_sd * z_activity;
        let latent_sociability = config.sociability_sd * z_sociability;
        let birth_week = rng.random_range(1..=52u32);
        let anniversary_month = rng.random_range(1..=12u32);

        // Covariates: Gaussian copula with a mild loading on activity, then
        // bucketed into categories by quantile.
        let bucket = |u: f64, levels: u32| -> u32 {
            ((u * levels as f64) as u32).min(levels - 1)
        };
        let z_c: f64 = normal.sample(&mut rng);
        let country = bucket(std_normal_cdf(w * z_activity + resid * z_c), config.n_countries);
        let z_i: f64 = normal.sample(&mut rng);
        let industry = bucket(
            std_normal_cdf(w * z_activity + resid * z_i),
            config.n_industries,
        );
        let z_t: f64 = normal.sample(&mut rng);
        let tenure_years = (18.0 + 8.0 * (w * z_activity + resid * z_t))
            .round()
            .clamp(0.0, 40.0) as u32;

        members.push(MemberRecord {
            member_id: id,
            latent_activity,
            latent_sociability,
            birth_week,
            anniversary_month,
            country,
            industry,
            connections_decile: 1,
            tenure_years,
        });
    }
    Ok(members)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Calibrates the logit intercept so the expected edge probability over a
/// pair sample matches `target_p`. Monotone in `base`, so bisection works.
fn calibrate_base(similarities: &[f64], homophily: f64, target_p: f64) -> f64 {
    let mean_p = |base: f64| -> f64 {
        similarities
            .iter()
            .map(|&s| sigmoid(base + homophily * s))
            .sum::<f64>()
            / similarities.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target_p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generates the friendship graph and writes realized-degree deciles back
/// into `members`.
///
/// Edge probability follows a logistic link on
/// `base + homophily_strength * similarity(i, j)` where similarity is the
/// negated absolute activity gap; `base` is calibrated against the target
/// mean degree. Each pair's Bernoulli draw is addressed by `(seed, i, j)`,
/// so the graph is independent of enumeration order.
pub fn generate_graph(
    members: &mut [MemberRecord],
    config: &GraphConfig,
    seed: u64,
) -> Result<EdgeList> {
    if members.is_empty() {
        return Err(Error::InvalidConfig("members must be nonempty".into()));
    }
    config.validate(members.len())?;

    let n = members.len();
    let activity: Vec<f64> = members.iter().map(|m| m.latent_activity).collect();
    let target_p = config.mean_degree / (n as f64 - 1.0);
    let h = config.homophily_strength;

    // With no homophily every pair has probability target_p exactly;
    // otherwise calibrate the intercept on a sampled set of pairs.
    let (base, p_max) = if h == 0.0 {
        (0.0, target_p)
    } else {
        let n_pairs = n * (n - 1) / 2;
        let sample_size = n_pairs.min(500_000);
        let mut rng = substream(seed, Domain::GraphCalibration, 0);
        let mut sims = Vec::with_capacity(sample_size);
        while sims.len() < sample_size {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                sims.push(-(activity[i] - activity[j]).abs());
            }
        }
        let base = calibrate_base(&sims, h, target_p);
        // similarity <= 0, so sigmoid(base) bounds every pair probability
        (base, sigmoid(base))
    };

    let mut edges = Vec::new();
    for i in 0..n {
        let ai = activity[i];
        for j in (i + 1)..n {
            let u = pair_unit(seed, Domain::GraphEdges, i as u64, j as u64);
            if u >= p_max {
                continue;
            }
            let p = if h == 0.0 {
                target_p
            } else {
                sigmoid(base + h * -(ai - activity[j]).abs())
            };
            if u < p {
                edges.push((i as u64, j as u64));
            }
        }
    }

    let edge_list = EdgeList { edges };
    let degrees = edge_list.degrees(n)?;
    assign_degree_deciles(members, &degrees);
    Ok(edge_list)
}

/// Ranks members by (degree, member_id) and writes decile 1..=10 back.
fn assign_degree_deciles(members: &mut [MemberRecord], degrees: &[usize]) {
    let n = members.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (degrees[i], members[i].member_id));
    for (rank, &i) in order.iter().enumerate() {
        members[i].connections_decile = (1 + rank * 10 / n).min(10) as u8;
    }
}

pub const POPULATION_HEADER: &str = "member_id,latent_activity,latent_sociability,birth_week,anniversary_month,country,industry,connections_decile,tenure_years";

pub fn population_to_csv(members: &[MemberRecord]) -> String {
    let mut out = String::from(POPULATION_HEADER);
    out.push('\n');
    for m in members {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.member_id,
            m.latent_activity,
            m.latent_sociability,
            m.birth_week,
            m.anniversary_month,
            m.country,
            m.industry,
            m.connections_decile,
            m.tenure_years
        ));
    }
    out
}

pub fn population_from_csv(text: &str) -> Result<Vec<MemberRecord>> {
    let mut members = Vec::new();
    for (line_no, line) in data_lines(text, POPULATION_HEADER)? {
        let f = fields(line_no, line, 9)?;
        members.push(MemberRecord {
            member_id: parse_field(line_no, "member_id", f[0])?,
            latent_activity: parse_field(line_no, "latent_activity", f[1])?,
            latent_sociability: parse_field(line_no, "latent_sociability", f[2])?,
            birth_week: parse_field(line_no, "birth_week", f[3])?,
            anniversary_month: parse_field(line_no, "anniversary_month", f[4])?,
            country: parse_field(line_no, "country", f[5])?,
            industry: parse_field(line_no, "industry", f[6])?,
            connections_decile: parse_field(line_no, "connections_decile", f[7])?,
            tenure_years: parse_field(line_no, "tenure_years", f[8])?,
        });
    }
    Ok(members)
}
