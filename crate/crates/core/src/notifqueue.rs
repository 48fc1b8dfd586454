//! Notification scheduling and treatment/control group derivation.
//!
//! Two scheduling regimes are modeled. Work-anniversary notifications are
//! queued by an offline job that spreads the month's load uniformly over its
//! weeks and balances per-day counts within each week. Birthday notifications
//! fire in the member's birth week with no scheduler freedom. Group labels
//! fall out of the schedule: notified in the treatment week -> treatment, in
//! the control week -> control, anywhere else -> excluded.
//!
//! The simulation calendar is 52 weeks of 7 days; month `m` spans weeks
//! `4(m-1)+1 ..= 4m`.

use crate::error::{Error, Result};
use crate::io::{data_lines, fields, parse_field};
use crate::rng::{mix64, substream, Domain};
use crate::synthnet::MemberRecord;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

pub const WEEKS_PER_MONTH: u32 = 4;
pub const DAYS_PER_WEEK: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Occasion {
    Birthday,
    Anniversary,
}

impl fmt::Display for Occasion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Occasion::Birthday => write!(f, "birthday"),
            Occasion::Anniversary => write!(f, "anniversary"),
        }
    }
}

impl FromStr for Occasion {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "birthday" => Ok(Occasion::Birthday),
            "anniversary" => Ok(Occasion::Anniversary),
            other => Err(format!("unknown occasion `{other}`")),
        }
    }
}

/// When a member's occasion notification goes out to their peers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotificationSchedule {
    pub member_id: u64,
    pub occasion: Occasion,
    /// Absolute simulation week index.
    pub scheduled_week: u32,
    /// Day 0..=6 within the week.
    pub scheduled_day: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Treatment,
    Control,
    Excluded,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Treatment => write!(f, "treatment"),
            Group::Control => write!(f, "control"),
            Group::Excluded => write!(f, "excluded"),
        }
    }
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "treatment" => Ok(Group::Treatment),
            "control" => Ok(Group::Control),
            "excluded" => Ok(Group::Excluded),
            other => Err(format!("unknown group `{other}`")),
        }
    }
}

/// Natural treatment assignment derived from the schedule. The group label
/// doubles as the instrument: `treatment` is `T_i = 1`, `control` is
/// `T_i = 0`, `excluded` members leave the estimation sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupAssignment {
    pub member_id: u64,
    pub occasion: Occasion,
    pub group: Group,
}

/// Week layout of one natural experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowConfig {
    pub treatment_week: u32,
    pub control_week: u32,
    /// Weeks over which outcomes are compared; must contain the treatment
    /// week and not the control week.
    pub observation_weeks: Vec<u32>,
    /// Week used for the A/A check; must precede the observation window.
    pub pre_period_week: u32,
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.observation_weeks.is_empty() {
            return Err(Error::InvalidConfig("observation_weeks is empty".into()));
        }
        if !self.observation_weeks.contains(&self.treatment_week) {
            return Err(Error::InvalidConfig(format!(
                "treatment_week {} must be inside the observation window {:?}",
                self.treatment_week, self.observation_weeks
            )));
        }
        if self.observation_weeks.contains(&self.control_week) {
            return Err(Error::InvalidConfig(format!(
                "control_week {} must fall outside the observation window {:?}",
                self.control_week, self.observation_weeks
            )));
        }
        let first = *self.observation_weeks.iter().min().unwrap();
        if self.pre_period_week >= first {
            return Err(Error::InvalidConfig(format!(
                "pre_period_week {} must precede the observation window (first week {})",
                self.pre_period_week, first
            )));
        }
        Ok(())
    }
}

/// The four candidate weeks of simulation month `month` (1-based).
pub fn month_weeks(month: u32) -> [u32; 4] {
    let w0 = (month - 1) * WEEKS_PER_MONTH + 1;
    [w0, w0 + 1, w0 + 2, w0 + 3]
}

/// Schedules anniversary notifications for every member whose
/// `anniversary_month` equals `month`.
///
/// Each eligible member lands in one of the month's four weeks uniformly at
/// random (the member-level substream keeps this order-independent). Within
/// each week, members are dealt round-robin onto days after a seeded shuffle,
/// so per-day counts within a week never differ by more than one.
pub fn schedule_anniversaries(
    members: &[MemberRecord],
    month: u32,
    seed: u64,
) -> Result<Vec<NotificationSchedule>> {
    if !(1..=12).contains(&month) {
        return Err(Error::InvalidConfig(format!(
            "month must be in 1..=12, got {month}"
        )));
    }
    let weeks = month_weeks(month);

    let mut by_week: Vec<Vec<u64>> = vec![Vec::new(); weeks.len()];
    for m in members {
        if m.anniversary_month != month {
            continue;
        }
        let mut rng = substream(seed, Domain::AnniversaryWeek, m.member_id);
        let w = rng.random_range(0..weeks.len());
        by_week[w].push(m.member_id);
    }

    let mut schedules = Vec::new();
    for (w, ids) in by_week.iter_mut().enumerate() {
        ids.sort_unstable();
        let mut rng = substream(seed, Domain::AnniversaryDay, weeks[w] as u64);
        ids.shuffle(&mut rng);
        for (pos, &member_id) in ids.iter().enumerate() {
            schedules.push(NotificationSchedule {
                member_id,
                occasion: Occasion::Anniversary,
                scheduled_week: weeks[w],
                scheduled_day: (pos as u32 % DAYS_PER_WEEK) as u8,
            });
        }
    }
    schedules.sort_unstable_by_key(|s| s.member_id);
    Ok(schedules)
}

/// Schedules birthday notifications: the member supplied their date of
/// birth, so the week is their birth week and the day within it is fixed by
/// the date. No seed is involved; the result is a pure function of the
/// population.
pub fn schedule_birthdays(members: &[MemberRecord]) -> Result<Vec<NotificationSchedule>> {
    let mut schedules = Vec::with_capacity(members.len());
    for m in members {
        if !(1..=52).contains(&m.birth_week) {
            return Err(Error::InvalidConfig(format!(
                "member {} has birth_week {} outside 1..=52",
                m.member_id, m.birth_week
            )));
        }
        schedules.push(NotificationSchedule {
            member_id: m.member_id,
            occasion: Occasion::Birthday,
            scheduled_week: m.birth_week,
            scheduled_day: (mix64(m.member_id) % DAYS_PER_WEEK as u64) as u8,
        });
    }
    schedules.sort_unstable_by_key(|s| s.member_id);
    Ok(schedules)
}

/// Labels each scheduled member treatment, control, or excluded according to
/// the window. Members scheduled in other weeks (including other observation
/// weeks) are excluded rather than treated as controls.
pub fn assign_groups(
    schedules: &[NotificationSchedule],
    window: &WindowConfig,
) -> Result<Vec<GroupAssignment>> {
    window.validate()?;
    let mut seen: HashSet<(u64, Occasion)> = HashSet::new();
    let mut assignments = Vec::with_capacity(schedules.len());
    for s in schedules {
        if !seen.insert((s.member_id, s.occasion)) {
            return Err(Error::InconsistentInput(format!(
                "member {} appears twice for occasion {}",
                s.member_id, s.occasion
            )));
        }
        let group = if s.scheduled_week == window.treatment_week {
            Group::Treatment
        } else if s.scheduled_week == window.control_week {
            Group::Control
        } else {
            Group::Excluded
        };
        assignments.push(GroupAssignment {
            member_id: s.member_id,
            occasion: s.occasion,
            group,
        });
    }
    Ok(assignments)
}

pub const SCHEDULE_HEADER: &str = "member_id,occasion,scheduled_week,scheduled_day";

pub fn schedules_to_csv(schedules: &[NotificationSchedule]) -> String {
    let mut out = String::from(SCHEDULE_HEADER);
    out.push('\n');
    for s in schedules {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.member_id, s.occasion, s.scheduled_week, s.scheduled_day
        ));
    }
    out
}

pub fn schedules_from_csv(text: &str) -> Result<Vec<NotificationSchedule>> {
    let mut schedules = Vec::new();
    for (line_no, line) in data_lines(text, SCHEDULE_HEADER)? {
        let f = fields(line_no, line, 4)?;
        schedules.push(NotificationSchedule {
            member_id: parse_field(line_no, "member_id", f[0])?,
            occasion: f[1]
                .parse()
                .map_err(|e: String| Error::csv(line_no, e))?,
            scheduled_week: parse_field(line_no, "scheduled_week", f[2])?,
            scheduled_day: parse_field(line_no, "scheduled_day", f[3])?,
        });
    }
    Ok(schedules)
}

pub const ASSIGNMENT_HEADER: &str = "member_id,occasion,group";

pub fn assignments_to_csv(assignments: &[GroupAssignment]) -> String {
    let mut out = String::from(ASSIGNMENT_HEADER);
    out.push('\n');
    for a in assignments {
        out.push_str(&format!("{},{},{}\n", a.member_id, a.occasion, a.group));
    }
    out
}

pub fn assignments_from_csv(text: &str) -> Result<Vec<GroupAssignment>> {
    let mut assignments = Vec::new();
    for (line_no, line) in data_lines(text, ASSIGNMENT_HEADER)? {
        let f = fields(line_no, line, 3)?;
        assignments.push(GroupAssignment {
            member_id: parse_field(line_no, "member_id", f[0])?,
            occasion: f[1]
                .parse()
                .map_err(|e: String| Error::csv(line_no, e))?,
            group: f[2]
                .parse()
                .map_err(|e: String| Error::csv(line_no, e))?,
        });
    }
    Ok(assignments)
}
