//! Simulation and estimation toolkit for peer effects identified through
//! notification-queue natural experiments.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`synthnet`] generates a synthetic member population and a homophilous
//!    friendship graph with a known confounding structure.
//! 2. [`notifqueue`] schedules occasion notifications (work anniversaries,
//!    birthdays) the way a load-balanced notification queue would, and derives
//!    treatment/control groups from the schedule.
//! 3. [`behavior`] turns schedules into peer messages and member engagement
//!    (pageviews) with a configurable, known peer effect and explicit
//!    confounding channels.
//! 4. [`estimators`] provides OLS, OLS with controls, two-way fixed effects,
//!    two-stage least squares, Welch t-tests, and outlier trimming.
//! 5. [`backtest`] applies an estimated peer-effect coefficient to A/B
//!    experiment summaries to produce network-adjusted lifts.
//! 6. [`pipeline`] wires the stages together and handles file persistence.
//!
//! Everything is deterministic: identical configuration and seed produce
//! byte-identical outputs, independent of thread count or member ordering.

pub mod backtest;
pub mod behavior;
pub mod error;
pub mod estimators;
mod io;
pub mod notifqueue;
pub mod pipeline;
pub mod rng;
pub mod synthnet;

pub use error::{Error, Result};
