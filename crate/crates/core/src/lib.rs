//! Agent-based day-to-day simulator for tradable mobility credit (TMC)
//! markets, congestion pricing (CP) and a no-toll baseline (NT) on the
//! morning-commute bottleneck, plus a differential-evolution optimizer for
//! step-toll profiles.
//!
//! The crate is organized around the daily loop: a synthetic heterogeneous
//! population ([`population`]) makes pre-day mode/departure-time choices
//! ([`demand`]) from smoothed forecasts ([`learning`]), travels through a
//! point-queue bottleneck ([`supply`]) while trading tokens in a regulated
//! market ([`market`]), and the whole system is iterated to equilibrium by
//! the [`engine`]. Welfare and market-behavior measures live in [`metrics`];
//! simulation-based toll optimization in [`optimizer`].

pub mod demand;
pub mod engine;
mod error;
pub mod learning;
pub mod market;
pub mod metrics;
pub mod optimizer;
pub mod population;
pub mod rng;
pub mod scenario;
pub mod supply;

pub use error::{Error, Result};

/// Simulated portion of a day, in minutes. The morning half-day is simulated
/// explicitly; the evening is accounted for as a mirror of the morning.
pub const DAY_MINUTES: u32 = 720;

/// Length of a departure-time interval, in minutes.
pub const INTERVAL_MINUTES: u32 = 5;

/// Number of departure-time intervals in the simulated half-day.
pub const NUM_INTERVALS: usize = (DAY_MINUTES / INTERVAL_MINUTES) as usize;

/// Minutes in a full day; used when the next planned trip falls on the
/// following day.
pub const FULL_DAY_MINUTES: u32 = 1440;

/// Index of a departure-time interval within the simulated half-day.
pub type IntervalId = usize;

/// Start minute of a departure-time interval.
#[inline]
pub fn interval_start(h: IntervalId) -> f64 {
    (h as u32 * INTERVAL_MINUTES) as f64
}

/// Interval containing a given minute-of-day, clamped to the half-day grid.
#[inline]
pub fn interval_of(minute: f64) -> IntervalId {
    let idx = (minute / INTERVAL_MINUTES as f64).floor();
    (idx.max(0.0) as usize).min(NUM_INTERVALS - 1)
}
