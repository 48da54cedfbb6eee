//! Deterministic point-queue bottleneck and the fixed-schedule PT
//! alternative.
//!
//! A FIFO queue forms once entries exceed the service rate `s`; the delay of
//! a traveler joining with `Q` vehicles ahead is `Q / s` and total travel
//! time is delay plus free flow. Service uses integer headcounts per minute
//! with a fractional-credit accumulator so long-run throughput equals `s`
//! exactly even for non-integer effective capacities.

use crate::{Error, IntervalId, Result, NUM_INTERVALS};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Supply-side constants plus any capacity events.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyParams {
    /// Bottleneck capacity, vehicles/minute.
    pub capacity: f64,
    /// Free-flow travel time, minutes.
    pub free_flow: f64,
    /// Car operating cost per trip, dollars.
    pub car_operating_cost: f64,
    /// PT in-vehicle time, minutes.
    pub pt_travel_time: f64,
    /// Expected PT waiting time, minutes.
    pub pt_wait: f64,
    /// PT fare, dollars.
    pub pt_fare: f64,
    /// Temporary capacity reductions: (day, start minute, end minute,
    /// factor), window half-open.
    #[serde(default)]
    pub capacity_overrides: Vec<CapacityOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityOverride {
    pub day: usize,
    pub start_min: f64,
    pub end_min: f64,
    pub factor: f64,
}

impl Default for SupplyParams {
    fn default() -> Self {
        SupplyParams {
            capacity: 39.0,
            free_flow: 24.0,
            car_operating_cost: 3.13,
            pt_travel_time: 43.0,
            pt_wait: 5.0,
            pt_fare: 2.0,
            capacity_overrides: Vec::new(),
        }
    }
}

impl SupplyParams {
    pub fn validate(&self) -> Result<()> {
        if self.capacity <= 0.0 {
            return Err(Error::config("supply.capacity", "must be positive"));
        }
        if self.free_flow < 0.0 {
            return Err(Error::config("supply.free_flow", "must be >= 0"));
        }
        for (i, ov) in self.capacity_overrides.iter().enumerate() {
            if !(ov.factor > 0.0 && ov.factor <= 1.0) {
                return Err(Error::config(
                    format!("supply.capacity_overrides[{i}].factor"),
                    "must lie in (0, 1]",
                ));
            }
            if ov.start_min >= ov.end_min {
                return Err(Error::config(
                    format!("supply.capacity_overrides[{i}]"),
                    "requires start < end",
                ));
            }
        }
        Ok(())
    }
}

/// Capacity prevailing at `(day, minute)`.
///
/// At most one override is expected per instant; overlapping windows on the
/// same day are a configuration error.
pub fn effective_capacity(day: usize, minute: f64, params: &SupplyParams) -> Result<f64> {
    let mut factor = None;
    for ov in &params.capacity_overrides {
        if ov.day == day && minute >= ov.start_min && minute < ov.end_min {
            if factor.is_some() {
                return Err(Error::config(
                    "supply.capacity_overrides",
                    format!("overlapping windows active on day {day} at minute {minute}"),
                ));
            }
            factor = Some(ov.factor);
        }
    }
    Ok(params.capacity * factor.unwrap_or(1.0))
}

/// State of the bottleneck queue over one day.
#[derive(Debug, Clone, Default)]
pub struct QueueState {
    waiting: VecDeque<usize>,
    /// Fractional service capacity carried between minutes.
    service_credit: f64,
    pub cumulative_entries: usize,
    pub cumulative_served: usize,
    /// Service order, for FIFO verification.
    pub served_ids: Vec<usize>,
    /// Vehicles served in the most recent service step.
    pub last_served: usize,
}

impl QueueState {
    pub fn new() -> Self {
        QueueState::default()
    }

    /// Current queue length in vehicles.
    #[inline]
    pub fn queue_len(&self) -> usize {
        self.waiting.len()
    }

    /// Append `entrants` (already ordered by traveler id) to the queue.
    ///
    /// Returns the queuing delay, in minutes, seen by each entrant: the
    /// number of vehicles ahead at entry divided by the prevailing capacity.
    pub fn enqueue(&mut self, entrants: &[usize], capacity: f64) -> Vec<f64> {
        let mut delays = Vec::with_capacity(entrants.len());
        for &id in entrants {
            delays.push(self.waiting.len() as f64 / capacity);
            self.waiting.push_back(id);
            self.cumulative_entries += 1;
        }
        delays
    }

    /// Serve up to one minute's worth of capacity, in FIFO order.
    ///
    /// Unused capacity is not banked: if the queue empties, the carried
    /// fractional credit resets.
    pub fn serve_minute(&mut self, capacity: f64) {
        let available = self.service_credit + capacity;
        let want = available.floor() as usize;
        let served = want.min(self.waiting.len());
        for _ in 0..served {
            let id = self.waiting.pop_front().expect("queue length checked");
            self.served_ids.push(id);
        }
        self.cumulative_served += served;
        self.last_served = served;
        self.service_credit = if served < want {
            0.0
        } else {
            available - want as f64
        };
    }
}

/// Queuing delay, in minutes, for a vehicle joining the current queue.
pub fn delay(state: &QueueState, capacity: f64) -> f64 {
    state.queue_len() as f64 / capacity
}

/// Total travel time for a vehicle joining the current queue.
pub fn travel_time(state: &QueueState, capacity: f64, params: &SupplyParams) -> f64 {
    delay(state, capacity) + params.free_flow
}

/// Mean realized travel time of travelers departing in interval `h`; free
/// flow when the interval is empty, so the learning filter receives a
/// neutral signal rather than a stale one.
pub fn interval_travel_time(times: &[Vec<f64>], h: IntervalId, free_flow: f64) -> f64 {
    let tts = &times[h];
    if tts.is_empty() {
        free_flow
    } else {
        tts.iter().sum::<f64>() / tts.len() as f64
    }
}

/// Realized per-interval travel-time vector for a whole day.
pub fn interval_travel_times(times: &[Vec<f64>], free_flow: f64) -> Vec<f64> {
    (0..NUM_INTERVALS)
        .map(|h| interval_travel_time(times, h, free_flow))
        .collect()
}
