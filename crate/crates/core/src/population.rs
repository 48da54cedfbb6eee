//! Synthesis of the heterogeneous traveler population.
//!
//! Travelers are built from configured distributions: lognormal pre-tax
//! income (value of time is a fixed fraction of the implied wage),
//! triangular schedule-delay ratios, a lognormal logit scale and a truncated
//! normal preferred arrival time. Every random draw, including the Gumbel
//! utility draws, is frozen at synthesis so the population can be shared
//! read-only across days and instruments.

use crate::rng::{stream_rng, Stream};
use crate::{Error, IntervalId, Result, INTERVAL_MINUTES, NUM_INTERVALS};
use rand::Rng;
use rand_distr::{Distribution, Gumbel, LogNormal, Normal};
use serde::{Deserialize, Serialize};

/// Euler-Mascheroni constant; recentres Gumbel draws to zero mean.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn default_income_cap() -> f64 {
    500_000.0
}

const WORKING_DAYS_PER_YEAR: f64 = 260.0;
const WORKING_HOURS_PER_DAY: f64 = 8.0;

/// How the departure-time window size is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowUnit {
    /// `eta_window_min` is a half-width in minutes around the day-0
    /// preferred departure interval (the default reading).
    #[default]
    Minutes,
    /// `eta_window_min` counts intervals on each side of the day-0
    /// preferred departure interval.
    Intervals,
}

/// Configuration for population synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    /// Number of travelers.
    pub n_travelers: usize,
    /// (mu, sigma) of the lognormal annual pre-tax income, dollars.
    pub income_lognormal: (f64, f64),
    /// Annual incomes above this are grouped at the cap, mirroring the
    /// top-coding of the reference income data.
    #[serde(default = "default_income_cap")]
    pub income_cap_annual: f64,
    /// Floor on the implied hourly wage, dollars/hour.
    pub min_hourly_wage: f64,
    /// Fraction of daily income that is disposable for transportation.
    pub disposable_fraction: f64,
    /// Value of time as a fraction of the hourly wage.
    pub vot_wage_fraction: f64,
    /// (low, mode, high) of the schedule-delay-early to VOT ratio.
    pub sde_ratio_tri: (f64, f64, f64),
    /// (low, mode, high) of the schedule-delay-late to VOT ratio.
    pub sdl_ratio_tri: (f64, f64, f64),
    /// Value of PT waiting time as a multiple of VOT.
    pub wait_value_ratio: f64,
    /// Mean of the lognormal logit scale parameter.
    pub scale_lognormal_mean: f64,
    /// Coefficient of variation of the logit scale parameter.
    pub scale_lognormal_cov: f64,
    /// (mean, sd, lower, upper) of the truncated normal preferred time,
    /// minutes from midnight.
    pub preferred_dep_time_dist: (f64, f64, f64, f64),
    /// Departure-window half-width; see `eta_window_unit`.
    pub eta_window_min: f64,
    /// Interpretation of `eta_window_min`.
    #[serde(default)]
    pub eta_window_unit: WindowUnit,
    /// Seed for the population stream.
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_travelers: 7_500,
            // Calibration placeholders, tuned jointly with the preferred
            // departure-time spread so that the no-toll equilibrium hits the
            // target travel time index and the demand model reproduces the
            // reference peak-hour price elasticities. Not fitted values; see
            // README.
            income_lognormal: (10.3, 2.6),
            income_cap_annual: default_income_cap(),
            min_hourly_wage: 7.25,
            disposable_fraction: 0.6,
            vot_wage_fraction: 1.0 / 3.0,
            sde_ratio_tri: (0.1, 0.5, 1.0),
            sdl_ratio_tri: (1.0, 2.0, 3.0),
            wait_value_ratio: 3.0,
            scale_lognormal_mean: 0.5,
            scale_lognormal_cov: 0.5,
            preferred_dep_time_dist: (450.0, 36.0, 240.0, 675.0),
            eta_window_min: 30.0,
            eta_window_unit: WindowUnit::Minutes,
            seed: 1,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        fn tri_ok(field: &str, (low, mode, high): (f64, f64, f64)) -> Result<()> {
            if !(0.0 < low && low <= mode && mode <= high) {
                return Err(Error::config(
                    field,
                    format!("requires 0 < low <= mode <= high, got ({low}, {mode}, {high})"),
                ));
            }
            Ok(())
        }
        if self.n_travelers == 0 {
            return Err(Error::config("population.n_travelers", "must be positive"));
        }
        if !(self.disposable_fraction > 0.0 && self.disposable_fraction <= 1.0) {
            return Err(Error::config(
                "population.disposable_fraction",
                "must lie in (0, 1]",
            ));
        }
        if self.income_cap_annual <= 0.0 {
            return Err(Error::config(
                "population.income_cap_annual",
                "must be positive",
            ));
        }
        if self.min_hourly_wage <= 0.0 {
            return Err(Error::config(
                "population.min_hourly_wage",
                "must be positive",
            ));
        }
        if self.vot_wage_fraction <= 0.0 {
            return Err(Error::config(
                "population.vot_wage_fraction",
                "must be positive",
            ));
        }
        tri_ok("population.sde_ratio_tri", self.sde_ratio_tri)?;
        tri_ok("population.sdl_ratio_tri", self.sdl_ratio_tri)?;
        if self.wait_value_ratio <= 0.0 {
            return Err(Error::config(
                "population.wait_value_ratio",
                "must be positive",
            ));
        }
        if self.scale_lognormal_mean <= 0.0 || self.scale_lognormal_cov <= 0.0 {
            return Err(Error::config(
                "population.scale_lognormal",
                "mean and cov must be positive",
            ));
        }
        let (_, sd, lb, ub) = self.preferred_dep_time_dist;
        if sd <= 0.0 || lb >= ub {
            return Err(Error::config(
                "population.preferred_dep_time_dist",
                "requires sd > 0 and lb < ub",
            ));
        }
        if self.eta_window_min <= 0.0 {
            return Err(Error::config(
                "population.eta_window_min",
                "must be positive",
            ));
        }
        Ok(())
    }

    /// Number of intervals on each side of the day-0 preferred departure
    /// interval.
    pub fn window_half_intervals(&self) -> usize {
        match self.eta_window_unit {
            WindowUnit::Minutes => (self.eta_window_min / INTERVAL_MINUTES as f64).round() as usize,
            WindowUnit::Intervals => self.eta_window_min.round() as usize,
        }
    }
}

/// Immutable preference/endowment record of one traveler.
///
/// Monetary rates are per minute; all draws are frozen for the traveler's
/// lifetime so that choices are perfectly correlated across days and across
/// instruments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Traveler {
    pub id: usize,
    /// Daily disposable income, dollars.
    pub disposable_income: f64,
    /// Value of time, dollars/minute.
    pub vot: f64,
    /// Value of schedule delay early, dollars/minute.
    pub sde_value: f64,
    /// Value of schedule delay late, dollars/minute.
    pub sdl_value: f64,
    /// Value of PT waiting time, dollars/minute.
    pub wait_value: f64,
    /// Logit scale parameter.
    pub scale: f64,
    /// Preferred arrival time, minute of day.
    pub preferred_arrival: f64,
    /// Inclusive range of departure-time intervals available to this
    /// traveler.
    pub dep_window: (IntervalId, IntervalId),
    /// Frozen Gumbel utility draws for the car alternatives, one per window
    /// interval.
    pub car_eps: Vec<f64>,
    /// Frozen Gumbel utility draw for the PT alternative.
    pub pt_eps: f64,
}

impl Traveler {
    /// Frozen draw for departing by car in window slot `slot`.
    #[inline]
    pub fn car_eps(&self, slot: usize) -> f64 {
        self.car_eps[slot]
    }

    /// Window slot of interval `h`, if it is in this traveler's window.
    #[inline]
    pub fn window_slot(&self, h: IntervalId) -> Option<usize> {
        (self.dep_window.0..=self.dep_window.1)
            .contains(&h)
            .then(|| h - self.dep_window.0)
    }
}

/// Inverse CDF of the triangular distribution on `[low, high]` with the
/// given mode.
pub fn tri_inverse_cdf(u: f64, low: f64, mode: f64, high: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!(
            "triangular inverse cdf requires u in [0, 1], got {u}"
        )));
    }
    if !(low <= mode && mode <= high) {
        return Err(Error::domain(
            "triangular parameters require low <= mode <= high",
        ));
    }
    if high == low {
        return Ok(low);
    }
    let fc = (mode - low) / (high - low);
    let x = if u <= fc {
        low + (u * (high - low) * (mode - low)).sqrt()
    } else {
        high - ((1.0 - u) * (high - low) * (high - mode)).sqrt()
    };
    Ok(x)
}

/// Rejection sampler for the truncated normal; acceptance is near 1 for the
/// configured bounds.
fn truncated_normal(rng: &mut impl Rng, mean: f64, sd: f64, lb: f64, ub: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("validated sd");
    loop {
        let x = normal.sample(rng);
        if x >= lb && x <= ub {
            return x;
        }
    }
}

/// Lognormal parametrized by its mean and coefficient of variation.
fn lognormal_from_mean_cov(mean: f64, cov: f64) -> LogNormal<f64> {
    let sigma2 = (1.0 + cov * cov).ln();
    let mu = mean.ln() - sigma2 / 2.0;
    LogNormal::new(mu, sigma2.sqrt()).expect("validated parameters")
}

/// Synthesize the traveler population.
///
/// `free_flow_min` is needed to place the day-0 preferred departure interval
/// (preferred arrival minus the free-flow travel time), around which each
/// traveler's departure window is centered. Deterministic for a fixed
/// config.
pub fn synthesize_population(config: &PopulationConfig, free_flow_min: f64) -> Result<Vec<Traveler>> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Population);

    let income_dist = LogNormal::new(config.income_lognormal.0, config.income_lognormal.1)
        .map_err(|e| Error::config("population.income_lognormal", e.to_string()))?;
    let scale_dist = lognormal_from_mean_cov(config.scale_lognormal_mean, config.scale_lognormal_cov);
    let (pd_mean, pd_sd, pd_lb, pd_ub) = config.preferred_dep_time_dist;
    let half = config.window_half_intervals();
    let window_len = 2 * half + 1;

    let mut travelers = Vec::with_capacity(config.n_travelers);
    for id in 0..config.n_travelers {
        let annual = income_dist.sample(&mut rng).min(config.income_cap_annual);
        let raw_daily = annual / WORKING_DAYS_PER_YEAR;
        // The minimum-wage floor applies to the implied wage rate, so it
        // lifts the daily income consistently.
        let hourly = (raw_daily / WORKING_HOURS_PER_DAY).max(config.min_hourly_wage);
        let daily = hourly * WORKING_HOURS_PER_DAY;
        let disposable_income = config.disposable_fraction * daily;
        let vot = config.vot_wage_fraction * hourly / 60.0;

        let (lo, mo, hi) = config.sde_ratio_tri;
        let sde_value = vot * tri_inverse_cdf(rng.random::<f64>(), lo, mo, hi)?;
        let (lo, mo, hi) = config.sdl_ratio_tri;
        let sdl_value = vot * tri_inverse_cdf(rng.random::<f64>(), lo, mo, hi)?;
        let wait_value = config.wait_value_ratio * vot;

        let scale = scale_dist.sample(&mut rng);
        let preferred_arrival = truncated_normal(&mut rng, pd_mean, pd_sd, pd_lb, pd_ub);

        // Day-0 preferred departure interval from arrival time and free flow.
        let dep0 = crate::interval_of(preferred_arrival - free_flow_min);
        let first = dep0.saturating_sub(half);
        let last = (dep0 + half).min(NUM_INTERVALS - 1);

        // Location -gamma/mu gives the draws exactly zero mean.
        let gumbel = Gumbel::new(-EULER_GAMMA / scale, 1.0 / scale)
            .expect("scale is positive by construction");
        let car_eps: Vec<f64> = (0..window_len).map(|_| gumbel.sample(&mut rng)).collect();
        let pt_eps = gumbel.sample(&mut rng);

        travelers.push(Traveler {
            id,
            disposable_income,
            vot,
            sde_value,
            sdl_value,
            wait_value,
            scale,
            preferred_arrival,
            dep_window: (first, last),
            car_eps,
            pt_eps,
        });
    }
    Ok(travelers)
}

/// Serialize the population as CSV, one row per traveler, fields in
/// declaration order. Float formatting is shortest-roundtrip, so a
/// dump/restore cycle is bitwise exact.
pub fn population_to_csv(travelers: &[Traveler]) -> String {
    let ncar = travelers.first().map_or(0, |t| t.car_eps.len());
    let mut out = String::new();
    out.push_str("id,disposable_income,vot,sde_value,sdl_value,wait_value,scale,preferred_arrival,dep_first,dep_last");
    for i in 0..ncar {
        out.push_str(&format!(",car_eps_{i}"));
    }
    out.push_str(",pt_eps\n");
    for t in travelers {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            t.id,
            t.disposable_income,
            t.vot,
            t.sde_value,
            t.sdl_value,
            t.wait_value,
            t.scale,
            t.preferred_arrival,
            t.dep_window.0,
            t.dep_window.1
        ));
        for e in &t.car_eps {
            out.push_str(&format!(",{e}"));
        }
        out.push_str(&format!(",{}\n", t.pt_eps));
    }
    out
}

/// Parse a population CSV produced by [`population_to_csv`].
pub fn population_from_csv(text: &str) -> Result<Vec<Traveler>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::domain("empty population csv"))?;
    let ncols = header.split(',').count();
    if ncols < 11 {
        return Err(Error::domain("population csv header too short"));
    }
    let ncar = ncols - 11;
    let mut travelers = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ncols {
            return Err(Error::domain(format!(
                "population csv line {}: expected {ncols} fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::domain(format!("population csv line {}: {e}", lineno + 2)))
        };
        let mut car_eps = Vec::with_capacity(ncar);
        for i in 0..ncar {
            car_eps.push(parse(10 + i)?);
        }
        travelers.push(Traveler {
            id: fields[0]
                .parse()
                .map_err(|e| Error::domain(format!("population csv line {}: {e}", lineno + 2)))?,
            disposable_income: parse(1)?,
            vot: parse(2)?,
            sde_value: parse(3)?,
            sdl_value: parse(4)?,
            wait_value: parse(5)?,
            scale: parse(6)?,
            preferred_arrival: parse(7)?,
            dep_window: (
                fields[8]
                    .parse()
                    .map_err(|e| Error::domain(format!("population csv line {}: {e}", lineno + 2)))?,
                fields[9]
                    .parse()
                    .map_err(|e| Error::domain(format!("population csv line {}: {e}", lineno + 2)))?,
            ),
            car_eps,
            pt_eps: parse(10 + ncar)?,
        });
    }
    Ok(travelers)
}
