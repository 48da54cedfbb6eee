//! The scenario: everything one simulation run needs.

use crate::demand::{InstrumentSpec, UtilityParams};
use crate::learning::LearningParams;
use crate::market::{Intervention, MarketParams};
use crate::population::PopulationConfig;
use crate::supply::SupplyParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Day-0 travel-time forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialTravelTimes {
    /// Free-flow travel time in every interval.
    #[default]
    FreeFlow,
    /// A constant number of minutes in every interval.
    Constant(f64),
    /// An explicit per-interval vector.
    Vector(Vec<f64>),
}

/// Day-0 wallet balances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialWallets {
    /// Uniform between zero and the full wallet, reflecting staggered entry
    /// into the program.
    #[default]
    Uniform,
    /// Everyone starts with a full wallet.
    Full,
}

/// A market intervention scheduled for a specific day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledIntervention {
    pub day: usize,
    #[serde(flatten)]
    pub window: Intervention,
}

/// Run-control parameters of the day-to-day loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    /// Maximum number of days to simulate.
    pub horizon: usize,
    /// Convergence threshold on the day-over-day infinity norm of interval
    /// travel times, minutes.
    pub convergence_eps: f64,
    /// Days in a row the norm must stay under the threshold.
    #[serde(default = "default_convergence_window")]
    pub convergence_window: usize,
    #[serde(default)]
    pub initial_travel_times: InitialTravelTimes,
    #[serde(default)]
    pub initial_wallets: InitialWallets,
    /// Days to keep simulating after convergence when events are scheduled
    /// (events are indexed relative to the first post-convergence day).
    #[serde(default)]
    pub post_convergence_days: usize,
}

fn default_convergence_window() -> usize {
    5
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            horizon: 300,
            convergence_eps: 0.01,
            convergence_window: default_convergence_window(),
            initial_travel_times: InitialTravelTimes::FreeFlow,
            initial_wallets: InitialWallets::Uniform,
            post_convergence_days: 0,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("engine.horizon", "must be >= 1"));
        }
        if self.convergence_eps <= 0.0 {
            return Err(Error::config("engine.convergence_eps", "must be positive"));
        }
        if self.convergence_window == 0 {
            return Err(Error::config("engine.convergence_window", "must be >= 1"));
        }
        Ok(())
    }
}

/// Full description of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub instrument: InstrumentSpec,
    pub population: PopulationConfig,
    pub market: MarketParams,
    pub supply: SupplyParams,
    #[serde(default)]
    pub learning: LearningParams,
    #[serde(default)]
    pub utility: UtilityParams,
    #[serde(default)]
    pub engine: EngineParams,
    /// Market interventions, indexed like capacity overrides: relative to
    /// the first post-convergence day when `post_convergence_days > 0`,
    /// absolute otherwise.
    #[serde(default)]
    pub interventions: Vec<ScheduledIntervention>,
    /// Scenario seed; drives every random stream.
    pub seed: u64,
}

impl Scenario {
    /// A base scenario for the given instrument with shipped defaults. The
    /// population seed follows the scenario seed; instrument comparisons
    /// that must share a population override `population.seed` explicitly.
    pub fn base(instrument: InstrumentSpec, seed: u64) -> Self {
        Scenario {
            instrument,
            population: PopulationConfig {
                seed,
                ..PopulationConfig::default()
            },
            market: MarketParams::default(),
            supply: SupplyParams::default(),
            learning: LearningParams::default(),
            utility: UtilityParams::default(),
            engine: EngineParams::default(),
            interventions: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.instrument.validate()?;
        self.population.validate()?;
        self.market.validate()?;
        self.supply.validate()?;
        self.learning.validate()?;
        self.engine.validate()?;
        for (i, iv) in self.interventions.iter().enumerate() {
            if iv.window.start_min >= iv.window.end_min {
                return Err(Error::config(
                    format!("interventions[{i}]"),
                    "requires start < end",
                ));
            }
        }
        // Overlap check: at most one intervention window per (day, minute).
        for (i, a) in self.interventions.iter().enumerate() {
            for b in &self.interventions[i + 1..] {
                if a.day == b.day
                    && a.window.start_min < b.window.end_min
                    && b.window.start_min < a.window.end_min
                {
                    return Err(Error::config(
                        "interventions",
                        format!("overlapping windows on day {}", a.day),
                    ));
                }
            }
        }
        Ok(())
    }
}
