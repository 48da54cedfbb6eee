//! Pre-day combined mode/departure-time choice with income effects.
//!
//! Each traveler maximizes a money-metric utility over the car alternatives
//! in their departure window plus a single PT alternative, subject to a
//! budget constraint. Token opportunity costs make the TMC instrument enter
//! through the expected cost term exactly like a dollar toll does under CP.

use crate::market::{buy_value, sell_value, MarketParams};
use crate::population::Traveler;
use crate::supply::SupplyParams;
use crate::{interval_of, interval_start, Error, IntervalId, Result};
use serde::{Deserialize, Serialize};

/// Pricing instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstrumentKind {
    /// No toll.
    NT,
    /// Congestion pricing: time-of-day toll in dollars.
    CP,
    /// Tradable mobility credits: time-of-day toll in tokens.
    TMC,
}

/// Step toll profile: five levels over six strictly increasing breakpoints,
/// zero outside `[b0, b5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TollProfile {
    pub breakpoints: [f64; 6],
    pub levels: [f64; 5],
}

impl TollProfile {
    pub fn validate(&self) -> Result<()> {
        for w in self.breakpoints.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::config(
                    "toll_profile.breakpoints",
                    "must be strictly increasing",
                ));
            }
        }
        if self.levels.iter().any(|&l| l < 0.0) {
            return Err(Error::config("toll_profile.levels", "must be >= 0"));
        }
        Ok(())
    }

    /// Toll at minute `t`.
    pub fn toll_at(&self, t: f64) -> f64 {
        if t < self.breakpoints[0] || t >= self.breakpoints[5] {
            return 0.0;
        }
        for i in (0..5).rev() {
            if t >= self.breakpoints[i] {
                return self.levels[i];
            }
        }
        0.0
    }

    /// A constant toll over `[start, end)`.
    pub fn flat(level: f64, start: f64, end: f64) -> Self {
        let span = end - start;
        let mut breakpoints = [0.0; 6];
        for (i, b) in breakpoints.iter_mut().enumerate() {
            *b = start + span * i as f64 / 5.0;
        }
        TollProfile {
            breakpoints,
            levels: [level; 5],
        }
    }
}

/// Instrument plus its toll profile (dollars for CP, tokens for TMC, absent
/// for NT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    pub kind: InstrumentKind,
    #[serde(default)]
    pub toll_profile: Option<TollProfile>,
}

impl InstrumentSpec {
    pub fn nt() -> Self {
        InstrumentSpec {
            kind: InstrumentKind::NT,
            toll_profile: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.toll_profile) {
            (InstrumentKind::NT, Some(_)) => Err(Error::config(
                "instrument.toll_profile",
                "NT does not admit a toll profile",
            )),
            (InstrumentKind::NT, None) => Ok(()),
            (_, Some(p)) => p.validate(),
            (_, None) => Err(Error::config(
                "instrument.toll_profile",
                "CP/TMC require a toll profile",
            )),
        }
    }

    /// Toll at minute `t` (dollars under CP, tokens under TMC).
    pub fn toll_at(&self, t: f64) -> f64 {
        self.toll_profile.as_ref().map_or(0.0, |p| p.toll_at(t))
    }
}

/// Travel mode of an alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Car,
    Pt,
}

/// One alternative of the pre-day choice, with forecasted attributes.
#[derive(Debug, Clone)]
pub struct AlternativeAttributes {
    pub mode: Mode,
    pub interval: IntervalId,
    /// Forecasted travel time, minutes.
    pub forecast_tt: f64,
    /// Schedule delay early, minutes.
    pub sde: f64,
    /// Schedule delay late, minutes.
    pub sdl: f64,
    /// Expected one-way cost, dollars.
    pub expected_cost: f64,
    pub feasible: bool,
}

/// Schedule delays for departing at the start of interval `h` with
/// forecasted travel time `tt`, against a desired arrival window of
/// half-width `delta_a` around `preferred_arrival`.
pub fn schedule_delays(
    h: IntervalId,
    preferred_arrival: f64,
    tt: f64,
    delta_a: f64,
) -> (f64, f64) {
    let arrival = interval_start(h) + tt;
    let sde = (preferred_arrival - delta_a - arrival).max(0.0);
    let sdl = (arrival - preferred_arrival - delta_a).max(0.0);
    (sde, sdl)
}

/// Expected opportunity cost of tokens for a car departure: the foregone
/// revenue of selling the day's allocation net of the toll, plus any forced
/// purchase.
pub fn opportunity_cost(
    forecast_balance: f64,
    toll_tokens: f64,
    price: f64,
    params: &MarketParams,
) -> f64 {
    let full = params.full_wallet();
    if forecast_balance >= toll_tokens {
        -sell_value(full - toll_tokens, price, params)
    } else {
        -sell_value(full - forecast_balance, price, params)
            + buy_value(toll_tokens - forecast_balance, price, params)
    }
}

/// Opportunity cost of the PT alternative: PT riders sell the whole
/// allocation.
pub fn pt_opportunity_cost(price: f64, params: &MarketParams) -> f64 {
    -sell_value(params.full_wallet(), price, params)
}

/// Income-effect parameters of the systematic utility.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityParams {
    /// Coefficient of the nonlinear income effect.
    pub lambda: f64,
    /// Income-effect adjustment inside the logarithm.
    pub gamma: f64,
    /// Half-width of the desired arrival window, minutes.
    #[serde(default)]
    pub delta_a: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams {
            lambda: 3.0,
            gamma: 2.0,
            delta_a: 0.0,
        }
    }
}

/// Systematic money-metric utility of a car alternative (without the random
/// component).
///
/// Errors when the remaining income leaves the log domain, which signals a
/// choice-set bug: infeasible alternatives must be filtered beforehand.
pub fn car_utility(
    traveler: &Traveler,
    alt: &AlternativeAttributes,
    params: &UtilityParams,
) -> Result<f64> {
    let remaining = traveler.disposable_income - 2.0 * alt.expected_cost;
    let log_arg = params.gamma + remaining;
    if log_arg <= 0.0 {
        return Err(Error::domain(format!(
            "car utility log domain violated for traveler {} (remaining {remaining}); \
             the alternative should have been filtered as infeasible",
            traveler.id
        )));
    }
    Ok(-2.0 * traveler.vot * alt.forecast_tt
        - traveler.sde_value * alt.sde
        - traveler.sdl_value * alt.sdl
        + remaining
        + params.lambda * log_arg.ln())
}

/// Systematic money-metric utility of the PT alternative.
pub fn pt_utility(
    traveler: &Traveler,
    expected_cost: f64,
    supply: &SupplyParams,
    params: &UtilityParams,
) -> Result<f64> {
    let remaining = traveler.disposable_income - 2.0 * expected_cost;
    let log_arg = params.gamma + remaining;
    if log_arg <= 0.0 {
        return Err(Error::domain(format!(
            "pt utility log domain violated for traveler {} (remaining {remaining})",
            traveler.id
        )));
    }
    Ok(-2.0 * traveler.vot * supply.pt_travel_time - 2.0 * traveler.wait_value * supply.pt_wait
        + remaining
        + params.lambda * log_arg.ln())
}

/// PT departure interval: the one whose arrival lands closest to the
/// preferred arrival time.
pub fn pt_interval(traveler: &Traveler, supply: &SupplyParams) -> IntervalId {
    interval_of((traveler.preferred_arrival - supply.pt_travel_time).floor())
}

/// Market quantities the choice model needs for the TMC instrument.
pub struct TokenCostInputs<'a> {
    pub price: f64,
    pub params: &'a MarketParams,
    /// Forecast balance at the start of each interval (full-day grid).
    pub forecast_balance: &'a [f64],
}

/// Expected one-way cost of a car departure in interval `h`.
pub fn car_expected_cost(
    h: IntervalId,
    instrument: &InstrumentSpec,
    supply: &SupplyParams,
    tokens: Option<&TokenCostInputs>,
) -> f64 {
    let t_h = interval_start(h);
    match instrument.kind {
        InstrumentKind::NT => supply.car_operating_cost,
        InstrumentKind::CP => instrument.toll_at(t_h) + supply.car_operating_cost,
        InstrumentKind::TMC => {
            let tok = tokens.expect("TMC requires token cost inputs");
            let toll = instrument.toll_at(t_h);
            opportunity_cost(tok.forecast_balance[h], toll, tok.price, tok.params)
                + supply.car_operating_cost
        }
    }
}

/// Expected one-way cost of the PT alternative.
pub fn pt_expected_cost(
    instrument: &InstrumentSpec,
    supply: &SupplyParams,
    tokens: Option<&TokenCostInputs>,
) -> f64 {
    match instrument.kind {
        InstrumentKind::NT | InstrumentKind::CP => supply.pt_fare,
        InstrumentKind::TMC => {
            let tok = tokens.expect("TMC requires token cost inputs");
            pt_opportunity_cost(tok.price, tok.params) + supply.pt_fare
        }
    }
}

/// Build the feasible choice set of one traveler.
///
/// Car alternatives are limited to the traveler's departure window and kept
/// only when affordable (`I_n - 2c >= 0`, which also guarantees the log
/// domain since gamma > 0). PT is always included; a PT budget violation is
/// reported through its `feasible` flag.
pub fn build_choice_set(
    traveler: &Traveler,
    instrument: &InstrumentSpec,
    supply: &SupplyParams,
    utility: &UtilityParams,
    tokens: Option<&TokenCostInputs>,
    tt_forecast: &[f64],
) -> Result<Vec<AlternativeAttributes>> {
    let mut alts = Vec::with_capacity(traveler.car_eps.len() + 1);
    for h in traveler.dep_window.0..=traveler.dep_window.1 {
        let tt = tt_forecast[h];
        let (sde, sdl) = schedule_delays(h, traveler.preferred_arrival, tt, utility.delta_a);
        let cost = car_expected_cost(h, instrument, supply, tokens);
        let feasible = traveler.disposable_income - 2.0 * cost >= 0.0;
        alts.push(AlternativeAttributes {
            mode: Mode::Car,
            interval: h,
            forecast_tt: tt,
            sde,
            sdl,
            expected_cost: cost,
            feasible,
        });
    }
    let pt_cost = pt_expected_cost(instrument, supply, tokens);
    alts.push(AlternativeAttributes {
        mode: Mode::Pt,
        interval: pt_interval(traveler, supply),
        forecast_tt: supply.pt_travel_time,
        sde: 0.0,
        sdl: 0.0,
        expected_cost: pt_cost,
        feasible: traveler.disposable_income - 2.0 * pt_cost >= 0.0,
    });
    if !alts.iter().any(|a| a.feasible) {
        return Err(Error::scenario(format!(
            "traveler {} has an empty feasible choice set (population/toll mismatch)",
            traveler.id
        )));
    }
    Ok(alts)
}

/// A resolved mobility decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub mode: Mode,
    pub interval: IntervalId,
    /// Systematic utility of the chosen alternative.
    pub systematic_utility: f64,
    /// Frozen random draw of the chosen alternative.
    pub epsilon: f64,
}

/// Argmax of systematic utility plus the traveler's frozen draw over the
/// feasible alternatives. Deterministic given the population seed.
pub fn choose(
    traveler: &Traveler,
    choice_set: &[AlternativeAttributes],
    utility: &UtilityParams,
    supply: &SupplyParams,
) -> Result<Decision> {
    let mut best: Option<Decision> = None;
    for alt in choice_set.iter().filter(|a| a.feasible) {
        let (v, eps) = match alt.mode {
            Mode::Car => {
                let slot = traveler
                    .window_slot(alt.interval)
                    .ok_or_else(|| Error::domain("car alternative outside departure window"))?;
                (car_utility(traveler, alt, utility)?, traveler.car_eps(slot))
            }
            Mode::Pt => (
                pt_utility(traveler, alt.expected_cost, supply, utility)?,
                traveler.pt_eps,
            ),
        };
        let total = v + eps;
        let better = match &best {
            None => true,
            Some(b) => total > b.systematic_utility + b.epsilon,
        };
        if better {
            best = Some(Decision {
                mode: alt.mode,
                interval: alt.interval,
                systematic_utility: v,
                epsilon: eps,
            });
        }
    }
    best.ok_or_else(|| Error::scenario("empty feasible choice set"))
}
