//! Within-day simulation (trading plus travel) and the day-to-day loop to
//! equilibrium, including event and intervention machinery.
//!
//! One run is single-threaded and fully determined by `(scenario, seed)`;
//! parallelism belongs one level up (across seeds, DE candidates, scenario
//! grids).

use crate::demand::{
    build_choice_set, choose, Decision, InstrumentKind, Mode, TokenCostInputs,
};
use crate::learning::{forecast_balance, smooth, smooth_vec};
use crate::market::{
    accrual_between, buy_value, sell_value, AllocationMode, Intervention, MarketParams,
    MarketState, SellDecision, Wallet,
};
use crate::population::{synthesize_population, Traveler};
use crate::rng::{stream_rng, Stream};
use crate::scenario::{InitialTravelTimes, InitialWallets, Scenario};
use crate::supply::{interval_travel_times, QueueState};
use crate::{
    interval_start, Error, Result, DAY_MINUTES, FULL_DAY_MINUTES, INTERVAL_MINUTES, NUM_INTERVALS,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Kind of a logged token trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Buy,
    Sell,
}

/// One token trade between a traveler and the regulator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Transaction {
    pub day: usize,
    pub minute: u32,
    pub traveler: usize,
    pub kind: TxKind,
    pub tokens: f64,
    pub dollars: f64,
}

/// Everything observed on one simulated day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayResult {
    pub day: usize,
    /// Pre-day decision per traveler (after any mid-day replanning).
    pub decisions: Vec<Decision>,
    /// Actual departure minute per traveler.
    pub dep_minute: Vec<u32>,
    /// Realized one-way travel time per traveler, minutes.
    pub realized_tt: Vec<f64>,
    /// Mean realized car travel time per interval (free flow if empty).
    pub interval_tt: Vec<f64>,
    /// Queue length at each minute.
    pub queue_series: Vec<u32>,
    pub transactions: Vec<Transaction>,
    /// Net token revenue of the regulator (buys minus sells), dollars.
    pub token_revenue: f64,
    /// PT fares collected, dollars.
    pub fare_revenue: f64,
    /// CP tolls collected, dollars.
    pub toll_revenue: f64,
    /// Token price of the day.
    pub price: f64,
    /// Travelers forced onto PT by a mid-day affordability shortfall.
    pub forced_pt: Vec<usize>,
    /// Car departures per interval.
    pub car_departures: Vec<u32>,
    /// PT departures per interval.
    pub pt_departures: Vec<u32>,
    /// Realized mode per traveler (decisions adjusted for forced PT).
    pub realized_mode: Vec<Mode>,
    /// Realized token toll paid per traveler (TMC), tokens.
    pub tokens_spent: Vec<f64>,
    /// Wallet balance at departure (after accrual, before payment), tokens.
    pub balance_at_departure: Vec<f64>,
}

/// Mutable cross-day state of one simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub travelers: Vec<Traveler>,
    pub wallets: Vec<f64>,
    pub jitter_offset: Vec<u32>,
    pub tt_forecast: Vec<f64>,
    pub dep_forecast: Vec<f64>,
    pub market: MarketState,
    pub day: usize,
}

impl SimState {
    /// Initial state for a scenario: population, frozen jitter, wallets and
    /// day-0 forecasts.
    pub fn init(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let travelers = synthesize_population(&scenario.population, scenario.supply.free_flow)?;
        let n = travelers.len();

        let mut jitter_rng = stream_rng(scenario.seed, Stream::DepartureJitter);
        let jitter_offset: Vec<u32> = (0..n)
            .map(|_| jitter_rng.random_range(0..INTERVAL_MINUTES))
            .collect();

        let full = scenario.market.full_wallet();
        let mut wallet_rng = stream_rng(scenario.seed, Stream::InitialWallets);
        let mut wallets: Vec<f64> = match scenario.engine.initial_wallets {
            InitialWallets::Uniform => (0..n)
                .map(|_| wallet_rng.random_range(0.0..=full))
                .collect(),
            InitialWallets::Full => vec![full; n],
        };
        // Under lump-sum allocation the endowment is credited daily at
        // minute 0; days start from an empty account.
        if scenario.market.allocation_mode == AllocationMode::LumpSum {
            wallets.iter_mut().for_each(|w| *w = 0.0);
        }

        let tt_forecast = match &scenario.engine.initial_travel_times {
            InitialTravelTimes::FreeFlow => vec![scenario.supply.free_flow; NUM_INTERVALS],
            InitialTravelTimes::Constant(c) => vec![*c; NUM_INTERVALS],
            InitialTravelTimes::Vector(v) => {
                if v.len() != NUM_INTERVALS {
                    return Err(Error::config(
                        "engine.initial_travel_times",
                        format!("vector must have {NUM_INTERVALS} entries"),
                    ));
                }
                v.clone()
            }
        };

        let dep_forecast: Vec<f64> = travelers
            .iter()
            .map(|t| {
                let h0 = crate::interval_of(t.preferred_arrival - scenario.supply.free_flow);
                interval_start(h0) + INTERVAL_MINUTES as f64 / 2.0
            })
            .collect();

        Ok(SimState {
            travelers,
            wallets,
            jitter_offset,
            tt_forecast,
            dep_forecast,
            market: MarketState::new(scenario.market.initial_price),
            day: 0,
        })
    }
}

/// Events resolved for a single day.
#[derive(Debug, Clone, Default)]
pub struct DayEvents {
    /// (start, end, factor) capacity windows active today.
    pub capacity: Vec<(f64, f64, f64)>,
    /// Market intervention active today.
    pub intervention: Option<Intervention>,
}

impl DayEvents {
    fn capacity_at(&self, minute: f64, base: f64) -> f64 {
        let mut cap = base;
        for &(start, end, factor) in &self.capacity {
            if minute >= start && minute < end {
                cap *= factor;
            }
        }
        cap
    }
}

/// Supremum-norm distance between two travel-time vectors.
pub fn infinity_norm(prev: &[f64], curr: &[f64]) -> Result<f64> {
    if prev.len() != curr.len() {
        return Err(Error::domain("travel-time vectors differ in length"));
    }
    Ok(prev
        .iter()
        .zip(curr)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Market parameters with intervention fee overrides applied.
fn effective_params(base: &MarketParams, iv: Option<&Intervention>, minute: f64) -> MarketParams {
    match iv {
        Some(iv) if iv.contains(minute) => {
            let mut p = base.clone();
            if let Some(rate) = iv.override_rate {
                p.allocation_rate = rate;
            }
            if let Some(fee) = iv.override_fee_fixed {
                p.fee_fixed_sell = fee;
                p.fee_fixed_buy = fee;
            }
            p
        }
        _ => base.clone(),
    }
}

fn effective_price(base_price: f64, iv: Option<&Intervention>, minute: f64) -> f64 {
    match iv {
        Some(iv) if iv.contains(minute) => iv.override_price.unwrap_or(base_price),
        _ => base_price,
    }
}

/// Forecast balances at interval starts, replayed with awareness of an
/// intervention from `from_min` onwards (used for mid-day replanning).
#[allow(clippy::too_many_arguments)]
fn forecast_balance_with_intervention(
    start_balance: f64,
    from_min: u32,
    dep_minute: u32,
    toll_at_dep: f64,
    base_price: f64,
    params: &MarketParams,
    iv: &Intervention,
) -> Result<Vec<f64>> {
    // Intervals already begun read the current balance.
    let mut out = vec![start_balance; NUM_INTERVALS];
    let mut wallet = Wallet::new(0, start_balance);
    for t in from_min..DAY_MINUTES {
        let minute = t as f64;
        if t % INTERVAL_MINUTES == 0 {
            out[(t / INTERVAL_MINUTES) as usize] = wallet.balance;
        }
        let p = effective_params(params, Some(iv), minute);
        let price = effective_price(base_price, Some(iv), minute);
        let action = if t == dep_minute {
            crate::market::Action::Travel {
                toll_tokens: toll_at_dep,
            }
        } else {
            let (next_dep, next_toll) = if t < dep_minute {
                (dep_minute as f64, toll_at_dep)
            } else {
                (dep_minute as f64 + FULL_DAY_MINUTES as f64, toll_at_dep)
            };
            let full = params.full_wallet();
            let expected = accrual_between(minute, next_dep, params, Some(iv)).min(full);
            let expected_next =
                accrual_between((minute + 1.0).min(next_dep), next_dep, params, Some(iv)).min(full);
            match crate::market::selling_rule_given_expected(
                wallet.balance,
                expected,
                expected_next,
                next_toll,
                price,
                &p,
            ) {
                SellDecision::SellNow => crate::market::Action::SellAll,
                SellDecision::Hold => crate::market::Action::Idle,
            }
        };
        wallet = crate::market::step_account(wallet, action, &p, 1.0)?.wallet;
    }
    Ok(out)
}

/// Run the pre-day choice for every traveler.
fn pre_day_choices(state: &SimState, scenario: &Scenario) -> Result<Vec<Decision>> {
    let is_tmc = scenario.instrument.kind == InstrumentKind::TMC;
    let n = state.travelers.len();
    let mut decisions = Vec::with_capacity(n);
    let mut balance_grid = vec![0.0; NUM_INTERVALS];
    for (i, traveler) in state.travelers.iter().enumerate() {
        let tokens = if is_tmc {
            let dep_fc = state.dep_forecast[i].clamp(0.0, (DAY_MINUTES - 1) as f64);
            let toll_fc = scenario.instrument.toll_at(dep_fc.round());
            let traj = forecast_balance(
                state.wallets[i],
                dep_fc,
                toll_fc,
                state.market.price,
                &scenario.market,
            )?;
            for h in 0..NUM_INTERVALS {
                balance_grid[h] = traj[h * INTERVAL_MINUTES as usize];
            }
            Some(TokenCostInputs {
                price: state.market.price,
                params: &scenario.market,
                forecast_balance: &balance_grid,
            })
        } else {
            None
        };
        let alts = build_choice_set(
            traveler,
            &scenario.instrument,
            &scenario.supply,
            &scenario.utility,
            tokens.as_ref(),
            &state.tt_forecast,
        )?;
        decisions.push(choose(traveler, &alts, &scenario.utility, &scenario.supply)?);
    }
    Ok(decisions)
}

/// Re-run the choice for travelers that have not departed when an
/// intervention is announced; sunk decisions stand.
#[allow(clippy::too_many_arguments)]
fn replan_at_intervention(
    state: &SimState,
    scenario: &Scenario,
    iv: &Intervention,
    now: u32,
    decisions: &mut [Decision],
    dep_minute: &mut [u32],
    departed: &[bool],
) -> Result<()> {
    let is_tmc = scenario.instrument.kind == InstrumentKind::TMC;
    let mut balance_grid = vec![0.0; NUM_INTERVALS];
    for (i, traveler) in state.travelers.iter().enumerate() {
        if departed[i] {
            continue;
        }
        if is_tmc {
            let dep_fc = state.dep_forecast[i].clamp(0.0, (DAY_MINUTES - 1) as f64);
            let toll_fc = scenario.instrument.toll_at(dep_fc.round());
            balance_grid = forecast_balance_with_intervention(
                state.wallets[i],
                now,
                dep_fc.round() as u32,
                toll_fc,
                state.market.price,
                &scenario.market,
                iv,
            )?;
        }

        // Candidate car intervals must still be departable.
        let offset = state.jitter_offset[i];
        let mut best: Option<Decision> = None;
        for h in traveler.dep_window.0..=traveler.dep_window.1 {
            let dep = h as u32 * INTERVAL_MINUTES + offset;
            if dep < now {
                continue;
            }
            let t_h = interval_start(h);
            let price_h = effective_price(state.market.price, Some(iv), t_h);
            let params_h = effective_params(&scenario.market, Some(iv), t_h);
            let cost = match scenario.instrument.kind {
                InstrumentKind::NT => scenario.supply.car_operating_cost,
                InstrumentKind::CP => {
                    scenario.instrument.toll_at(t_h) + scenario.supply.car_operating_cost
                }
                InstrumentKind::TMC => {
                    let toll = scenario.instrument.toll_at(t_h);
                    crate::demand::opportunity_cost(balance_grid[h], toll, price_h, &params_h)
                        + scenario.supply.car_operating_cost
                }
            };
            if traveler.disposable_income - 2.0 * cost < 0.0 {
                continue;
            }
            let tt = state.tt_forecast[h];
            let (sde, sdl) = crate::demand::schedule_delays(
                h,
                traveler.preferred_arrival,
                tt,
                scenario.utility.delta_a,
            );
            let alt = crate::demand::AlternativeAttributes {
                mode: Mode::Car,
                interval: h,
                forecast_tt: tt,
                sde,
                sdl,
                expected_cost: cost,
                feasible: true,
            };
            let v = crate::demand::car_utility(traveler, &alt, &scenario.utility)?;
            let eps = traveler.car_eps(traveler.window_slot(h).unwrap());
            if best
                .as_ref()
                .map_or(true, |b| v + eps > b.systematic_utility + b.epsilon)
            {
                best = Some(Decision {
                    mode: Mode::Car,
                    interval: h,
                    systematic_utility: v,
                    epsilon: eps,
                });
            }
        }
        // PT stays available; if its normal slot has passed it departs at the
        // next interval.
        let pt_h = crate::demand::pt_interval(traveler, &scenario.supply)
            .max(crate::interval_of(now as f64) + 1)
            .min(NUM_INTERVALS - 1);
        let pt_price = effective_price(state.market.price, Some(iv), interval_start(pt_h));
        let pt_params = effective_params(&scenario.market, Some(iv), interval_start(pt_h));
        let pt_cost = match scenario.instrument.kind {
            InstrumentKind::TMC => {
                crate::demand::pt_opportunity_cost(pt_price, &pt_params) + scenario.supply.pt_fare
            }
            _ => scenario.supply.pt_fare,
        };
        if traveler.disposable_income - 2.0 * pt_cost >= 0.0 || best.is_none() {
            let v = crate::demand::pt_utility(
                traveler,
                pt_cost,
                &scenario.supply,
                &scenario.utility,
            )?;
            if best
                .as_ref()
                .map_or(true, |b| v + traveler.pt_eps > b.systematic_utility + b.epsilon)
            {
                best = Some(Decision {
                    mode: Mode::Pt,
                    interval: pt_h,
                    systematic_utility: v,
                    epsilon: traveler.pt_eps,
                });
            }
        }
        let new = best.ok_or_else(|| {
            Error::scenario(format!("traveler {i} has no feasible replanning option"))
        })?;
        if (new.mode, new.interval) != (decisions[i].mode, decisions[i].interval) {
            decisions[i] = new;
            dep_minute[i] = new.interval as u32 * INTERVAL_MINUTES + offset;
        }
    }
    Ok(())
}

/// Simulate one day: pre-day choices, then the minute loop of trading,
/// departures and queue service.
pub fn run_day(state: &mut SimState, scenario: &Scenario, events: &DayEvents) -> Result<DayResult> {
    let n = state.travelers.len();
    let is_tmc = scenario.instrument.kind == InstrumentKind::TMC;
    let lump = scenario.market.allocation_mode == AllocationMode::LumpSum;
    state.market.intervention = events.intervention.clone();

    let mut decisions = pre_day_choices(state, scenario)?;

    // Departure minutes: interval start plus the traveler's frozen offset.
    let mut dep_minute: Vec<u32> = (0..n)
        .map(|i| decisions[i].interval as u32 * INTERVAL_MINUTES + state.jitter_offset[i])
        .collect();
    // Planned toll in tokens at the departure minute (TMC only).
    let mut plan_toll: Vec<f64> = if is_tmc {
        (0..n)
            .map(|i| scenario.instrument.toll_at(dep_minute[i] as f64))
            .collect()
    } else {
        vec![0.0; n]
    };
    // Toll at tomorrow's forecast departure, for post-trip selling.
    let fc_toll: Vec<f64> = if is_tmc {
        (0..n)
            .map(|i| scenario.instrument.toll_at(state.dep_forecast[i].round()))
            .collect()
    } else {
        vec![0.0; n]
    };

    let mut departed = vec![false; n];
    let mut queue = QueueState::new();
    let mut realized_tt = vec![0.0; n];
    let mut tokens_spent = vec![0.0; n];
    let mut balance_at_departure = vec![0.0; n];
    let mut realized_mode: Vec<Mode> = decisions.iter().map(|d| d.mode).collect();
    let mut forced_pt = Vec::new();
    let mut transactions = Vec::new();
    let mut queue_series = Vec::with_capacity(DAY_MINUTES as usize);
    let mut per_interval_tt: Vec<Vec<f64>> = vec![Vec::new(); NUM_INTERVALS];
    let mut fare_revenue = 0.0;
    let mut toll_revenue = 0.0;
    let mut token_revenue = 0.0;

    // Lump-sum endowment is credited at minute 0.
    if is_tmc && lump {
        let endowment = scenario.market.full_wallet();
        for w in state.wallets.iter_mut() {
            *w += endowment;
        }
    }

    let mut entrants: Vec<usize> = Vec::new();
    for t in 0..DAY_MINUTES {
        let minute = t as f64;
        let iv = events.intervention.as_ref();
        let intervention_active = iv.is_some_and(|w| w.contains(minute));

        // Announcement: travelers that have not departed re-evaluate.
        if let Some(iv) = iv {
            if t == iv.start_min.max(0.0) as u32 {
                replan_at_intervention(
                    state,
                    scenario,
                    iv,
                    t,
                    &mut decisions,
                    &mut dep_minute,
                    &departed,
                )?;
                for i in 0..n {
                    realized_mode[i] = decisions[i].mode;
                    if is_tmc && !departed[i] {
                        plan_toll[i] = scenario.instrument.toll_at(dep_minute[i] as f64);
                    }
                }
            }
        }

        let params_now = if intervention_active {
            effective_params(&scenario.market, iv, minute)
        } else {
            scenario.market.clone()
        };
        let price_now = effective_price(state.market.price, iv, minute);
        let capacity = events.capacity_at(minute, scenario.supply.capacity);

        entrants.clear();
        for i in 0..n {
            let departing = dep_minute[i] == t && !departed[i];
            if departing {
                departed[i] = true;
                match (decisions[i].mode, is_tmc) {
                    (Mode::Car, true) => {
                        let toll = plan_toll[i];
                        let x = state.wallets[i];
                        balance_at_departure[i] = x;
                        // Affordability of a forced purchase; shortfalls can
                        // only arise under interventions.
                        let realized_cost = crate::demand::opportunity_cost(
                            x,
                            toll,
                            price_now,
                            &params_now,
                        ) + scenario.supply.car_operating_cost;
                        if traveler_cannot_afford(state, i, realized_cost) {
                            forced_pt.push(i);
                            realized_mode[i] = Mode::Pt;
                            fare_revenue += scenario.supply.pt_fare;
                            realized_tt[i] =
                                scenario.supply.pt_travel_time;
                            let out = crate::market::step_account(
                                Wallet::new(i, x),
                                crate::market::Action::Idle,
                                &params_now,
                                1.0,
                            )?;
                            state.wallets[i] = out.wallet.balance;
                            continue;
                        }
                        let out = crate::market::step_account(
                            Wallet::new(i, x),
                            crate::market::Action::Travel { toll_tokens: toll },
                            &params_now,
                            1.0,
                        )?;
                        state.wallets[i] = out.wallet.balance;
                        tokens_spent[i] = toll;
                        if out.tokens_bought > 0.0 {
                            let dollars = buy_value(out.tokens_bought, price_now, &params_now);
                            token_revenue += dollars;
                            transactions.push(Transaction {
                                day: state.day,
                                minute: t,
                                traveler: i,
                                kind: TxKind::Buy,
                                tokens: out.tokens_bought,
                                dollars,
                            });
                        }
                        entrants.push(i);
                    }
                    (Mode::Car, false) => {
                        if scenario.instrument.kind == InstrumentKind::CP {
                            toll_revenue += scenario.instrument.toll_at(minute);
                        }
                        entrants.push(i);
                    }
                    (Mode::Pt, tmc) => {
                        fare_revenue += scenario.supply.pt_fare;
                        realized_tt[i] = scenario.supply.pt_travel_time;
                        if tmc {
                            // The wallet still accrues this minute.
                            let out = crate::market::step_account(
                                Wallet::new(i, state.wallets[i]),
                                crate::market::Action::Idle,
                                &params_now,
                                1.0,
                            )?;
                            state.wallets[i] = out.wallet.balance;
                        }
                    }
                }
            } else if is_tmc && !lump {
                // Trading step for everyone not traveling this minute.
                let x = state.wallets[i];
                let (next_dep, next_toll) = if !departed[i] && decisions[i].mode == Mode::Car {
                    (dep_minute[i] as f64, plan_toll[i])
                } else {
                    (
                        state.dep_forecast[i] + FULL_DAY_MINUTES as f64,
                        fc_toll[i],
                    )
                };
                // Expected balance at the next departure integrates any
                // rate override active later today.
                let full = scenario.market.full_wallet();
                let expected =
                    accrual_between(minute, next_dep, &scenario.market, iv).min(full);
                let expected_next = accrual_between((minute + 1.0).min(next_dep), next_dep, &scenario.market, iv)
                    .min(full);
                let decision = crate::market::selling_rule_given_expected(
                    x,
                    expected,
                    expected_next,
                    next_toll,
                    price_now,
                    &params_now,
                );
                let action = match decision {
                    SellDecision::SellNow => crate::market::Action::SellAll,
                    SellDecision::Hold => crate::market::Action::Idle,
                };
                let out =
                    crate::market::step_account(Wallet::new(i, x), action, &params_now, 1.0)?;
                state.wallets[i] = out.wallet.balance;
                if out.tokens_sold > 0.0 {
                    let dollars = sell_value(out.tokens_sold, price_now, &params_now);
                    token_revenue -= dollars;
                    transactions.push(Transaction {
                        day: state.day,
                        minute: t,
                        traveler: i,
                        kind: TxKind::Sell,
                        tokens: out.tokens_sold,
                        dollars,
                    });
                }
            }
        }

        let delays = queue.enqueue(&entrants, capacity);
        for (&i, &d) in entrants.iter().zip(&delays) {
            let tt = d + scenario.supply.free_flow;
            realized_tt[i] = tt;
            per_interval_tt[decisions[i].interval].push(tt);
        }
        queue.serve_minute(capacity);
        queue_series.push(queue.queue_len() as u32);
    }

    // Lump-sum: automatic fee-free redemption of the unsold remainder.
    if is_tmc && lump {
        for i in 0..n {
            let rest = state.wallets[i];
            if rest > 0.0 {
                let dollars = rest * state.market.price;
                token_revenue -= dollars;
                transactions.push(Transaction {
                    day: state.day,
                    minute: DAY_MINUTES - 1,
                    traveler: i,
                    kind: TxKind::Sell,
                    tokens: rest,
                    dollars,
                });
                state.wallets[i] = 0.0;
            }
        }
    }

    let interval_tt = interval_travel_times(&per_interval_tt, scenario.supply.free_flow);
    let mut car_departures = vec![0u32; NUM_INTERVALS];
    let mut pt_departures = vec![0u32; NUM_INTERVALS];
    for i in 0..n {
        match realized_mode[i] {
            Mode::Car => car_departures[decisions[i].interval] += 1,
            Mode::Pt => pt_departures[decisions[i].interval] += 1,
        }
    }

    state.market.token_revenue_ledger = token_revenue;
    Ok(DayResult {
        day: state.day,
        decisions,
        dep_minute,
        realized_tt,
        interval_tt,
        queue_series,
        transactions,
        token_revenue,
        fare_revenue,
        toll_revenue,
        price: state.market.price,
        forced_pt,
        car_departures,
        pt_departures,
        realized_mode,
        tokens_spent,
        balance_at_departure,
    })
}

fn traveler_cannot_afford(state: &SimState, i: usize, realized_cost: f64) -> bool {
    state.travelers[i].disposable_income - 2.0 * realized_cost < 0.0
}

/// Outcome of a day-to-day run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub converged: bool,
    pub days_run: usize,
    /// Day on which the convergence window completed.
    pub convergence_day: Option<usize>,
    /// Day-over-day infinity norms of the learned travel-time vector,
    /// entry `d` measuring the forecast update after day `d`.
    pub norm_trajectory: Vec<f64>,
    pub price_trajectory: Vec<f64>,
    pub token_revenue_trajectory: Vec<f64>,
    /// Realized interval travel times of the final day.
    pub final_interval_tt: Vec<f64>,
    /// Learned travel-time forecast after the final day.
    pub final_tt_forecast: Vec<f64>,
    /// The last `convergence_window` days, for averaged welfare reporting.
    pub window: Vec<DayResult>,
    /// Post-convergence days with events active (empty unless configured).
    pub post_days: Vec<DayResult>,
}

impl EquilibriumResult {
    pub fn final_day(&self) -> &DayResult {
        self.post_days.last().unwrap_or_else(|| {
            self.window
                .last()
                .expect("equilibrium result holds at least one day")
        })
    }
}

/// Register a capacity event on a scenario, validating its window.
pub fn inject_capacity_event(
    scenario: &Scenario,
    event: crate::supply::CapacityOverride,
) -> Result<Scenario> {
    if event.start_min >= event.end_min || event.end_min > DAY_MINUTES as f64 {
        return Err(Error::config(
            "event.window",
            "requires start < end within the day",
        ));
    }
    let mut out = scenario.clone();
    out.supply.capacity_overrides.push(event);
    out.validate()?;
    Ok(out)
}

/// Register a market intervention on a scenario, validating its window.
pub fn inject_intervention(
    scenario: &Scenario,
    event: crate::scenario::ScheduledIntervention,
) -> Result<Scenario> {
    if event.window.start_min >= event.window.end_min
        || event.window.end_min > DAY_MINUTES as f64
    {
        return Err(Error::config(
            "intervention.window",
            "requires start < end within the day",
        ));
    }
    let mut out = scenario.clone();
    out.interventions.push(event);
    out.validate()?;
    Ok(out)
}

fn events_for_day(scenario: &Scenario, day: usize, active: bool) -> DayEvents {
    if !active {
        return DayEvents::default();
    }
    let capacity = scenario
        .supply
        .capacity_overrides
        .iter()
        .filter(|ov| ov.day == day)
        .map(|ov| (ov.start_min, ov.end_min, ov.factor))
        .collect();
    let intervention = scenario
        .interventions
        .iter()
        .find(|iv| iv.day == day)
        .map(|iv| iv.window.clone());
    DayEvents {
        capacity,
        intervention,
    }
}

/// Iterate days until the infinity norm stays under the threshold for the
/// configured number of consecutive days, or the horizon runs out.
///
/// When `post_convergence_days > 0`, the equilibrium phase runs without
/// events; afterwards the configured number of extra days runs with events
/// looked up by their day index relative to the first post-convergence day
/// (day 1 is the first). Without a post phase, events apply at absolute day
/// indices.
pub fn run_to_equilibrium(scenario: &Scenario) -> Result<EquilibriumResult> {
    let mut state = SimState::init(scenario)?;
    let has_post = scenario.engine.post_convergence_days > 0;
    let window_size = scenario.engine.convergence_window;

    let mut norm_trajectory = Vec::new();
    let mut price_trajectory = Vec::new();
    let mut revenue_trajectory = Vec::new();
    let mut window: Vec<DayResult> = Vec::new();
    let mut consecutive = 0usize;
    let mut converged = false;
    let mut convergence_day = None;

    for day in 0..scenario.engine.horizon {
        let events = events_for_day(scenario, day, !has_post);
        let result = run_day(&mut state, scenario, &events)?;
        price_trajectory.push(result.price);
        revenue_trajectory.push(result.token_revenue);

        // The convergence norm tracks the day-to-day state: the learned
        // travel-time vector. Realized interval means carry a one-vehicle
        // quantization floor, so they are compared through the filter.
        let forecast_before = state.tt_forecast.clone();
        end_of_day_updates(&mut state, scenario, &result)?;
        let norm = infinity_norm(&forecast_before, &state.tt_forecast)?;
        norm_trajectory.push(norm);
        // Under TMC the market must be at rest too: a day counts as
        // converged only when the token ledger stays inside the dead band
        // (the price will not move).
        let market_at_rest = scenario.instrument.kind != InstrumentKind::TMC
            || result.token_revenue.abs() <= scenario.market.revenue_threshold;
        if norm <= scenario.engine.convergence_eps && market_at_rest {
            consecutive += 1;
        } else {
            consecutive = 0;
        }

        window.push(result);
        if window.len() > window_size {
            window.remove(0);
        }

        if consecutive >= window_size {
            converged = true;
            convergence_day = Some(day);
            break;
        }
    }

    let days_run = price_trajectory.len();
    let mut post_days = Vec::new();
    if has_post {
        for post_day in 1..=scenario.engine.post_convergence_days {
            let events = events_for_day(scenario, post_day, true);
            let result = run_day(&mut state, scenario, &events)?;
            price_trajectory.push(result.price);
            revenue_trajectory.push(result.token_revenue);
            let forecast_before = state.tt_forecast.clone();
            end_of_day_updates(&mut state, scenario, &result)?;
            norm_trajectory.push(infinity_norm(&forecast_before, &state.tt_forecast)?);
            post_days.push(result);
        }
    }

    let final_interval_tt = post_days
        .last()
        .or_else(|| window.last())
        .map(|d| d.interval_tt.clone())
        .unwrap_or_default();

    Ok(EquilibriumResult {
        converged,
        days_run: days_run + post_days.len(),
        convergence_day,
        norm_trajectory,
        price_trajectory,
        token_revenue_trajectory: revenue_trajectory,
        final_interval_tt,
        final_tt_forecast: state.tt_forecast.clone(),
        window,
        post_days,
    })
}

/// Pre-day choices of the whole population for a given travel-time
/// forecast, without simulating the day. Used for demand-model measures
/// like price elasticities, where supply feedback is held fixed.
pub fn pre_day_choices_for(scenario: &Scenario, tt_forecast: &[f64]) -> Result<Vec<Decision>> {
    if tt_forecast.len() != NUM_INTERVALS {
        return Err(Error::domain(format!(
            "travel-time forecast must have {NUM_INTERVALS} entries"
        )));
    }
    let mut state = SimState::init(scenario)?;
    state.tt_forecast = tt_forecast.to_vec();
    pre_day_choices(&state, scenario)
}

/// Learning update and price adjustment after a completed day.
fn end_of_day_updates(state: &mut SimState, scenario: &Scenario, result: &DayResult) -> Result<()> {
    state.tt_forecast = smooth_vec(
        &state.tt_forecast,
        &result.interval_tt,
        scenario.learning.theta_tt,
    )?;
    for i in 0..state.travelers.len() {
        state.dep_forecast[i] = smooth(
            state.dep_forecast[i],
            result.dep_minute[i] as f64,
            scenario.learning.theta_dep,
        )?;
    }
    if scenario.instrument.kind == InstrumentKind::TMC {
        // The price rule reads the users' side of the ledger.
        state.market.price =
            crate::market::adjust_price(&state.market, -result.token_revenue, &scenario.market);
    }
    state.market.intervention = None;
    state.day += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{InstrumentSpec, TollProfile};

    fn tiny_scenario(kind: InstrumentKind) -> Scenario {
        let instrument = match kind {
            InstrumentKind::NT => InstrumentSpec::nt(),
            k => InstrumentSpec {
                kind: k,
                toll_profile: Some(TollProfile {
                    breakpoints: [390.0, 420.0, 450.0, 510.0, 540.0, 570.0],
                    levels: [0.5, 1.0, 1.5, 1.0, 0.5],
                }),
            },
        };
        let mut s = Scenario::base(instrument, 11);
        s.population.n_travelers = 120;
        s.engine.horizon = 30;
        s.engine.convergence_window = 3;
        s
    }

    #[test]
    fn infinity_norm_examples() {
        assert_eq!(infinity_norm(&[24.0, 30.0], &[24.0, 30.0]).unwrap(), 0.0);
        assert_eq!(infinity_norm(&[24.0, 30.0], &[24.0, 31.5]).unwrap(), 1.5);
        assert!(infinity_norm(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nt_day_has_no_transactions() {
        let scenario = tiny_scenario(InstrumentKind::NT);
        let mut state = SimState::init(&scenario).unwrap();
        let day = run_day(&mut state, &scenario, &DayEvents::default()).unwrap();
        assert!(day.transactions.is_empty());
        assert_eq!(day.token_revenue, 0.0);
        let pt_riders = day
            .realized_mode
            .iter()
            .filter(|m| **m == Mode::Pt)
            .count();
        let expected = scenario.supply.pt_fare * pt_riders as f64;
        assert!((day.fare_revenue - expected).abs() < 1e-9);
    }

    #[test]
    fn all_idle_tmc_population_sells_full_wallets() {
        // Zero toll everywhere, zero fees, price 1: every traveler sells at
        // the full wallet; once warm, the regulator pays out N*L*r per day.
        let mut scenario = tiny_scenario(InstrumentKind::TMC);
        scenario.instrument.toll_profile = Some(TollProfile::flat(0.0, 300.0, 600.0));
        scenario.engine.initial_wallets = InitialWallets::Full;
        scenario.engine.horizon = 12;
        let mut state = SimState::init(&scenario).unwrap();
        let mut tail = Vec::new();
        for day in 0..10 {
            let result = run_day(&mut state, &scenario, &DayEvents::default()).unwrap();
            if day >= 6 {
                tail.push(result.token_revenue);
            }
            end_of_day_updates(&mut state, &scenario, &result).unwrap();
        }
        // Selling cadences settle into short cycles; the average payout per
        // day must match the daily allocation.
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let n = scenario.population.n_travelers as f64;
        let expected = -n * scenario.market.full_wallet() * 1.0;
        assert!(
            (mean - expected).abs() / expected.abs() < 0.02,
            "mean revenue {mean}, expected about {expected}"
        );
    }

    #[test]
    fn same_seed_reproduces_identical_day_results() {
        let scenario = tiny_scenario(InstrumentKind::TMC);
        let run = || {
            let mut state = SimState::init(&scenario).unwrap();
            let mut out = Vec::new();
            for _ in 0..3 {
                let day = run_day(&mut state, &scenario, &DayEvents::default()).unwrap();
                end_of_day_updates(&mut state, &scenario, &day).unwrap();
                out.push(day);
            }
            out
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                serde_json::to_string(x).unwrap(),
                serde_json::to_string(y).unwrap()
            );
        }
    }

    #[test]
    fn converges_immediately_when_state_repeats() {
        let mut scenario = tiny_scenario(InstrumentKind::NT);
        scenario.engine.convergence_eps = 5.0; // generous threshold
        scenario.engine.convergence_window = 2;
        let result = run_to_equilibrium(&scenario).unwrap();
        assert!(result.converged);
        assert!(result.days_run <= scenario.engine.horizon);
    }

    #[test]
    fn capacity_event_reduces_effective_capacity() {
        let scenario = tiny_scenario(InstrumentKind::NT);
        let with_event = inject_capacity_event(
            &scenario,
            crate::supply::CapacityOverride {
                day: 2,
                start_min: 420.0,
                end_min: 510.0,
                factor: 0.85,
            },
        )
        .unwrap();
        let events = events_for_day(&with_event, 2, true);
        assert_eq!(events.capacity_at(450.0, 39.0), 39.0 * 0.85);
        assert_eq!(events.capacity_at(300.0, 39.0), 39.0);
        let none = events_for_day(&with_event, 1, true);
        assert_eq!(none.capacity_at(450.0, 39.0), 39.0);
    }

    #[test]
    fn malformed_event_window_is_rejected() {
        let scenario = tiny_scenario(InstrumentKind::NT);
        let bad = inject_capacity_event(
            &scenario,
            crate::supply::CapacityOverride {
                day: 2,
                start_min: 510.0,
                end_min: 420.0,
                factor: 0.85,
            },
        );
        assert!(bad.is_err());
    }

    #[test]
    fn intervention_overrides_apply_within_window() {
        let mut scenario = tiny_scenario(InstrumentKind::TMC);
        scenario.interventions.push(crate::scenario::ScheduledIntervention {
            day: 0,
            window: Intervention {
                start_min: 415.0,
                end_min: 555.0,
                override_price: Some(1.8),
                override_rate: None,
                override_fee_fixed: None,
            },
        });
        let events = events_for_day(&scenario, 0, true);
        let iv = events.intervention.as_ref().unwrap();
        assert_eq!(effective_price(1.0, Some(iv), 480.0), 1.8);
        assert_eq!(effective_price(1.0, Some(iv), 600.0), 1.0);
    }
}
