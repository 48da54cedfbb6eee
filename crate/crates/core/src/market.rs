//! Token wallets, transaction economics, the selling strategy and the
//! day-to-day price adjustment of the credit market.
//!
//! Tokens accrue continuously at rate `r` and expire after lifetime `L`, so
//! a wallet holds at most `L*r` (the full-wallet state, where new accrual
//! exactly offsets expiry). Travelers may buy from the regulator only at the
//! time of travel when short, and may only sell the whole wallet. The
//! selling strategy compares the revenue of selling everything now against
//! the buy-back that would be forced at the next planned departure.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Token allocation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    /// Accrual at `r` tokens/minute over the whole day, tokens expire after
    /// a lifetime `L`.
    #[default]
    Continuous,
    /// The full daily endowment `L*r` is credited at minute 0; unused tokens
    /// are redeemed automatically, fee-free, at end of day.
    LumpSum,
}

/// Market design parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Token allocation rate, tokens/minute.
    pub allocation_rate: f64,
    /// Token lifetime, minutes.
    pub lifetime: f64,
    /// Fixed selling fee, dollars/transaction.
    pub fee_fixed_sell: f64,
    /// Fixed buying fee, dollars/transaction.
    pub fee_fixed_buy: f64,
    /// Proportional selling fee.
    pub fee_prop_sell: f64,
    /// Proportional buying fee.
    pub fee_prop_buy: f64,
    /// Day-to-day price step, dollars.
    pub price_step: f64,
    /// Regulator revenue dead band, dollars.
    pub revenue_threshold: f64,
    /// Upper bound on the token price, dollars.
    pub price_cap: f64,
    /// Token price on day 0, dollars.
    pub initial_price: f64,
    #[serde(default)]
    pub allocation_mode: AllocationMode,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            allocation_rate: 0.00285,
            lifetime: 720.0,
            fee_fixed_sell: 0.0,
            fee_fixed_buy: 0.0,
            fee_prop_sell: 0.0,
            fee_prop_buy: 0.0,
            price_step: 0.05,
            revenue_threshold: 300.0,
            price_cap: 10.0,
            initial_price: 1.0,
            allocation_mode: AllocationMode::Continuous,
        }
    }
}

impl MarketParams {
    /// Full-wallet balance `L*r`, also the daily endowment.
    #[inline]
    pub fn full_wallet(&self) -> f64 {
        self.lifetime * self.allocation_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.allocation_rate < 0.0 {
            return Err(Error::config("market.allocation_rate", "must be >= 0"));
        }
        if self.lifetime <= 0.0 {
            return Err(Error::config("market.lifetime", "must be positive"));
        }
        if self.fee_fixed_sell < 0.0
            || self.fee_fixed_buy < 0.0
            || self.fee_prop_sell < 0.0
            || self.fee_prop_buy < 0.0
        {
            return Err(Error::config("market.fees", "must be >= 0"));
        }
        if self.price_step <= 0.0 {
            return Err(Error::config("market.price_step", "must be positive"));
        }
        if self.revenue_threshold < 0.0 {
            return Err(Error::config("market.revenue_threshold", "must be >= 0"));
        }
        if !(0.0..=self.price_cap).contains(&self.initial_price) {
            return Err(Error::config(
                "market.initial_price",
                "must lie in [0, price_cap]",
            ));
        }
        Ok(())
    }
}

/// Per-traveler token account.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wallet {
    pub owner: usize,
    pub balance: f64,
}

impl Wallet {
    pub fn new(owner: usize, balance: f64) -> Self {
        Wallet { owner, balance }
    }
}

/// The one action a traveler performs in a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Perform the trip, paying the toll in tokens (buying the shortfall if
    /// the balance does not cover it).
    Travel { toll_tokens: f64 },
    /// Do nothing; the wallet just accrues.
    Idle,
    /// Sell the entire wallet.
    SellAll,
}

/// Outcome of one account step: the updated wallet plus any tokens bought
/// or sold during the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub wallet: Wallet,
    pub tokens_bought: f64,
    pub tokens_sold: f64,
}

/// Advance one wallet by `dt` minutes under `action`.
///
/// Balances are capped at the full wallet `L*r` under continuous
/// allocation; under lump-sum allocation there is no accrual and no
/// cap-based expiry within the day (the endowment is credited by the engine
/// at minute 0).
pub fn step_account(
    wallet: Wallet,
    action: Action,
    params: &MarketParams,
    dt: f64,
) -> Result<StepOutcome> {
    if dt <= 0.0 {
        return Err(Error::domain("step_account requires dt > 0"));
    }
    let (accrual, cap) = match params.allocation_mode {
        AllocationMode::Continuous => (params.allocation_rate * dt, params.full_wallet()),
        AllocationMode::LumpSum => (0.0, f64::INFINITY),
    };
    let x = wallet.balance;
    let (balance, bought, sold) = match action {
        Action::Travel { toll_tokens } => {
            if toll_tokens < 0.0 {
                return Err(Error::domain("negative toll"));
            }
            if x >= toll_tokens {
                ((x - toll_tokens + accrual).min(cap), 0.0, 0.0)
            } else {
                (accrual, toll_tokens - x, 0.0)
            }
        }
        Action::Idle => ((x + accrual).min(cap), 0.0, 0.0),
        Action::SellAll => (accrual, 0.0, x),
    };
    Ok(StepOutcome {
        wallet: Wallet::new(wallet.owner, balance),
        tokens_bought: bought,
        tokens_sold: sold,
    })
}

/// Selling revenue without domain checks; used internally where the amount
/// is known valid (e.g. a wallet balance).
#[inline]
pub(crate) fn sell_value(y: f64, price: f64, params: &MarketParams) -> f64 {
    y * price * (1.0 - params.fee_prop_sell) - params.fee_fixed_sell
}

/// Buying cost without domain checks; forced at-travel purchases are for
/// immediate consumption and are not bound by the wallet cap.
#[inline]
pub(crate) fn buy_value(y: f64, price: f64, params: &MarketParams) -> f64 {
    y * price * (1.0 + params.fee_prop_buy) + params.fee_fixed_buy
}

/// Revenue from selling `y` tokens: `y * p * (1 - F_S^P) - F_S^F`.
pub fn selling_revenue(y: f64, price: f64, params: &MarketParams) -> Result<f64> {
    check_trade_amount(y, params)?;
    Ok(sell_value(y, price, params))
}

/// Cost of buying `y` tokens: `y * p * (1 + F_B^P) + F_B^F`.
pub fn buying_cost(y: f64, price: f64, params: &MarketParams) -> Result<f64> {
    check_trade_amount(y, params)?;
    Ok(buy_value(y, price, params))
}

fn check_trade_amount(y: f64, params: &MarketParams) -> Result<()> {
    if y < 0.0 {
        return Err(Error::domain("trade amount must be >= 0"));
    }
    // A held position can never exceed a full wallet.
    if y > params.full_wallet() + 1e-9 {
        return Err(Error::domain(format!(
            "trade amount {y} exceeds full wallet {}",
            params.full_wallet()
        )));
    }
    Ok(())
}

/// Balance expected at the next departure if the wallet is sold now and not
/// touched again until then.
#[inline]
pub fn expected_balance_at_departure(now: f64, next_departure: f64, params: &MarketParams) -> f64 {
    ((next_departure - now) * params.allocation_rate)
        .max(0.0)
        .min(params.full_wallet())
}

/// Conditional profit with the expected balance at the next departure
/// supplied by the caller (the engine integrates time-varying allocation
/// rates during interventions).
///
/// A buy-back is charged only on a strictly positive shortfall: when the
/// future allocation exactly covers the toll, nothing is bought and no fee
/// accrues.
#[inline]
pub fn conditional_profit_given_expected(
    balance: f64,
    expected_at_departure: f64,
    toll_at_departure: f64,
    price: f64,
    params: &MarketParams,
) -> f64 {
    debug_assert!(balance <= params.full_wallet() + 1e-9);
    let sell = sell_value(balance, price, params);
    let buy_back = if toll_at_departure > expected_at_departure {
        buy_value(toll_at_departure - expected_at_departure, price, params)
    } else {
        0.0
    };
    sell - buy_back
}

/// Conditional profit of selling the entire wallet at `now`, accounting for
/// the tokens that would have to be bought back at the next planned
/// departure.
pub fn conditional_profit(
    wallet: &Wallet,
    now: f64,
    next_departure: f64,
    toll_at_departure: f64,
    price: f64,
    params: &MarketParams,
) -> Result<f64> {
    if next_departure < now {
        return Err(Error::domain("next departure precedes current time"));
    }
    if toll_at_departure < 0.0 {
        return Err(Error::domain("negative toll"));
    }
    let expected = expected_balance_at_departure(now, next_departure, params);
    Ok(conditional_profit_given_expected(
        wallet.balance,
        expected,
        toll_at_departure,
        price,
        params,
    ))
}

/// Outcome of the selling rule at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SellDecision {
    SellNow,
    Hold,
}

/// The selling rule with expected balances supplied by the caller.
///
/// `expected_next_step` is the expected balance at the departure if the
/// sell were deferred by one time step; it detects the boundary where the
/// remaining allocation stops covering the toll. At that boundary the
/// conditional profit is discontinuous: selling on the last covered step
/// avoids the buy-back entirely, which pays off whenever the avoided
/// shortfall and fee outweigh one more step of accrual.
#[inline]
pub fn selling_rule_given_expected(
    balance: f64,
    expected_at_departure: f64,
    expected_next_step: f64,
    toll_at_departure: f64,
    price: f64,
    params: &MarketParams,
) -> SellDecision {
    let profit = conditional_profit_given_expected(
        balance,
        expected_at_departure,
        toll_at_departure,
        price,
        params,
    );
    if profit <= 0.0 {
        return SellDecision::Hold;
    }
    // Buying at the next trip is inevitable: deferring cannot raise the
    // profit.
    if toll_at_departure >= expected_at_departure {
        return SellDecision::SellNow;
    }
    // The coverage boundary falls inside the next step.
    if toll_at_departure >= expected_next_step {
        let gain_from_waiting = ((balance + params.allocation_rate).min(params.full_wallet())
            - balance)
            * price
            * (1.0 - params.fee_prop_sell);
        let cost_of_waiting = (toll_at_departure - expected_next_step)
            * price
            * (1.0 + params.fee_prop_buy)
            + params.fee_fixed_buy;
        if cost_of_waiting >= gain_from_waiting {
            return SellDecision::SellNow;
        }
        return SellDecision::Hold;
    }
    // No buying ahead: profit keeps growing until the wallet is full.
    if balance >= params.full_wallet() {
        SellDecision::SellNow
    } else {
        SellDecision::Hold
    }
}

/// The selling rule on the minute grid.
///
/// Sell only when profitable; when the next trip will require buying anyway
/// (now or from the next minute on), sell immediately, otherwise wait for a
/// full wallet, where holding longer only lets tokens expire.
pub fn selling_decision(
    wallet: &Wallet,
    now: f64,
    next_departure: f64,
    toll_at_departure: f64,
    price: f64,
    params: &MarketParams,
) -> Result<SellDecision> {
    if next_departure < now {
        return Err(Error::domain("next departure precedes current time"));
    }
    if toll_at_departure < 0.0 {
        return Err(Error::domain("negative toll"));
    }
    let expected = expected_balance_at_departure(now, next_departure, params);
    let expected_next = expected_balance_at_departure(now + 1.0, next_departure, params);
    Ok(selling_rule_given_expected(
        wallet.balance,
        expected,
        expected_next,
        toll_at_departure,
        price,
        params,
    ))
}

/// Within-day market intervention window; override fields that are `None`
/// fall back to the base values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    /// Window start minute (inclusive).
    pub start_min: f64,
    /// Window end minute (exclusive).
    pub end_min: f64,
    pub override_price: Option<f64>,
    pub override_rate: Option<f64>,
    pub override_fee_fixed: Option<f64>,
}

impl Intervention {
    #[inline]
    pub fn contains(&self, minute: f64) -> bool {
        minute >= self.start_min && minute < self.end_min
    }
}

/// Day-indexed state of the token market.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketState {
    pub day: usize,
    /// Token price of the current day, dollars.
    pub price: f64,
    /// Net regulator revenue from token trades accumulated within the day
    /// (buys minus sells), dollars.
    pub token_revenue_ledger: f64,
    /// Active intervention window for the current day, if any.
    pub intervention: Option<Intervention>,
}

impl MarketState {
    pub fn new(initial_price: f64) -> Self {
        MarketState {
            day: 0,
            price: initial_price,
            token_revenue_ledger: 0.0,
            intervention: None,
        }
    }
}

/// Day-to-day price adjustment toward revenue neutrality.
///
/// `previous_day_users_revenue` is the users' net revenue from token trades
/// (sells minus buys). When users net-extract beyond the dead band the
/// market is oversupplied and the price steps down; when users net-pay the
/// market is short and the price steps up. The result clamps to
/// `[0, price_cap]`.
pub fn adjust_price(
    state: &MarketState,
    previous_day_users_revenue: f64,
    params: &MarketParams,
) -> f64 {
    let p = state.price;
    let next = if previous_day_users_revenue < -params.revenue_threshold {
        p + params.price_step
    } else if previous_day_users_revenue > params.revenue_threshold {
        p - params.price_step
    } else {
        p
    };
    next.clamp(0.0, params.price_cap)
}

/// Prevailing (price, allocation rate, fixed fees) at `now_min`, accounting
/// for an active intervention window.
pub fn effective_market(
    now_min: f64,
    state: &MarketState,
    params: &MarketParams,
) -> (f64, f64, f64, f64) {
    match &state.intervention {
        Some(iv) if iv.contains(now_min) => {
            let fee = iv.override_fee_fixed;
            (
                iv.override_price.unwrap_or(state.price),
                iv.override_rate.unwrap_or(params.allocation_rate),
                fee.unwrap_or(params.fee_fixed_sell),
                fee.unwrap_or(params.fee_fixed_buy),
            )
        }
        _ => (
            state.price,
            params.allocation_rate,
            params.fee_fixed_sell,
            params.fee_fixed_buy,
        ),
    }
}

/// Tokens accrued between `from` and `to` given an optional intervention
/// that may override the allocation rate inside its window.
pub fn accrual_between(
    from: f64,
    to: f64,
    params: &MarketParams,
    intervention: Option<&Intervention>,
) -> f64 {
    debug_assert!(to >= from);
    let base = params.allocation_rate;
    match intervention {
        Some(iv) if iv.override_rate.is_some() => {
            let rate_in = iv.override_rate.unwrap();
            let overlap = (to.min(iv.end_min) - from.max(iv.start_min)).max(0.0);
            base * ((to - from) - overlap) + rate_in * overlap
        }
        _ => base * (to - from),
    }
}
