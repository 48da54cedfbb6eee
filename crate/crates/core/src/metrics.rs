//! Welfare, equity, network-performance and market-behavior measures.
//!
//! User benefits are net experienced money-metric utilities relative to the
//! NT equilibrium computed with the same frozen utility draws. Regulator
//! revenue applies the mirror-day factor two, matching the doubled cost
//! terms in the utilities, so that the social-welfare decomposition
//! `SW = Z + K` is an exact transfer accounting.

use crate::demand::{InstrumentKind, Mode};
use crate::engine::{DayResult, EquilibriumResult, Transaction, TxKind};
use crate::population::Traveler;
use crate::scenario::Scenario;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Aggregated welfare and performance report of one equilibrium run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WelfareReport {
    /// Total user benefit relative to NT, dollars.
    pub user_benefit: f64,
    /// Regulator revenue (mirror-day accounting), dollars.
    pub regulator_revenue: f64,
    /// Social welfare, exactly `user_benefit + regulator_revenue`.
    pub social_welfare: f64,
    /// Per-traveler user benefit, dollars.
    pub per_traveler_benefit: Vec<f64>,
    /// Gini coefficient of disposable income plus user benefit.
    pub gini: f64,
    /// Whether any income-plus-benefit value was negative (the generalized
    /// Gini formula is used either way).
    pub gini_saw_negative: bool,
    /// Travel time index of car trips; absent when nobody drives.
    pub tti: Option<f64>,
    /// Share of travelers on PT.
    pub pt_share: f64,
    /// Fraction of buying transactions that are buybacks.
    pub buyback_fraction: f64,
    /// Buyback purchases per traveler.
    pub buyback_per_capita: f64,
}

/// Regulator revenue of one CP day: tolls plus PT fares.
pub fn regulator_revenue_cp(day: &DayResult, instrument: InstrumentKind) -> Result<f64> {
    if instrument != InstrumentKind::CP {
        return Err(Error::domain("regulator_revenue_cp requires CP"));
    }
    Ok(day.toll_revenue + day.fare_revenue)
}

/// Regulator revenue of one TMC day, split into fares and the token-market
/// net (buys minus sells, fees included).
pub fn regulator_revenue_tmc(day: &DayResult, instrument: InstrumentKind) -> Result<(f64, f64)> {
    if instrument != InstrumentKind::TMC {
        return Err(Error::domain("regulator_revenue_tmc requires TMC"));
    }
    Ok((day.fare_revenue, day.token_revenue))
}

/// Experienced money-metric utility of the chosen alternative with realized
/// attributes.
pub fn experienced_utility(
    traveler: &Traveler,
    day: &DayResult,
    scenario: &Scenario,
) -> Result<f64> {
    let i = traveler.id;
    let decision = &day.decisions[i];
    let utility = &scenario.utility;
    let supply = &scenario.supply;
    match day.realized_mode[i] {
        Mode::Car => {
            let tt = day.realized_tt[i];
            let arrival = day.dep_minute[i] as f64 + tt;
            let sde = (traveler.preferred_arrival - utility.delta_a - arrival).max(0.0);
            let sdl = (arrival - traveler.preferred_arrival - utility.delta_a).max(0.0);
            let cost = match scenario.instrument.kind {
                InstrumentKind::NT => supply.car_operating_cost,
                InstrumentKind::CP => {
                    scenario.instrument.toll_at(day.dep_minute[i] as f64)
                        + supply.car_operating_cost
                }
                InstrumentKind::TMC => {
                    crate::demand::opportunity_cost(
                        day.balance_at_departure[i],
                        day.tokens_spent[i],
                        day.price,
                        &scenario.market,
                    ) + supply.car_operating_cost
                }
            };
            let remaining = traveler.disposable_income - 2.0 * cost;
            let log_arg = (utility.gamma + remaining).max(1e-9);
            Ok(-2.0 * traveler.vot * tt - traveler.sde_value * sde - traveler.sdl_value * sdl
                + remaining
                + utility.lambda * log_arg.ln()
                + decision.epsilon)
        }
        Mode::Pt => {
            let cost = match scenario.instrument.kind {
                InstrumentKind::TMC => {
                    crate::demand::pt_opportunity_cost(day.price, &scenario.market)
                        + supply.pt_fare
                }
                _ => supply.pt_fare,
            };
            let remaining = traveler.disposable_income - 2.0 * cost;
            let log_arg = (utility.gamma + remaining).max(1e-9);
            Ok(
                -2.0 * traveler.vot * supply.pt_travel_time
                    - 2.0 * traveler.wait_value * supply.pt_wait
                    + remaining
                    + utility.lambda * log_arg.ln()
                    + decision.epsilon,
            )
        }
    }
}

/// Net experienced utility of one traveler: instrument minus NT.
pub fn user_benefit(experienced_j: f64, experienced_nt: f64) -> f64 {
    experienced_j - experienced_nt
}

/// Gini coefficient; the pairwise-difference form tolerates negative
/// values.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("gini of an empty list"));
    }
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Err(Error::domain("gini undefined for zero total"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // sum_i (2i - n - 1) x_(i) equals half the sum of pairwise absolute
    // differences.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

/// Travel time index: mean experienced car travel time over free flow.
pub fn tti(day: &DayResult, free_flow: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, mode) in day.realized_mode.iter().enumerate() {
        if *mode == Mode::Car {
            sum += day.realized_tt[i];
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64 / free_flow)
}

/// Buyback statistics: a buy counts as a buyback when the same traveler
/// sold earlier the same day.
pub fn buyback_stats(transactions: &[Transaction], n_travelers: usize) -> (f64, f64) {
    let mut sold_today: HashSet<(usize, usize)> = HashSet::new();
    let mut buys = 0usize;
    let mut buybacks = 0usize;
    for tx in transactions {
        match tx.kind {
            TxKind::Sell => {
                sold_today.insert((tx.day, tx.traveler));
            }
            TxKind::Buy => {
                buys += 1;
                if sold_today.contains(&(tx.day, tx.traveler)) {
                    buybacks += 1;
                }
            }
        }
    }
    let fraction = if buys == 0 {
        0.0
    } else {
        buybacks as f64 / buys as f64
    };
    let days: HashSet<usize> = transactions.iter().map(|t| t.day).collect();
    let day_count = days.len().max(1) as f64;
    (fraction, buybacks as f64 / n_travelers as f64 / day_count)
}

/// Compose the full report for an instrument run against its NT pairing,
/// averaging the experienced utilities over the final converged window.
pub fn welfare_report(
    scenario: &Scenario,
    result: &EquilibriumResult,
    travelers: &[Traveler],
    nt_scenario: &Scenario,
    nt_result: &EquilibriumResult,
) -> Result<WelfareReport> {
    let n = travelers.len();
    let mean_experienced = |sc: &Scenario, res: &EquilibriumResult| -> Result<Vec<f64>> {
        let days = &res.window;
        let mut acc = vec![0.0; n];
        for day in days {
            for t in travelers {
                acc[t.id] += experienced_utility(t, day, sc)?;
            }
        }
        for v in acc.iter_mut() {
            *v /= days.len() as f64;
        }
        Ok(acc)
    };
    let u_j = mean_experienced(scenario, result)?;
    let u_nt = mean_experienced(nt_scenario, nt_result)?;
    let per_traveler_benefit: Vec<f64> = match scenario.instrument.kind {
        InstrumentKind::NT => vec![0.0; n],
        _ => u_j
            .iter()
            .zip(&u_nt)
            .map(|(j, nt)| user_benefit(*j, *nt))
            .collect(),
    };
    let user_benefit_total: f64 = per_traveler_benefit.iter().sum();

    // Mirror-day accounting: the evening repeats the morning's payments.
    let mean_day_revenue = |res: &EquilibriumResult| -> f64 {
        let days = &res.window;
        let sum: f64 = days
            .iter()
            .map(|d| match scenario.instrument.kind {
                InstrumentKind::NT => 0.0,
                InstrumentKind::CP => d.toll_revenue + d.fare_revenue,
                InstrumentKind::TMC => d.fare_revenue + d.token_revenue,
            })
            .sum();
        2.0 * sum / days.len() as f64
    };
    let regulator_revenue = mean_day_revenue(result);
    let social_welfare = user_benefit_total + regulator_revenue;

    let income_plus_benefit: Vec<f64> = travelers
        .iter()
        .map(|t| t.disposable_income + per_traveler_benefit[t.id])
        .collect();
    let gini_saw_negative = income_plus_benefit.iter().any(|&v| v < 0.0);
    let gini = gini(&income_plus_benefit)?;

    let final_day = result.final_day();
    let tti = tti(final_day, scenario.supply.free_flow);
    let pt_share = final_day
        .realized_mode
        .iter()
        .filter(|m| **m == Mode::Pt)
        .count() as f64
        / n as f64;

    let all_tx: Vec<Transaction> = result
        .window
        .iter()
        .flat_map(|d| d.transactions.iter().copied())
        .collect();
    let (buyback_fraction, buyback_per_capita) = buyback_stats(&all_tx, n);

    Ok(WelfareReport {
        user_benefit: user_benefit_total,
        regulator_revenue,
        social_welfare,
        per_traveler_benefit,
        gini,
        gini_saw_negative,
        tti,
        pt_share,
        buyback_fraction,
        buyback_per_capita,
    })
}
