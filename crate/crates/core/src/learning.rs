//! Day-to-day exponential smoothing of travel-time and departure-time
//! forecasts, plus the forecast replay of the token account.

use crate::market::{
    selling_decision, step_account, Action, MarketParams, SellDecision, Wallet,
};
use crate::{Error, Result, DAY_MINUTES, FULL_DAY_MINUTES};
use serde::{Deserialize, Serialize};

/// Learning weights on realized information.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningParams {
    /// Weight of the realized interval travel time.
    pub theta_tt: f64,
    /// Weight of the realized departure time.
    pub theta_dep: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            theta_tt: 0.1,
            theta_dep: 0.1,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        for (name, theta) in [("theta_tt", self.theta_tt), ("theta_dep", self.theta_dep)] {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::config(
                    format!("learning.{name}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// One exponential-smoothing step: `(1 - theta) * prev + theta * realized`.
pub fn smooth(prev_forecast: f64, realized: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::config("learning.theta", "must lie in [0, 1]"));
    }
    Ok((1.0 - theta) * prev_forecast + theta * realized)
}

/// Elementwise smoothing of a forecast vector.
pub fn smooth_vec(prev: &[f64], realized: &[f64], theta: f64) -> Result<Vec<f64>> {
    if prev.len() != realized.len() {
        return Err(Error::domain("forecast vectors must have equal length"));
    }
    prev.iter()
        .zip(realized)
        .map(|(&p, &r)| smooth(p, r, theta))
        .collect()
}

/// Forecast token-balance trajectory over the day.
///
/// Replays the account evolution and the selling rule deterministically from
/// the start-of-day balance, assuming the single forecast departure and the
/// toll at that minute. Entry `t` is the balance at minute `t` before any
/// action in that minute; one extra entry holds the end-of-day balance.
pub fn forecast_balance(
    start_balance: f64,
    dep_forecast_min: f64,
    toll_at_forecast_dep: f64,
    price: f64,
    params: &MarketParams,
) -> Result<Vec<f64>> {
    if !(0.0..=DAY_MINUTES as f64).contains(&dep_forecast_min) {
        return Err(Error::domain(format!(
            "departure forecast {dep_forecast_min} outside the day"
        )));
    }
    let dep_minute = dep_forecast_min.round() as u32;
    let mut trajectory = Vec::with_capacity(DAY_MINUTES as usize + 1);
    let mut wallet = Wallet::new(0, start_balance);
    for t in 0..DAY_MINUTES {
        trajectory.push(wallet.balance);
        let action = if t == dep_minute {
            Action::Travel {
                toll_tokens: toll_at_forecast_dep,
            }
        } else {
            // After today's trip the next planned departure is tomorrow's.
            let (next_dep, next_toll) = if t < dep_minute {
                (dep_minute as f64, toll_at_forecast_dep)
            } else {
                (
                    dep_minute as f64 + FULL_DAY_MINUTES as f64,
                    toll_at_forecast_dep,
                )
            };
            match selling_decision(&wallet, t as f64, next_dep, next_toll, price, params)? {
                SellDecision::SellNow => Action::SellAll,
                SellDecision::Hold => Action::Idle,
            }
        };
        wallet = step_account(wallet, action, params, 1.0)?.wallet;
    }
    trajectory.push(wallet.balance);
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_endpoints_and_example() {
        assert_eq!(smooth(30.0, 40.0, 0.0).unwrap(), 30.0);
        assert_eq!(smooth(30.0, 40.0, 1.0).unwrap(), 40.0);
        assert!((smooth(30.0, 40.0, 0.1).unwrap() - 31.0).abs() < 1e-12);
        assert!(smooth(30.0, 40.0, 1.5).is_err());
    }

    #[test]
    fn fixed_point_when_realized_equals_forecast() {
        let prev = vec![24.0, 31.5, 40.0];
        let got = smooth_vec(&prev, &prev, 0.1).unwrap();
        assert_eq!(got, prev);
    }

    #[test]
    fn geometric_contraction_toward_stationary_signal() {
        let theta = 0.1;
        let target = 35.0;
        let mut forecast = 24.0;
        for d in 1..=30 {
            forecast = smooth(forecast, target, theta).unwrap();
            let expected = target - (1.0_f64 - theta).powi(d) * (target - 24.0);
            assert!((forecast - expected).abs() < 1e-9, "day {d}");
        }
    }

    #[test]
    fn no_accrual_and_no_trades_keeps_balance_constant() {
        let params = MarketParams {
            allocation_rate: 0.0,
            ..MarketParams::default()
        };
        // With rate 0 and an empty wallet nothing ever happens.
        let traj = forecast_balance(0.0, 400.0, 0.0, 1.0, &params).unwrap();
        assert!(traj.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn full_wallet_with_no_trip_sells_at_the_cap() {
        let params = MarketParams::default();
        let full = params.full_wallet();
        // Departure forecast late with zero toll: the wallet is sold on the
        // first minute (it is full and nothing needs to be bought).
        let traj = forecast_balance(full, 719.0, 0.0, 1.0, &params).unwrap();
        assert_eq!(traj[0], full);
        assert!((traj[1] - params.allocation_rate).abs() < 1e-12);
    }

    #[test]
    fn toll_beyond_future_allocation_shows_sell_then_buy() {
        let params = MarketParams::default();
        // Buying at departure is inevitable (toll exceeds future accrual)
        // and selling now is profitable: the rule sells immediately, then
        // the trip forces a buy.
        let dep = 300.0;
        let toll = 1.2; // accrual until 300 is 0.855 < 1.2
        let traj = forecast_balance(1.5, dep, toll, 1.0, &params).unwrap();
        // Sold at t=0: balance drops to the single-minute accrual.
        assert!((traj[1] - params.allocation_rate).abs() < 1e-12);
        // At departure the balance equals accrual since the sell, all spent
        // plus a purchase of the shortfall.
        let expect_at_dep = 300.0 * params.allocation_rate;
        assert!((traj[300] - expect_at_dep).abs() < 1e-9);
        // After the trip the balance restarts from the minute accrual.
        assert!((traj[301] - params.allocation_rate).abs() < 1e-12);
    }

    #[test]
    fn forecast_matches_realized_replay_when_departure_matches() {
        // The balance forecast is exactly the realized evolution when the
        // realized departure equals the forecast and prices are unchanged.
        let params = MarketParams::default();
        let dep = 420u32;
        let toll = 0.8;
        let forecast = forecast_balance(1.0, dep as f64, toll, 1.0, &params).unwrap();

        let mut wallet = Wallet::new(0, 1.0);
        for t in 0..DAY_MINUTES {
            assert!(
                (forecast[t as usize] - wallet.balance).abs() < 1e-12,
                "minute {t}"
            );
            let action = if t == dep {
                Action::Travel { toll_tokens: toll }
            } else {
                let (next_dep, next_toll) = if t < dep {
                    (dep as f64, toll)
                } else {
                    (dep as f64 + FULL_DAY_MINUTES as f64, toll)
                };
                match selling_decision(&wallet, t as f64, next_dep, next_toll, 1.0, &params)
                    .unwrap()
                {
                    SellDecision::SellNow => Action::SellAll,
                    SellDecision::Hold => Action::Idle,
                }
            };
            wallet = step_account(wallet, action, &params, 1.0).unwrap().wallet;
        }
    }
}
