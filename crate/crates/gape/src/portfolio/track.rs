//! Monthly return tracking with delisting semantics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EngineError, Portfolio};
use crate::data::Universe;
use crate::types::{ReturnSeries, SecurityId, YearMonth};

/// How within-year weights evolve between formations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldingPolicy {
    /// Each month, surviving holdings are rebalanced back to their
    /// formation weights (renormalized after departures). Delisting
    /// proceeds are thereby reinvested at the next month boundary.
    MonthlyRebalance,
    /// Weights drift with returns; departure proceeds are redistributed
    /// pro rata across survivors at the month boundary.
    BuyAndHold,
}

/// What one security contributed in one tracked month.
enum MonthOutcome {
    /// Regular priced month; the security stays.
    Keeps(f64),
    /// Final month: delisting return, or -1 when it vanished without one.
    Exits(f64),
}

fn resolve_return(universe: &Universe, security: &SecurityId, month: YearMonth) -> MonthOutcome {
    // A delisting in this month supersedes any price-file return; the
    // realisation of the delisting belongs to the month it occurs in.
    if let Some(record) = universe.delisting_for(security) {
        if record.month == month {
            return MonthOutcome::Exits(record.delist_return.unwrap_or(-1.0));
        }
    }
    match universe.price_at(security, month) {
        Some(obs) => MonthOutcome::Keeps(obs.total_return),
        // Vanished from prices with no delisting record: complete loss.
        None => MonthOutcome::Exits(-1.0),
    }
}

/// Tracks a formed portfolio for `months` consecutive months starting at
/// `start` (the month after formation).
///
/// The month return is the weight-sum of member returns. A member's final
/// month uses its delisting return when recorded, and a complete loss of
/// -1 when it simply vanishes from the price file; afterwards it leaves the
/// portfolio under the holding policy. Should every member depart, the
/// remaining months return zero (the proceeds sit uninvested).
pub fn track_returns(
    portfolio: &Portfolio,
    start: YearMonth,
    months: usize,
    universe: &Universe,
    policy: HoldingPolicy,
) -> Result<ReturnSeries, EngineError> {
    match policy {
        HoldingPolicy::MonthlyRebalance => track_rebalanced(portfolio, start, months, universe),
        HoldingPolicy::BuyAndHold => track_buy_and_hold(portfolio, start, months, universe),
    }
}

fn track_rebalanced(
    portfolio: &Portfolio,
    start: YearMonth,
    months: usize,
    universe: &Universe,
) -> Result<ReturnSeries, EngineError> {
    let mut active: BTreeMap<&SecurityId, f64> =
        portfolio.holdings.iter().map(|(s, w)| (s, *w)).collect();
    let mut returns = Vec::with_capacity(months);
    for offset in 0..months {
        let month = start.plus_months(offset as i64);
        if active.is_empty() {
            returns.push(0.0);
            continue;
        }
        let total_weight: f64 = active.values().sum();
        let mut month_return = 0.0;
        let mut exits: Vec<&SecurityId> = Vec::new();
        for (&security, &weight) in &active {
            let normalized = weight / total_weight;
            match resolve_return(universe, security, month) {
                MonthOutcome::Keeps(r) => month_return += normalized * r,
                MonthOutcome::Exits(r) => {
                    month_return += normalized * r;
                    exits.push(security);
                }
            }
        }
        for security in exits {
            active.remove(security);
        }
        returns.push(month_return);
    }
    Ok(ReturnSeries::from_start(start, returns)?)
}

fn track_buy_and_hold(
    portfolio: &Portfolio,
    start: YearMonth,
    months: usize,
    universe: &Universe,
) -> Result<ReturnSeries, EngineError> {
    let mut values: BTreeMap<&SecurityId, f64> =
        portfolio.holdings.iter().map(|(s, w)| (s, *w)).collect();
    let mut cash = 0.0f64;
    let mut returns = Vec::with_capacity(months);
    for offset in 0..months {
        let month = start.plus_months(offset as i64);
        let invested: f64 = values.values().sum::<f64>() + cash;
        if invested <= 0.0 {
            returns.push(0.0);
            continue;
        }
        let mut gain = 0.0;
        let mut exits: Vec<&SecurityId> = Vec::new();
        let mut freed = 0.0;
        for (&security, value) in &mut values {
            match resolve_return(universe, security, month) {
                MonthOutcome::Keeps(r) => {
                    gain += *value * r;
                    *value *= 1.0 + r;
                }
                MonthOutcome::Exits(r) => {
                    gain += *value * r;
                    freed += *value * (1.0 + r);
                    exits.push(security);
                }
            }
        }
        for security in exits {
            values.remove(security);
        }
        // Redistribute departure proceeds pro rata; hold as cash when no
        // survivors remain.
        let surviving: f64 = values.values().sum();
        if freed > 0.0 {
            if surviving > 0.0 {
                for value in values.values_mut() {
                    *value += freed * (*value / surviving);
                }
            } else {
                cash += freed;
            }
        }
        returns.push(gain / invested);
    }
    Ok(ReturnSeries::from_start(start, returns)?)
}
