//! The annual formation loop: rank, assign, average, track, concatenate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::track::{track_returns, HoldingPolicy};
use super::{
    average_holdings, cohort_members, quantile_assign, rank_members, CohortMember, EngineError,
    FormationEvent, PortfolioSet, SortMetric,
};
use crate::data::{AsOfView, FormationAudit, Universe};
use crate::types::{ReturnSeries, SecurityId};
use crate::valuation::GaPeOutcome;

/// Backtest parameters: an inclusive range of formation years plus the
/// formation knobs shared by every event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub start_year: i32,
    pub end_year: i32,
    pub windows: BTreeSet<u32>,
    pub quantiles: usize,
    pub formation_month: u32,
    pub holding: HoldingPolicy,
    pub cap_percentile: Option<f64>,
}

impl BacktestConfig {
    pub fn new(start_year: i32, end_year: i32) -> Self {
        Self {
            start_year,
            end_year,
            windows: [1, 2, 3].into_iter().collect(),
            quantiles: 5,
            formation_month: 3,
            holding: HoldingPolicy::MonthlyRebalance,
            cap_percentile: None,
        }
    }

    fn event(&self, year: i32) -> FormationEvent {
        FormationEvent {
            year,
            formation_month: self.formation_month,
            window_set: self.windows.clone(),
            quantiles: self.quantiles,
            cap_percentile: self.cap_percentile,
        }
    }

    pub fn formation_years(&self) -> impl Iterator<Item = i32> {
        self.start_year..=self.end_year
    }
}

/// Median of a set that may contain infinite payback periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MedianValue {
    Finite(f64),
    Infinite,
}

impl MedianValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            MedianValue::Finite(v) => Some(*v),
            MedianValue::Infinite => None,
        }
    }
}

/// Formation-time medians for one growth-adjusted-sorted portfolio in one
/// year and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSummary {
    pub year: i32,
    pub window: u32,
    /// 1-based portfolio index (1 = lowest metric).
    pub portfolio: usize,
    pub size: usize,
    pub median_gape: MedianValue,
    pub median_pe: f64,
    pub median_growth: f64,
}

/// Concatenated monthly return series per portfolio for one sort,
/// `portfolio_series[i]` belonging to `P_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortOutcome {
    pub metric: SortMetric,
    pub portfolio_series: Vec<ReturnSeries>,
}

/// Everything one backtest produces, before report formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub config: BacktestConfig,
    pub gape: SortOutcome,
    pub pe: SortOutcome,
    /// Per-year, per-window medians of the growth-adjusted-sorted
    /// portfolios.
    pub summaries: Vec<FormationSummary>,
    /// Aggregate formation-time access audit across every event.
    pub audit: FormationAudit,
}

/// Runs the full protocol over every formation year in the config.
///
/// Both sorts are built from the identical eligible pools: for each window
/// the same cohort is ranked once by growth-adjusted payback and once by
/// plain price-earnings, each split into quantiles, averaged across
/// windows, and tracked for twelve months from the month after formation.
pub fn run_backtest(
    universe: &Universe,
    config: &BacktestConfig,
) -> Result<BacktestResult, EngineError> {
    if config.start_year > config.end_year {
        return Err(EngineError::InvalidConfig(format!(
            "formation years {}..={} are empty",
            config.start_year, config.end_year
        )));
    }
    config.event(config.start_year).validate()?;

    let q = config.quantiles;
    let mut gape_series: Vec<Option<ReturnSeries>> = vec![None; q];
    let mut pe_series: Vec<Option<ReturnSeries>> = vec![None; q];
    let mut summaries = Vec::new();
    let mut audit = FormationAudit::default();

    for year in config.formation_years() {
        let event = config.event(year);
        let as_of = event.as_of();
        let view = AsOfView::new(universe, as_of, year);

        let mut members_by_window: BTreeMap<u32, Vec<CohortMember>> = BTreeMap::new();
        for &window in &config.windows {
            members_by_window.insert(window, cohort_members(&view, &event, window)?);
        }
        audit.absorb(&view.audit());

        for metric in [SortMetric::GaPe, SortMetric::Pe] {
            let mut sets: Vec<PortfolioSet> = Vec::with_capacity(config.windows.len());
            for (&window, members) in &members_by_window {
                let ranked = rank_members(members, metric);
                let set = quantile_assign(&ranked, q, year, window)?;
                if metric == SortMetric::GaPe {
                    summarize(&set, members, window, &mut summaries);
                }
                sets.push(set);
            }
            let averaged = average_holdings(&sets)?;
            let accumulator = match metric {
                SortMetric::GaPe => &mut gape_series,
                SortMetric::Pe => &mut pe_series,
            };
            for (slot, portfolio) in accumulator.iter_mut().zip(&averaged.portfolios) {
                let year_series =
                    track_returns(portfolio, as_of.next(), 12, universe, config.holding)?;
                match slot {
                    Some(series) => series.extend(&year_series)?,
                    None => *slot = Some(year_series),
                }
            }
        }
    }

    let unwrap_all = |slots: Vec<Option<ReturnSeries>>| {
        slots
            .into_iter()
            .map(|s| s.expect("every formation year fills every portfolio"))
            .collect::<Vec<_>>()
    };
    Ok(BacktestResult {
        config: config.clone(),
        gape: SortOutcome {
            metric: SortMetric::GaPe,
            portfolio_series: unwrap_all(gape_series),
        },
        pe: SortOutcome {
            metric: SortMetric::Pe,
            portfolio_series: unwrap_all(pe_series),
        },
        summaries,
        audit,
    })
}

fn summarize(
    set: &PortfolioSet,
    members: &[CohortMember],
    window: u32,
    out: &mut Vec<FormationSummary>,
) {
    let by_id: BTreeMap<&SecurityId, &CohortMember> =
        members.iter().map(|m| (&m.security_id, m)).collect();
    for (index, portfolio) in set.portfolios.iter().enumerate() {
        let mut finite_gape = Vec::new();
        let mut infinite = 0usize;
        let mut pes = Vec::new();
        let mut growths = Vec::new();
        for security in portfolio.holdings.keys() {
            let member = by_id[security];
            match member.gape {
                GaPeOutcome::Finite { years } => finite_gape.push(years),
                GaPeOutcome::Infinite { .. } => infinite += 1,
            }
            pes.push(member.pe);
            growths.push(member.growth);
        }
        out.push(FormationSummary {
            year: set.year,
            window,
            portfolio: index + 1,
            size: portfolio.holdings.len(),
            median_gape: median_extended(finite_gape, infinite),
            median_pe: median_plain(pes),
            median_growth: median_plain(growths),
        });
    }
}

/// Median over `finite` values plus `infinite` entries sorting above all of
/// them. An even count averages the two middle entries; any infinite middle
/// makes the median infinite.
fn median_extended(mut finite: Vec<f64>, infinite: usize) -> MedianValue {
    finite.sort_by(f64::total_cmp);
    let n = finite.len() + infinite;
    debug_assert!(n > 0);
    let lo = (n - 1) / 2;
    let hi = n / 2;
    match (finite.get(lo), finite.get(hi)) {
        (Some(&a), Some(&b)) => MedianValue::Finite(0.5 * (a + b)),
        _ => MedianValue::Infinite,
    }
}

fn median_plain(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    debug_assert!(n > 0);
    0.5 * (values[(n - 1) / 2] + values[n / 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_infinite_tails() {
        assert_eq!(
            median_extended(vec![1.0, 3.0, 2.0], 0),
            MedianValue::Finite(2.0)
        );
        assert_eq!(median_extended(vec![1.0, 2.0], 1), MedianValue::Finite(2.0));
        assert_eq!(median_extended(vec![1.0], 2), MedianValue::Infinite);
        assert_eq!(median_extended(vec![], 3), MedianValue::Infinite);
        // Even count with one middle infinite.
        assert_eq!(
            median_extended(vec![1.0, 2.0, 3.0], 3),
            MedianValue::Infinite
        );
        assert_eq!(
            median_extended(vec![1.0, 2.0, 3.0, 4.0], 2),
            MedianValue::Finite(3.5)
        );
    }

    #[test]
    fn median_plain_even_and_odd() {
        assert_eq!(median_plain(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_plain(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median_plain(vec![5.0]), 5.0);
    }
}
