//! The formation-and-tracking protocol: each formation event ranks the
//! eligible universe by a valuation metric, splits it into equal-weighted
//! quantile portfolios per growth window, averages holdings across windows,
//! and tracks monthly returns for the following year.

mod backtest;
mod track;

pub use backtest::{
    run_backtest, BacktestConfig, BacktestResult, FormationSummary, MedianValue, SortOutcome,
};
pub use track::{track_returns, HoldingPolicy};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::data::AsOfView;
use crate::growth::annualized_growth;
use crate::stats::StatsError;
use crate::types::{SecurityId, SeriesError, YearMonth};
use crate::valuation::{ga_pe, n_star, GaPeOutcome, ValuationInputs};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("formation {year} window {window}: no eligible securities")]
    EmptyCohort { year: i32, window: u32 },
    #[error(
        "formation {year} window {window}: cohort of {size} cannot fill {quantiles} quantiles"
    )]
    CohortTooSmall {
        year: i32,
        window: u32,
        size: usize,
        quantiles: usize,
    },
    #[error("portfolio sets disagree: {0}")]
    MismatchedSets(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// One annual formation: rank at the end of `formation_month` of `year`
/// (March unless configured otherwise), over the given growth windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationEvent {
    pub year: i32,
    pub formation_month: u32,
    pub window_set: BTreeSet<u32>,
    pub quantiles: usize,
    /// Keep only the largest `x%` of the March-priced universe by market
    /// cap, applied before the earnings eligibility cuts.
    pub cap_percentile: Option<f64>,
}

impl FormationEvent {
    pub fn new(year: i32) -> Self {
        Self {
            year,
            formation_month: 3,
            window_set: [1, 2, 3].into_iter().collect(),
            quantiles: 5,
            cap_percentile: None,
        }
    }

    pub fn as_of(&self) -> YearMonth {
        YearMonth::new(self.year, self.formation_month).expect("validated month")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(1..=12).contains(&self.formation_month) {
            return Err(EngineError::InvalidConfig(format!(
                "formation month {} out of range",
                self.formation_month
            )));
        }
        if self.quantiles < 2 {
            return Err(EngineError::InvalidConfig(format!(
                "need at least 2 quantiles, got {}",
                self.quantiles
            )));
        }
        if self.window_set.is_empty() || self.window_set.contains(&0) {
            return Err(EngineError::InvalidConfig(
                "window set must be non-empty with windows of at least one year".into(),
            ));
        }
        if let Some(pct) = self.cap_percentile {
            if !(pct > 0.0 && pct <= 100.0) {
                return Err(EngineError::InvalidConfig(format!(
                    "cap percentile must lie in (0, 100], got {pct}"
                )));
            }
        }
        Ok(())
    }
}

/// Which valuation metric drives the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortMetric {
    GaPe,
    Pe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeClass {
    Finite,
    Infinite,
}

/// A cohort entry carrying everything formation learned about the security.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortMember {
    pub security_id: SecurityId,
    pub price: f64,
    pub eps: f64,
    pub growth: f64,
    pub pe: f64,
    pub gape: GaPeOutcome,
}

/// A ranked entry: the sort key is always a finite number, `N*` standing in
/// for the infinite outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSecurity {
    pub security_id: SecurityId,
    pub metric_value: f64,
    pub outcome_class: OutcomeClass,
}

/// One quantile portfolio: equal-weighted at formation, weights positive
/// and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub label: String,
    pub holdings: BTreeMap<SecurityId, f64>,
}

/// The `q` portfolios of one formation event, lowest metric first.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSet {
    pub year: i32,
    pub quantiles: usize,
    pub portfolios: Vec<Portfolio>,
}

/// Builds the eligible cohort for one window: securities with a price at
/// the formation month, a live firm link, a market cap surviving the
/// percentile filter, and positive endpoint earnings for the window.
///
/// All pricing and earnings reads go through the audited view, so the
/// caller can assert the formation touched nothing beyond its cutoff.
pub fn cohort_members(
    view: &AsOfView<'_>,
    event: &FormationEvent,
    window: u32,
) -> Result<Vec<CohortMember>, EngineError> {
    event.validate()?;
    let as_of = event.as_of();

    // Cap filter runs on the whole March-priced universe, before the
    // earnings cuts shrink it.
    let mut priced: Vec<(&SecurityId, f64, f64)> = Vec::new();
    for security in view.securities() {
        if let Some(obs) = view.price_at(security, as_of) {
            priced.push((security, obs.close_price, obs.market_cap));
        }
    }
    if priced.is_empty() {
        return Err(EngineError::EmptyCohort {
            year: event.year,
            window,
        });
    }
    let cap_floor = event.cap_percentile.map(|pct| {
        let mut caps: Vec<f64> = priced.iter().map(|&(_, _, cap)| cap).collect();
        caps.sort_by(|a, b| b.total_cmp(a));
        let keep = ((pct / 100.0) * caps.len() as f64).floor().max(1.0) as usize;
        caps[keep.min(caps.len()) - 1]
    });

    let mut members = Vec::new();
    for (security, close_price, market_cap) in priced {
        if let Some(floor) = cap_floor {
            if market_cap < floor {
                continue;
            }
        }
        let Some(firm) = view.firm_for(security) else {
            continue;
        };
        let Some(e_end) = view.annual_earnings(firm, event.year - 1) else {
            continue;
        };
        let Some(e_start) = view.annual_earnings(firm, event.year - 1 - window as i32) else {
            continue;
        };
        let Ok(growth) = annualized_growth(e_end, e_start, window) else {
            continue; // non-positive endpoint earnings
        };
        let inputs = ValuationInputs::new(close_price, e_end, growth)
            .expect("formation inputs satisfy the valuation domain");
        members.push(CohortMember {
            security_id: security.clone(),
            price: close_price,
            eps: e_end,
            growth,
            pe: inputs.pe(),
            gape: ga_pe(&inputs),
        });
    }
    if members.is_empty() {
        return Err(EngineError::EmptyCohort {
            year: event.year,
            window,
        });
    }
    Ok(members)
}

/// Ranks cohort members under the chosen metric, ascending, ties broken by
/// security id.
///
/// For the growth-adjusted sort, infinite outcomes take the key
/// `N* = N_max + P/E_inf` where `N_max` is this cohort's highest finite
/// payback (zero when the cohort has no finite outcome at all), so they
/// always land after every finite entry.
pub fn rank_members(members: &[CohortMember], metric: SortMetric) -> Vec<RankedSecurity> {
    let n_max = members
        .iter()
        .filter_map(|m| m.gape.years())
        .fold(0.0f64, f64::max);
    let mut ranked: Vec<RankedSecurity> = members
        .iter()
        .map(|m| {
            let (metric_value, outcome_class) = match metric {
                SortMetric::Pe => (m.pe, OutcomeClass::Finite),
                SortMetric::GaPe => match m.gape {
                    GaPeOutcome::Finite { years } => (years, OutcomeClass::Finite),
                    GaPeOutcome::Infinite { .. } => {
                        let inputs = ValuationInputs::new(m.price, m.eps, m.growth)
                            .expect("member passed the valuation domain at formation");
                        let key = n_star(&inputs, n_max)
                            .expect("infinite outcome lies in the n_star region");
                        (key, OutcomeClass::Infinite)
                    }
                },
            };
            RankedSecurity {
                security_id: m.security_id.clone(),
                metric_value,
                outcome_class,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.metric_value
            .total_cmp(&b.metric_value)
            .then_with(|| a.security_id.cmp(&b.security_id))
    });
    ranked
}

/// Full formation for one window and metric: eligible cohort, ranked.
pub fn form_cohort(
    view: &AsOfView<'_>,
    event: &FormationEvent,
    window: u32,
    metric: SortMetric,
) -> Result<Vec<RankedSecurity>, EngineError> {
    Ok(rank_members(&cohort_members(view, event, window)?, metric))
}

/// Splits a ranked cohort into `q` equal-weighted portfolios.
///
/// Sizes differ by at most one; when the cohort does not divide evenly the
/// extra members go to the lowest-indexed (lowest-metric) portfolios.
pub fn quantile_assign(
    cohort: &[RankedSecurity],
    quantiles: usize,
    year: i32,
    window: u32,
) -> Result<PortfolioSet, EngineError> {
    debug_assert!(
        cohort
            .windows(2)
            .all(|w| w[0].metric_value <= w[1].metric_value),
        "cohort must arrive ranked ascending"
    );
    if cohort.len() < quantiles {
        return Err(EngineError::CohortTooSmall {
            year,
            window,
            size: cohort.len(),
            quantiles,
        });
    }
    let base = cohort.len() / quantiles;
    let remainder = cohort.len() % quantiles;
    let mut portfolios = Vec::with_capacity(quantiles);
    let mut cursor = 0usize;
    for index in 0..quantiles {
        let size = base + usize::from(index < remainder);
        let weight = 1.0 / size as f64;
        let holdings: BTreeMap<SecurityId, f64> = cohort[cursor..cursor + size]
            .iter()
            .map(|r| (r.security_id.clone(), weight))
            .collect();
        cursor += size;
        portfolios.push(Portfolio {
            label: format!("P_{}", index + 1),
            holdings,
        });
    }
    Ok(PortfolioSet {
        year,
        quantiles,
        portfolios,
    })
}

/// Averages holdings across the per-window realisations of each portfolio:
/// a security's weight is the mean of its per-window weights (zero where
/// absent), renormalized so each portfolio sums to one again.
///
/// Before renormalization the spread between the heaviest and lightest
/// member is bounded by the window count times the cohort-size ratio, which
/// is the "about 3 to 1" figure when three equal-sized cohorts are
/// averaged.
pub fn average_holdings(sets: &[PortfolioSet]) -> Result<PortfolioSet, EngineError> {
    let first = sets
        .first()
        .ok_or_else(|| EngineError::MismatchedSets("no sets to average".into()))?;
    for set in sets {
        if set.quantiles != first.quantiles || set.year != first.year {
            return Err(EngineError::MismatchedSets(format!(
                "({}, q={}) vs ({}, q={})",
                set.year, set.quantiles, first.year, first.quantiles
            )));
        }
    }
    let window_count = sets.len() as f64;
    let mut portfolios = Vec::with_capacity(first.quantiles);
    for index in 0..first.quantiles {
        let mut combined: BTreeMap<SecurityId, f64> = BTreeMap::new();
        for set in sets {
            for (security, weight) in &set.portfolios[index].holdings {
                *combined.entry(security.clone()).or_insert(0.0) += weight / window_count;
            }
        }
        let total: f64 = combined.values().sum();
        for weight in combined.values_mut() {
            *weight /= total;
        }
        portfolios.push(Portfolio {
            label: first.portfolios[index].label.clone(),
            holdings: combined,
        });
    }
    Ok(PortfolioSet {
        year: first.year,
        quantiles: first.quantiles,
        portfolios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(pairs: &[(&str, f64)]) -> Vec<RankedSecurity> {
        pairs
            .iter()
            .map(|(id, v)| RankedSecurity {
                security_id: SecurityId::from(*id),
                metric_value: *v,
                outcome_class: OutcomeClass::Finite,
            })
            .collect()
    }

    #[test]
    fn even_split_makes_equal_portfolios() {
        let cohort = ranked(&[
            ("a", 1.0),
            ("b", 2.0),
            ("c", 3.0),
            ("d", 4.0),
            ("e", 5.0),
            ("f", 6.0),
            ("g", 7.0),
            ("h", 8.0),
            ("i", 9.0),
            ("j", 10.0),
        ]);
        let set = quantile_assign(&cohort, 5, 1990, 1).unwrap();
        for p in &set.portfolios {
            assert_eq!(p.holdings.len(), 2);
            for w in p.holdings.values() {
                assert!((w - 0.5).abs() < 1e-15);
            }
        }
        assert_eq!(set.portfolios[0].label, "P_1");
        assert!(set.portfolios[0].holdings.contains_key(&"a".into()));
        assert!(set.portfolios[4].holdings.contains_key(&"j".into()));
    }

    #[test]
    fn remainder_goes_to_the_front() {
        let cohort: Vec<RankedSecurity> = (0..12)
            .map(|i| RankedSecurity {
                security_id: SecurityId::new(format!("s{i:02}")),
                metric_value: i as f64,
                outcome_class: OutcomeClass::Finite,
            })
            .collect();
        let set = quantile_assign(&cohort, 5, 1990, 1).unwrap();
        let sizes: Vec<usize> = set.portfolios.iter().map(|p| p.holdings.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2, 2]);
    }

    #[test]
    fn cohort_smaller_than_quantiles_is_an_error() {
        let cohort = ranked(&[("a", 1.0), ("b", 2.0)]);
        assert!(matches!(
            quantile_assign(&cohort, 5, 1991, 2),
            Err(EngineError::CohortTooSmall { year: 1991, .. })
        ));
    }

    #[test]
    fn ties_rank_by_security_id() {
        let members = vec![
            CohortMember {
                security_id: "zzz".into(),
                price: 10.0,
                eps: 1.0,
                growth: 0.0,
                pe: 10.0,
                gape: GaPeOutcome::Finite { years: 10.0 },
            },
            CohortMember {
                security_id: "aaa".into(),
                price: 20.0,
                eps: 2.0,
                growth: 0.0,
                pe: 10.0,
                gape: GaPeOutcome::Finite { years: 10.0 },
            },
        ];
        let ranked = rank_members(&members, SortMetric::GaPe);
        assert_eq!(ranked[0].security_id, "aaa".into());
        assert_eq!(ranked[1].security_id, "zzz".into());
    }

    #[test]
    fn infinite_outcomes_rank_after_every_finite_one() {
        let mut members = vec![
            CohortMember {
                security_id: "fin_hi".into(),
                price: 50.0,
                eps: 1.0,
                growth: 0.02,
                pe: 50.0,
                gape: GaPeOutcome::Finite { years: 38.6 },
            },
            CohortMember {
                security_id: "fin_lo".into(),
                price: 5.0,
                eps: 1.0,
                growth: 0.10,
                pe: 5.0,
                gape: GaPeOutcome::Finite { years: 4.2 },
            },
        ];
        // A contracting firm far below its bound.
        let inputs = ValuationInputs::new(10.0, 1.0, -0.20).unwrap();
        members.push(CohortMember {
            security_id: "dead".into(),
            price: 10.0,
            eps: 1.0,
            growth: -0.20,
            pe: 10.0,
            gape: ga_pe(&inputs),
        });
        let ranked = rank_members(&members, SortMetric::GaPe);
        assert_eq!(ranked.last().unwrap().security_id, "dead".into());
        assert_eq!(ranked.last().unwrap().outcome_class, OutcomeClass::Infinite);
        // N* = N_max + P/E_inf = 38.6 + 2.5
        assert!((ranked.last().unwrap().metric_value - 41.1).abs() < 1e-9);
    }

    #[test]
    fn averaging_identical_sets_is_identity() {
        let cohort = ranked(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]);
        let set = quantile_assign(&cohort, 2, 1990, 1).unwrap();
        let averaged = average_holdings(&[set.clone(), set.clone(), set.clone()]).unwrap();
        for (avg, orig) in averaged.portfolios.iter().zip(&set.portfolios) {
            assert_eq!(avg.holdings.len(), orig.holdings.len());
            for (security, weight) in &avg.holdings {
                assert!((weight - orig.holdings[security]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_window_membership_gets_a_third_of_the_weight() {
        // 100-strong portfolios; one security appears under one window only.
        let full: Vec<RankedSecurity> = (0..100)
            .map(|i| RankedSecurity {
                security_id: SecurityId::new(format!("s{i:03}")),
                metric_value: i as f64,
                outcome_class: OutcomeClass::Finite,
            })
            .collect();
        let weight = 0.01;
        let p_all: BTreeMap<SecurityId, f64> = full
            .iter()
            .map(|r| (r.security_id.clone(), weight))
            .collect();
        // Equal cohort sizes: the lone-window member is replaced, not
        // dropped, in the other two windows.
        let mut p_missing = p_all.clone();
        p_missing.remove(&SecurityId::from("s000"));
        p_missing.insert(SecurityId::from("s999"), weight);
        let mk = |holdings: BTreeMap<SecurityId, f64>| PortfolioSet {
            year: 1990,
            quantiles: 2,
            portfolios: vec![
                Portfolio {
                    label: "P_1".into(),
                    holdings,
                },
                Portfolio {
                    label: "P_2".into(),
                    holdings: [(SecurityId::from("other"), 1.0)].into_iter().collect(),
                },
            ],
        };
        let sets = [mk(p_all.clone()), mk(p_missing.clone()), mk(p_missing)];
        // Pre-normalization weight of s000 is 0.01/3.
        let mut pre: BTreeMap<SecurityId, f64> = BTreeMap::new();
        for set in &sets {
            for (s, w) in &set.portfolios[0].holdings {
                *pre.entry(s.clone()).or_insert(0.0) += w / 3.0;
            }
        }
        assert!((pre[&SecurityId::from("s000")] - 0.01 / 3.0).abs() < 1e-12);

        let averaged = average_holdings(&sets).unwrap();
        let total: f64 = averaged.portfolios[0].holdings.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // With equal cohort sizes the max/min pre-normalization ratio is
        // capped at the window count: here exactly 3 to 1, with the
        // lone-window member at the bottom of that spread.
        let max = pre.values().cloned().fold(f64::MIN, f64::max);
        let min = pre.values().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 3.0 + 1e-9);
        assert!((max / min - 3.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_quantiles_refuse_to_average() {
        let cohort = ranked(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]);
        let two = quantile_assign(&cohort, 2, 1990, 1).unwrap();
        let four = quantile_assign(&cohort, 4, 1990, 1).unwrap();
        assert!(matches!(
            average_holdings(&[two, four]),
            Err(EngineError::MismatchedSets(_))
        ));
    }
}
