//! Fiscal-year alignment of quarterly earnings and historical growth
//! estimation.
//!
//! Reporting calendars differ across firms, so annual figures are rebuilt
//! from quarterly data: each firm's fiscal year `n` is redefined as the four
//! successive quarters whose final quarter ends between October and December
//! of calendar year `n`. A year with any constituent quarter missing is left
//! absent, which excludes the firm from the following year's formation.
//!
//! Growth for formation year `n` over a `k`-year window is the annualized
//! ratio of the endpoint years, `(E_{n-1} / E_{n-k-1})^(1/k) - 1`, defined
//! only when both endpoints are positive. Interior years of the window do
//! not gate eligibility.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::FirmId;

#[derive(Debug, Error, PartialEq)]
pub enum GrowthError {
    /// Two quarterly records land in the same calendar month for one firm,
    /// which makes the four-quarter chain ambiguous.
    #[error("firm {firm}: quarters ending {first} and {second} fall in the same month")]
    DuplicateQuarter {
        firm: FirmId,
        first: NaiveDate,
        second: NaiveDate,
    },
    /// Endpoint earnings must be strictly positive for the ratio estimator.
    /// Distinct from a data error: the firm simply does not qualify.
    #[error("ineligible: endpoint earnings must be positive (e_end={e_end}, e_start={e_start})")]
    IneligibleEarnings { e_end: f64, e_start: f64 },
    #[error("growth window must be at least 1 year, got {0}")]
    InvalidWindow(u32),
}

/// One reported quarter of earnings per share for a firm. `eps` may be
/// negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterlyEarningsRecord {
    pub firm_id: FirmId,
    pub quarter_end: NaiveDate,
    pub eps: f64,
}

/// Per-firm annual earnings keyed by redefined fiscal year.
///
/// An entry exists only when all four constituent quarters were reported.
#[derive(Debug, Clone, PartialEq)]
pub struct FiscalEarningsSeries {
    firm_id: FirmId,
    annual_eps: BTreeMap<i32, f64>,
}

impl FiscalEarningsSeries {
    pub fn new(firm_id: FirmId, annual_eps: BTreeMap<i32, f64>) -> Self {
        Self {
            firm_id,
            annual_eps,
        }
    }

    pub fn firm_id(&self) -> &FirmId {
        &self.firm_id
    }

    /// Four-quarter EPS sum for fiscal year `n`, if complete.
    pub fn annual(&self, year: i32) -> Option<f64> {
        self.annual_eps.get(&year).copied()
    }

    pub fn years(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.annual_eps.iter().map(|(&y, &e)| (y, e))
    }

    pub fn is_empty(&self) -> bool {
        self.annual_eps.is_empty()
    }
}

/// Estimated annual growth rate for one firm, formation year, and window.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthEstimate {
    pub firm_id: FirmId,
    pub formation_year: i32,
    pub window: u32,
    pub growth: f64,
}

/// Groups quarterly records into per-firm fiscal series.
///
/// Fiscal year `n` is anchored on the latest quarter ending in October,
/// November, or December of calendar year `n`; the three quarters at exactly
/// 3, 6, and 9 months earlier complete it. Any missing quarter leaves the
/// year absent.
pub fn align_fiscal_years(
    records: &[QuarterlyEarningsRecord],
) -> Result<Vec<FiscalEarningsSeries>, GrowthError> {
    // month index -> (quarter_end, eps), per firm
    let mut by_firm: BTreeMap<&FirmId, BTreeMap<i64, (NaiveDate, f64)>> = BTreeMap::new();
    for record in records {
        let idx = month_index(record.quarter_end);
        let quarters = by_firm.entry(&record.firm_id).or_default();
        if let Some((existing, _)) = quarters.get(&idx) {
            return Err(GrowthError::DuplicateQuarter {
                firm: record.firm_id.clone(),
                first: *existing,
                second: record.quarter_end,
            });
        }
        quarters.insert(idx, (record.quarter_end, record.eps));
    }

    let mut out = Vec::with_capacity(by_firm.len());
    for (firm_id, quarters) in by_firm {
        let mut annual = BTreeMap::new();
        let fiscal_years: BTreeSet<i32> = quarters
            .values()
            .filter(|(date, _)| date.month() >= 10)
            .map(|(date, _)| date.year())
            .collect();
        for year in fiscal_years {
            // Latest October-December quarter of this calendar year anchors
            // the fiscal year.
            let anchor = (10..=12)
                .rev()
                .map(|m| i64::from(year) * 12 + i64::from(m) - 1)
                .find(|idx| quarters.contains_key(idx))
                .expect("year came from an Oct-Dec quarter");
            let sum: Option<f64> = (0..4)
                .map(|q| quarters.get(&(anchor - 3 * q)).map(|(_, eps)| *eps))
                .sum();
            if let Some(total) = sum {
                annual.insert(year, total);
            }
        }
        out.push(FiscalEarningsSeries::new(firm_id.clone(), annual));
    }
    Ok(out)
}

fn month_index(date: NaiveDate) -> i64 {
    i64::from(date.year()) * 12 + i64::from(date.month()) - 1
}

/// Annualized growth between two positive endpoint earnings `k` years apart:
/// `(e_end / e_start)^(1/k) - 1`. Always greater than -1.
pub fn annualized_growth(e_end: f64, e_start: f64, k: u32) -> Result<f64, GrowthError> {
    if k == 0 {
        return Err(GrowthError::InvalidWindow(k));
    }
    let usable = |e: f64| e.is_finite() && e > 0.0;
    if !usable(e_end) || !usable(e_start) {
        return Err(GrowthError::IneligibleEarnings { e_end, e_start });
    }
    Ok((e_end / e_start).powf(1.0 / f64::from(k)) - 1.0)
}

/// Growth estimate for `formation_year` over `window` years, or `None` when
/// the firm fails the endpoint requirements (either endpoint year missing or
/// non-positive).
pub fn growth_for(
    series: &FiscalEarningsSeries,
    formation_year: i32,
    window: u32,
) -> Option<GrowthEstimate> {
    let e_end = series.annual(formation_year - 1)?;
    let e_start = series.annual(formation_year - 1 - window as i32)?;
    let growth = annualized_growth(e_end, e_start, window).ok()?;
    Some(GrowthEstimate {
        firm_id: series.firm_id().clone(),
        formation_year,
        window,
        growth,
    })
}

/// Firms whose endpoint years `n-1` and `n-k-1` are both present and
/// strictly positive.
pub fn eligible_firms<'a>(
    series: impl IntoIterator<Item = &'a FiscalEarningsSeries>,
    formation_year: i32,
    window: u32,
) -> BTreeSet<FirmId> {
    series
        .into_iter()
        .filter(|s| {
            let end = s.annual(formation_year - 1);
            let start = s.annual(formation_year - 1 - window as i32);
            matches!((end, start), (Some(e), Some(s)) if e > 0.0 && s > 0.0)
        })
        .map(|s| s.firm_id().clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rec(firm: &str, date: &str, eps: f64) -> QuarterlyEarningsRecord {
        QuarterlyEarningsRecord {
            firm_id: firm.into(),
            quarter_end: date.parse().unwrap(),
            eps,
        }
    }

    #[test]
    fn four_march_aligned_quarters_sum() {
        let records = vec![
            rec("A", "1995-03-31", 0.25),
            rec("A", "1995-06-30", 0.25),
            rec("A", "1995-09-30", 0.25),
            rec("A", "1995-12-31", 0.25),
        ];
        let series = align_fiscal_years(&records).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].annual(1995), Some(1.0));
    }

    #[test]
    fn missing_quarter_leaves_year_absent() {
        let records = vec![
            rec("A", "1996-03-31", 0.25),
            rec("A", "1996-06-30", 0.25),
            rec("A", "1996-09-30", 0.25),
            // 1996-12 never reported
        ];
        let series = align_fiscal_years(&records).unwrap();
        assert_eq!(series[0].annual(1996), None);
    }

    #[test]
    fn november_final_quarter_assigns_fiscal_year() {
        let records = vec![
            rec("A", "1997-02-28", 0.1),
            rec("A", "1997-05-31", 0.2),
            rec("A", "1997-08-31", 0.3),
            rec("A", "1997-11-30", 0.4),
        ];
        let series = align_fiscal_years(&records).unwrap();
        assert_relative_eq!(series[0].annual(1997).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn duplicate_month_is_a_data_error() {
        let records = vec![rec("A", "1995-12-30", 0.25), rec("A", "1995-12-31", 0.30)];
        assert!(matches!(
            align_fiscal_years(&records),
            Err(GrowthError::DuplicateQuarter { .. })
        ));
    }

    #[test]
    fn consecutive_fiscal_years_share_no_quarters() {
        let mut records = Vec::new();
        for (i, date) in [
            "1994-03-31",
            "1994-06-30",
            "1994-09-30",
            "1994-12-31",
            "1995-03-31",
            "1995-06-30",
            "1995-09-30",
            "1995-12-31",
        ]
        .iter()
        .enumerate()
        {
            records.push(rec("A", date, (i + 1) as f64 * 0.1));
        }
        let series = align_fiscal_years(&records).unwrap();
        assert_relative_eq!(series[0].annual(1994).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(series[0].annual(1995).unwrap(), 2.6, max_relative = 1e-12);
    }

    #[test]
    fn annualized_growth_examples() {
        assert_relative_eq!(
            annualized_growth(1.44, 1.0, 2).unwrap(),
            0.20,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            annualized_growth(2.0, 1.0, 1).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            annualized_growth(1.0, 8.0, 3).unwrap(),
            -0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn annualized_growth_rejects_non_positive_endpoints() {
        assert!(matches!(
            annualized_growth(0.0, 1.0, 1),
            Err(GrowthError::IneligibleEarnings { .. })
        ));
        assert!(annualized_growth(1.0, -0.5, 2).is_err());
        assert!(annualized_growth(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn eligibility_requires_positive_endpoints_only() {
        let mut a = BTreeMap::new();
        a.insert(1996, 0.8); // E_{n-4}
        a.insert(1997, -2.0); // interior year may be negative
        a.insert(1999, 1.2); // E_{n-1}
        let a = FiscalEarningsSeries::new("A".into(), a);

        let mut b = BTreeMap::new();
        b.insert(1998, -0.1);
        b.insert(1999, 1.2);
        let b = FiscalEarningsSeries::new("B".into(), b);

        let mut c = BTreeMap::new();
        c.insert(1999, 1.2); // E_{n-2} missing entirely
        let c = FiscalEarningsSeries::new("C".into(), c);

        let all = [a, b, c];
        let eligible_k3 = eligible_firms(&all, 2000, 3);
        assert!(eligible_k3.contains(&FirmId::from("A")));
        assert!(!eligible_k3.contains(&FirmId::from("B")));

        let eligible_k1 = eligible_firms(&all, 2000, 1);
        assert!(!eligible_k1.contains(&FirmId::from("B"))); // negative E_{n-2}
        assert!(!eligible_k1.contains(&FirmId::from("C"))); // missing E_{n-2}
    }

    #[test]
    fn window_three_consults_nothing_before_year_minus_four() {
        // Only years Y-4 and Y-1 exist; the estimate must still form.
        let mut eps = BTreeMap::new();
        eps.insert(1986, 1.0);
        eps.insert(1989, 1.331);
        let series = FiscalEarningsSeries::new("A".into(), eps);
        let est = growth_for(&series, 1990, 3).unwrap();
        assert_relative_eq!(est.growth, 0.10, max_relative = 1e-9);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ratio_form_ignores_scale(
                e in 0.01f64..1e6,
                c in 0.01f64..1e4,
                k in 1u32..=3,
            ) {
                let direct = annualized_growth(e * c, e, k).unwrap();
                let scaled = annualized_growth(10.0 * e * c, 10.0 * e, k).unwrap();
                prop_assert!((direct - scaled).abs() <= 1e-12 * direct.abs().max(1.0));
            }

            #[test]
            fn flat_earnings_give_zero_growth(e in 0.01f64..1e6, k in 1u32..=3) {
                prop_assert_eq!(annualized_growth(e, e, k).unwrap(), 0.0);
            }

            #[test]
            fn compounding_identity(
                e_start in 0.01f64..1e5,
                e_end in 0.01f64..1e5,
                k in 1u32..=3,
            ) {
                let g = annualized_growth(e_end, e_start, k).unwrap();
                prop_assert!(g > -1.0);
                let recompounded = e_start * (1.0 + g).powi(k as i32);
                prop_assert!(
                    (recompounded - e_end).abs() <= 1e-12 * e_end,
                    "start={e_start} end={e_end} k={k} g={g} recompounded={recompounded}"
                );
            }
        }
    }
}
