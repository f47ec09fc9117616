//! The assembled in-memory universe: validated, linked, immutable after
//! construction, and wrapped by a point-in-time view for formation-time
//! access auditing.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use super::csv_io::{Dataset, DELISTINGS_FILE, EARNINGS_FILE, FACTORS_FILE, PRICES_FILE};
use super::{DataError, DelistingRecord, FactorMonth, LinkRecord};
use crate::growth::{align_fiscal_years, FiscalEarningsSeries};
use crate::types::{FirmId, SecurityId, YearMonth};

/// One month of pricing for one security, after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceObs {
    pub close_price: f64,
    pub total_return: f64,
    pub market_cap: f64,
}

/// Price data, earnings, links, delistings, and factors, cross-validated
/// and indexed for monthly lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    prices: BTreeMap<SecurityId, BTreeMap<YearMonth, PriceObs>>,
    delistings: BTreeMap<SecurityId, DelistingRecord>,
    links: BTreeMap<SecurityId, Vec<LinkRecord>>,
    earnings: BTreeMap<FirmId, FiscalEarningsSeries>,
    factors: BTreeMap<YearMonth, FactorMonth>,
}

/// Non-fatal findings from assembly. Hard violations (duplicates, link
/// overlaps, malformed rows) surface as [`DataError`] instead.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Securities with prices but no link row at all; excluded from
    /// formation, still tracked if already held.
    pub orphan_securities: Vec<SecurityId>,
    /// Holes strictly inside a security's price history, `(security,
    /// last month before the hole, first month after it)`.
    pub price_gaps: Vec<(SecurityId, YearMonth, YearMonth)>,
    /// Delisting records whose month is not the security's final price
    /// month, `(security, delisting month, last price month if any)`.
    pub misplaced_delistings: Vec<(SecurityId, YearMonth, Option<YearMonth>)>,
    /// Holes in the factor series, `(month before, month after)`.
    pub factor_gaps: Vec<(YearMonth, YearMonth)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.orphan_securities.is_empty()
            && self.price_gaps.is_empty()
            && self.misplaced_delistings.is_empty()
            && self.factor_gaps.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for security in &self.orphan_securities {
            writeln!(f, "orphan_security: {security} has prices but no link row")?;
        }
        for (security, before, after) in &self.price_gaps {
            writeln!(
                f,
                "price_gap: {security} missing between {before} and {after}"
            )?;
        }
        for (security, month, last) in &self.misplaced_delistings {
            match last {
                Some(last) => writeln!(
                    f,
                    "misplaced_delisting: {security} delists {month} but last price month is {last}"
                )?,
                None => writeln!(
                    f,
                    "misplaced_delisting: {security} delists {month} but has no prices"
                )?,
            }
        }
        for (before, after) in &self.factor_gaps {
            writeln!(f, "factor_gap: missing between {before} and {after}")?;
        }
        Ok(())
    }
}

impl Universe {
    /// Assembles and cross-validates a universe from raw records.
    ///
    /// Record order must match file order so duplicate diagnostics can name
    /// CSV lines (`index + 2`, one header line assumed).
    pub fn build(dataset: Dataset) -> Result<(Universe, ValidationReport), DataError> {
        let line = |index: usize| (index + 2) as u64;

        // Prices: at most one row per (security, month), positive price and
        // cap, return above -1.
        let mut prices: BTreeMap<SecurityId, BTreeMap<YearMonth, PriceObs>> = BTreeMap::new();
        let mut price_lines: BTreeMap<(SecurityId, YearMonth), u64> = BTreeMap::new();
        for (i, row) in dataset.prices.iter().enumerate() {
            check_row(
                PRICES_FILE,
                line(i),
                row.close_price.is_finite() && row.close_price > 0.0,
                || format!("close_price must be positive, got {}", row.close_price),
            )?;
            check_row(
                PRICES_FILE,
                line(i),
                row.market_cap.is_finite() && row.market_cap > 0.0,
                || format!("market_cap must be positive, got {}", row.market_cap),
            )?;
            check_row(
                PRICES_FILE,
                line(i),
                row.total_return.is_finite() && row.total_return >= -1.0,
                || format!("total_return must be at least -1, got {}", row.total_return),
            )?;
            let key = (row.security_id.clone(), row.month);
            if let Some(&first_line) = price_lines.get(&key) {
                return Err(DataError::DuplicateKey {
                    file: PRICES_FILE.to_string(),
                    key: format!("({}, {})", row.security_id, row.month),
                    first_line,
                    second_line: line(i),
                });
            }
            price_lines.insert(key, line(i));
            prices.entry(row.security_id.clone()).or_default().insert(
                row.month,
                PriceObs {
                    close_price: row.close_price,
                    total_return: row.total_return,
                    market_cap: row.market_cap,
                },
            );
        }

        // Delistings: one per security, return at least -1 when present.
        let mut delistings: BTreeMap<SecurityId, DelistingRecord> = BTreeMap::new();
        let mut delist_lines: BTreeMap<SecurityId, u64> = BTreeMap::new();
        for (i, row) in dataset.delistings.iter().enumerate() {
            if let Some(value) = row.delist_return {
                check_row(
                    DELISTINGS_FILE,
                    line(i),
                    value.is_finite() && value >= -1.0,
                    || format!("delist_return must be at least -1, got {value}"),
                )?;
            }
            if let Some(&first_line) = delist_lines.get(&row.security_id) {
                return Err(DataError::DuplicateKey {
                    file: DELISTINGS_FILE.to_string(),
                    key: row.security_id.to_string(),
                    first_line,
                    second_line: line(i),
                });
            }
            delist_lines.insert(row.security_id.clone(), line(i));
            delistings.insert(row.security_id.clone(), row.clone());
        }

        // Links: intervals for one security must not overlap.
        let mut links: BTreeMap<SecurityId, Vec<LinkRecord>> = BTreeMap::new();
        for row in &dataset.links {
            links
                .entry(row.security_id.clone())
                .or_default()
                .push(row.clone());
        }
        for (security, intervals) in &mut links {
            intervals.sort_by_key(|l| l.valid_from);
            for pair in intervals.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                let overlaps = a.valid_to.is_none_or(|end| end >= b.valid_from);
                if overlaps {
                    let fmt_to = |to: Option<YearMonth>| {
                        to.map_or_else(|| "open".to_string(), |m| m.to_string())
                    };
                    return Err(DataError::OverlappingLinks {
                        security: security.clone(),
                        a_from: a.valid_from,
                        a_to: fmt_to(a.valid_to),
                        b_from: b.valid_from,
                        b_to: fmt_to(b.valid_to),
                    });
                }
            }
        }

        // Factors: one row per month.
        let mut factors: BTreeMap<YearMonth, FactorMonth> = BTreeMap::new();
        let mut factor_lines: BTreeMap<YearMonth, u64> = BTreeMap::new();
        for (i, row) in dataset.factors.iter().enumerate() {
            let finite = row.market_return.is_finite()
                && row.risk_free.is_finite()
                && row.hml.is_finite()
                && row.smb.is_finite();
            check_row(FACTORS_FILE, line(i), finite, || {
                "factor values must be finite".to_string()
            })?;
            if let Some(&first_line) = factor_lines.get(&row.month) {
                return Err(DataError::DuplicateKey {
                    file: FACTORS_FILE.to_string(),
                    key: row.month.to_string(),
                    first_line,
                    second_line: line(i),
                });
            }
            factor_lines.insert(row.month, line(i));
            factors.insert(row.month, row.clone());
        }

        for (i, row) in dataset.earnings.iter().enumerate() {
            check_row(EARNINGS_FILE, line(i), row.eps.is_finite(), || {
                format!("eps must be finite, got {}", row.eps)
            })?;
        }
        let earnings = align_fiscal_years(&dataset.earnings)?
            .into_iter()
            .map(|s| (s.firm_id().clone(), s))
            .collect();

        let universe = Universe {
            prices,
            delistings,
            links,
            earnings,
            factors,
        };
        let report = universe.diagnose();
        Ok((universe, report))
    }

    fn diagnose(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (security, months) in &self.prices {
            if !self.links.contains_key(security) {
                report.orphan_securities.push(security.clone());
            }
            let mut prev: Option<YearMonth> = None;
            for &month in months.keys() {
                if let Some(p) = prev {
                    if month.months_since(p) > 1 {
                        report.price_gaps.push((security.clone(), p, month));
                    }
                }
                prev = Some(month);
            }
        }
        for (security, record) in &self.delistings {
            let last = self
                .prices
                .get(security)
                .and_then(|m| m.keys().next_back().copied());
            if last != Some(record.month) {
                report
                    .misplaced_delistings
                    .push((security.clone(), record.month, last));
            }
        }
        let mut prev: Option<YearMonth> = None;
        for &month in self.factors.keys() {
            if let Some(p) = prev {
                if month.months_since(p) > 1 {
                    report.factor_gaps.push((p, month));
                }
            }
            prev = Some(month);
        }
        report
    }

    pub fn securities(&self) -> impl Iterator<Item = &SecurityId> {
        self.prices.keys()
    }

    pub fn price_at(&self, security: &SecurityId, month: YearMonth) -> Option<&PriceObs> {
        self.prices.get(security)?.get(&month)
    }

    pub fn last_price_month(&self, security: &SecurityId) -> Option<YearMonth> {
        self.prices.get(security)?.keys().next_back().copied()
    }

    pub fn delisting_for(&self, security: &SecurityId) -> Option<&DelistingRecord> {
        self.delistings.get(security)
    }

    /// Firm linked to `security` during `month`, if any. Link exclusivity
    /// (at most one) is guaranteed by the overlap check at assembly.
    pub fn firm_for(&self, security: &SecurityId, month: YearMonth) -> Option<&FirmId> {
        self.links
            .get(security)?
            .iter()
            .find(|link| link.covers(month))
            .map(|link| &link.firm_id)
    }

    pub fn earnings_for(&self, firm: &FirmId) -> Option<&FiscalEarningsSeries> {
        self.earnings.get(firm)
    }

    pub fn factor(&self, month: YearMonth) -> Option<&FactorMonth> {
        self.factors.get(&month)
    }

    /// Factor rows covering exactly `[start, start + months)`, or `None` if
    /// any month is missing.
    pub fn factor_series(&self, start: YearMonth, months: usize) -> Option<Vec<FactorMonth>> {
        (0..months)
            .map(|i| self.factors.get(&start.plus_months(i as i64)).cloned())
            .collect()
    }

    /// Combined price view and linked fundamentals for one month.
    pub fn security_record_at(
        &self,
        security: &SecurityId,
        month: YearMonth,
    ) -> Option<SecurityView<'_>> {
        let price = self.price_at(security, month)?;
        let firm_id = self.firm_for(security, month)?;
        Some(SecurityView {
            price,
            firm_id,
            earnings: self.earnings_for(firm_id),
        })
    }

    /// Sensitivity variant: monthly returns recomputed from close prices
    /// (`close_m / close_{m-1} - 1`), ignoring distributions. Months with no
    /// prior close keep their reported total return.
    pub fn with_price_only_returns(&self) -> Universe {
        let mut out = self.clone();
        for months in out.prices.values_mut() {
            let mut prev: Option<(YearMonth, f64)> = None;
            for (&month, obs) in months.iter_mut() {
                if let Some((prev_month, prev_close)) = prev {
                    if month.months_since(prev_month) == 1 {
                        obs.total_return = obs.close_price / prev_close - 1.0;
                    }
                }
                prev = Some((month, obs.close_price));
            }
        }
        out
    }

    /// Span of months covered by any price data.
    pub fn price_span(&self) -> Option<(YearMonth, YearMonth)> {
        let mut first: Option<YearMonth> = None;
        let mut last: Option<YearMonth> = None;
        for months in self.prices.values() {
            if let (Some(&a), Some(&b)) = (months.keys().next(), months.keys().next_back()) {
                first = Some(first.map_or(a, |f: YearMonth| f.min(a)));
                last = Some(last.map_or(b, |l: YearMonth| l.max(b)));
            }
        }
        first.zip(last)
    }
}

/// One security's month snapshot joined with its linked firm.
#[derive(Debug, Clone, Copy)]
pub struct SecurityView<'a> {
    pub price: &'a PriceObs,
    pub firm_id: &'a FirmId,
    pub earnings: Option<&'a FiscalEarningsSeries>,
}

/// Access counters recorded by [`AsOfView`] during one formation event.
///
/// A correct formation never touches prices after the formation month nor
/// earnings for fiscal years at or beyond the formation year; any such
/// access counts as a violation here rather than being silently served.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FormationAudit {
    pub price_accesses: u64,
    pub post_formation_price_accesses: u64,
    pub earnings_accesses: u64,
    pub post_formation_earnings_accesses: u64,
}

impl FormationAudit {
    pub fn violations(&self) -> u64 {
        self.post_formation_price_accesses + self.post_formation_earnings_accesses
    }

    pub fn absorb(&mut self, other: &FormationAudit) {
        self.price_accesses += other.price_accesses;
        self.post_formation_price_accesses += other.post_formation_price_accesses;
        self.earnings_accesses += other.earnings_accesses;
        self.post_formation_earnings_accesses += other.post_formation_earnings_accesses;
    }
}

/// Point-in-time wrapper used by portfolio formation.
///
/// Every data request is recorded against the formation cutoff: prices may
/// only be read up to the formation month, earnings only for fiscal years
/// strictly before the formation year. Requests beyond the cutoff are still
/// answered (the audit, not a panic, is the detection mechanism) so tests
/// can assert the recorded counts are zero.
pub struct AsOfView<'a> {
    universe: &'a Universe,
    formation_month: YearMonth,
    formation_year: i32,
    audit: RefCell<FormationAudit>,
}

impl<'a> AsOfView<'a> {
    pub fn new(universe: &'a Universe, formation_month: YearMonth, formation_year: i32) -> Self {
        Self {
            universe,
            formation_month,
            formation_year,
            audit: RefCell::new(FormationAudit::default()),
        }
    }

    pub fn formation_month(&self) -> YearMonth {
        self.formation_month
    }

    pub fn formation_year(&self) -> i32 {
        self.formation_year
    }

    pub fn audit(&self) -> FormationAudit {
        *self.audit.borrow()
    }

    pub fn securities(&self) -> impl Iterator<Item = &'a SecurityId> {
        self.universe.securities()
    }

    pub fn price_at(&self, security: &SecurityId, month: YearMonth) -> Option<&'a PriceObs> {
        let mut audit = self.audit.borrow_mut();
        audit.price_accesses += 1;
        if month > self.formation_month {
            audit.post_formation_price_accesses += 1;
        }
        self.universe.price_at(security, month)
    }

    pub fn firm_for(&self, security: &SecurityId) -> Option<&'a FirmId> {
        self.universe.firm_for(security, self.formation_month)
    }

    pub fn annual_earnings(&self, firm: &FirmId, fiscal_year: i32) -> Option<f64> {
        let mut audit = self.audit.borrow_mut();
        audit.earnings_accesses += 1;
        if fiscal_year >= self.formation_year {
            audit.post_formation_earnings_accesses += 1;
        }
        self.universe.earnings_for(firm)?.annual(fiscal_year)
    }
}

fn check_row(
    file: &str,
    line: u64,
    ok: bool,
    message: impl FnOnce() -> String,
) -> Result<(), DataError> {
    if ok {
        Ok(())
    } else {
        Err(DataError::Row {
            file: file.to_string(),
            line,
            message: message(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MonthlyPriceRecord;
    use crate::growth::QuarterlyEarningsRecord;
    use crate::types::ym;

    fn price(security: &str, month: YearMonth, close: f64) -> MonthlyPriceRecord {
        MonthlyPriceRecord {
            security_id: security.into(),
            month,
            close_price: close,
            total_return: 0.01,
            market_cap: 100.0,
        }
    }

    fn link(firm: &str, security: &str, from: YearMonth, to: Option<YearMonth>) -> LinkRecord {
        LinkRecord {
            firm_id: firm.into(),
            security_id: security.into(),
            valid_from: from,
            valid_to: to,
        }
    }

    fn quarters(firm: &str, year: i32, eps: f64) -> Vec<QuarterlyEarningsRecord> {
        [3u32, 6, 9, 12]
            .iter()
            .map(|&m| QuarterlyEarningsRecord {
                firm_id: firm.into(),
                quarter_end: chrono::NaiveDate::from_ymd_opt(year, m, 28).unwrap(),
                eps: eps / 4.0,
            })
            .collect()
    }

    fn clean_fixture() -> Dataset {
        let mut earnings = Vec::new();
        for firm in ["F1", "F2", "F3"] {
            earnings.extend(quarters(firm, 1989, 1.0));
        }
        Dataset {
            prices: vec![
                price("S1", ym(1990, 3), 10.0),
                price("S2", ym(1990, 3), 20.0),
                price("S3", ym(1990, 3), 30.0),
            ],
            earnings,
            delistings: vec![],
            links: vec![
                link("F1", "S1", ym(1980, 1), None),
                link("F2", "S2", ym(1980, 1), None),
                link("F3", "S3", ym(1980, 1), None),
            ],
            factors: vec![FactorMonth {
                month: ym(1990, 3),
                market_return: 0.01,
                risk_free: 0.002,
                hml: 0.0,
                smb: 0.0,
            }],
        }
    }

    #[test]
    fn clean_fixture_loads_with_empty_diagnostics() {
        let (universe, report) = Universe::build(clean_fixture()).unwrap();
        assert!(report.is_clean(), "{report}");
        assert_eq!(universe.securities().count(), 3);
    }

    #[test]
    fn duplicate_price_row_names_both_lines() {
        let mut dataset = clean_fixture();
        dataset.prices.push(price("S1", ym(1990, 3), 11.0));
        let err = Universe::build(dataset).unwrap_err();
        match err {
            DataError::DuplicateKey {
                file,
                first_line,
                second_line,
                ..
            } => {
                assert_eq!(file, "prices.csv");
                assert_eq!(first_line, 2);
                assert_eq!(second_line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn orphan_security_is_reported_not_fatal() {
        let mut dataset = clean_fixture();
        dataset.prices.push(price("S9", ym(1990, 3), 5.0));
        let (universe, report) = Universe::build(dataset).unwrap();
        assert_eq!(report.orphan_securities, vec![SecurityId::from("S9")]);
        assert!(universe.firm_for(&"S9".into(), ym(1990, 3)).is_none());
    }

    #[test]
    fn overlapping_links_are_a_hard_error() {
        let mut dataset = clean_fixture();
        dataset
            .links
            .push(link("F9", "S1", ym(1985, 1), Some(ym(1991, 1))));
        assert!(matches!(
            Universe::build(dataset),
            Err(DataError::OverlappingLinks { .. })
        ));
    }

    #[test]
    fn link_eras_resolve_per_month() {
        let mut dataset = clean_fixture();
        dataset.links = vec![
            link("F1", "S1", ym(1980, 1), Some(ym(1990, 6))),
            link("F2", "S1", ym(1990, 7), None),
            link("F2", "S2", ym(1980, 1), None),
            link("F3", "S3", ym(1980, 1), None),
        ];
        let (universe, _) = Universe::build(dataset).unwrap();
        assert_eq!(
            universe.firm_for(&"S1".into(), ym(1990, 6)),
            Some(&"F1".into())
        );
        assert_eq!(
            universe.firm_for(&"S1".into(), ym(1990, 7)),
            Some(&"F2".into())
        );
        assert_eq!(universe.firm_for(&"S1".into(), ym(1979, 12)), None);
    }

    #[test]
    fn security_record_at_respects_link_validity() {
        let mut dataset = clean_fixture();
        dataset.links[0].valid_from = ym(1990, 4);
        let (universe, _) = Universe::build(dataset).unwrap();
        assert!(universe
            .security_record_at(&"S1".into(), ym(1990, 3))
            .is_none());
        assert!(universe
            .security_record_at(&"S2".into(), ym(1990, 3))
            .is_some());
    }

    #[test]
    fn misplaced_delisting_is_flagged() {
        let mut dataset = clean_fixture();
        dataset.prices.push(price("S1", ym(1990, 4), 10.0));
        dataset.delistings.push(DelistingRecord {
            security_id: "S1".into(),
            month: ym(1990, 3),
            delist_return: Some(-0.5),
        });
        let (_, report) = Universe::build(dataset).unwrap();
        assert_eq!(
            report.misplaced_delistings,
            vec![("S1".into(), ym(1990, 3), Some(ym(1990, 4)))]
        );
    }

    #[test]
    fn price_gaps_are_reported() {
        let mut dataset = clean_fixture();
        dataset.prices.push(price("S1", ym(1990, 6), 10.0));
        let (_, report) = Universe::build(dataset).unwrap();
        assert_eq!(
            report.price_gaps,
            vec![("S1".into(), ym(1990, 3), ym(1990, 6))]
        );
    }

    #[test]
    fn negative_close_price_is_a_row_error() {
        let mut dataset = clean_fixture();
        dataset.prices[1].close_price = -3.0;
        let err = Universe::build(dataset).unwrap_err();
        match err {
            DataError::Row { file, line, .. } => {
                assert_eq!(file, "prices.csv");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn as_of_view_records_post_formation_accesses() {
        let mut dataset = clean_fixture();
        dataset.prices.push(price("S1", ym(1990, 4), 10.0));
        dataset.earnings.extend(quarters("F1", 1990, 2.0));
        let (universe, _) = Universe::build(dataset).unwrap();
        let view = AsOfView::new(&universe, ym(1990, 3), 1990);

        view.price_at(&"S1".into(), ym(1990, 3));
        view.annual_earnings(&"F1".into(), 1989);
        assert_eq!(view.audit().violations(), 0);

        view.price_at(&"S1".into(), ym(1990, 4));
        view.annual_earnings(&"F1".into(), 1990);
        let audit = view.audit();
        assert_eq!(audit.post_formation_price_accesses, 1);
        assert_eq!(audit.post_formation_earnings_accesses, 1);
        assert_eq!(audit.violations(), 2);
        assert_eq!(audit.price_accesses, 2);
        assert_eq!(audit.earnings_accesses, 2);
    }
}
