//! Shared domain primitives: identifiers, calendar month keys, and monthly
//! return series.
//!
//! Everything downstream operates at monthly resolution, so the month key
//! [`YearMonth`] is the only calendar type most of the crate touches.
//! Day-level dates appear solely in quarterly earnings records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque firm identifier (the unit that reports earnings).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmId(String);

/// Opaque security identifier (the unit that trades and has prices).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityId(String);

macro_rules! id_impls {
    ($t:ident) => {
        impl $t {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $t {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $t {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_impls!(FirmId);
id_impls!(SecurityId);

/// Calendar month key, e.g. `1990-03`.
///
/// Ordered chronologically. Serialized as the string `YYYY-MM` so CSV and
/// JSON carry the same representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

/// Error for malformed month keys or return series.
#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("invalid month key `{0}`: expected YYYY-MM with month 01-12")]
    InvalidMonth(String),
    #[error("return series months must be contiguous: {prev} is not followed by {next}")]
    NonContiguous { prev: YearMonth, next: YearMonth },
    #[error("monthly return {value} at {month} is below -1")]
    ReturnBelowMinusOne { month: YearMonth, value: f64 },
    #[error("return series may not be empty")]
    Empty,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, SeriesError> {
        if (1..=12).contains(&month) {
            Ok(Self { year, month })
        } else {
            Err(SeriesError::InvalidMonth(format!("{year:04}-{month:02}")))
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0, the internal arithmetic basis.
    fn index(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    fn from_index(index: i64) -> Self {
        let year = index.div_euclid(12);
        let month = index.rem_euclid(12) + 1;
        Self {
            year: year as i32,
            month: month as u32,
        }
    }

    pub fn next(self) -> Self {
        self.plus_months(1)
    }

    pub fn plus_months(self, months: i64) -> Self {
        Self::from_index(self.index() + months)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: Self) -> i64 {
        self.index() - other.index()
    }

    /// Inclusive range of months from `self` through `end`.
    pub fn through(self, end: Self) -> impl Iterator<Item = YearMonth> {
        (self.index()..=end.index()).map(YearMonth::from_index)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeriesError::InvalidMonth(s.to_owned());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered monthly returns on contiguous, strictly increasing month keys.
///
/// This is the substrate every statistic operates on. The constructor
/// enforces contiguity and the `>= -1` floor so downstream code never has
/// to re-check either.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    start: YearMonth,
    returns: Vec<f64>,
}

impl ReturnSeries {
    /// Builds a series from `(month, return)` pairs already in order.
    pub fn from_pairs(pairs: Vec<(YearMonth, f64)>) -> Result<Self, SeriesError> {
        let mut iter = pairs.into_iter();
        let (start, first) = iter.next().ok_or(SeriesError::Empty)?;
        let mut series = Self {
            start,
            returns: Vec::new(),
        };
        series.check_value(start, first)?;
        series.returns.push(first);
        for (month, value) in iter {
            series.push(month, value)?;
        }
        Ok(series)
    }

    /// Builds a series from consecutive returns beginning at `start`.
    pub fn from_start(start: YearMonth, returns: Vec<f64>) -> Result<Self, SeriesError> {
        if returns.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (i, &value) in returns.iter().enumerate() {
            let month = start.plus_months(i as i64);
            if value < -1.0 || !value.is_finite() {
                return Err(SeriesError::ReturnBelowMinusOne { month, value });
            }
        }
        Ok(Self { start, returns })
    }

    fn check_value(&self, month: YearMonth, value: f64) -> Result<(), SeriesError> {
        if value < -1.0 || !value.is_finite() {
            Err(SeriesError::ReturnBelowMinusOne { month, value })
        } else {
            Ok(())
        }
    }

    /// Appends the next month's return; `month` must directly follow the
    /// current last month.
    pub fn push(&mut self, month: YearMonth, value: f64) -> Result<(), SeriesError> {
        let expected = self.end().next();
        if month != expected {
            return Err(SeriesError::NonContiguous {
                prev: self.end(),
                next: month,
            });
        }
        self.check_value(month, value)?;
        self.returns.push(value);
        Ok(())
    }

    /// Appends another contiguous series (its first month must follow ours).
    pub fn extend(&mut self, other: &ReturnSeries) -> Result<(), SeriesError> {
        for (month, value) in other.iter() {
            self.push(month, value)?;
        }
        Ok(())
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    pub fn end(&self) -> YearMonth {
        self.start.plus_months(self.returns.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.returns
    }

    pub fn get(&self, month: YearMonth) -> Option<f64> {
        let offset = month.months_since(self.start);
        if offset < 0 {
            return None;
        }
        self.returns.get(offset as usize).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (YearMonth, f64)> + '_ {
        self.returns
            .iter()
            .enumerate()
            .map(|(i, &r)| (self.start.plus_months(i as i64), r))
    }

    /// True when both series cover exactly the same month keys.
    pub fn same_months(&self, other: &ReturnSeries) -> bool {
        self.start == other.start && self.returns.len() == other.returns.len()
    }
}

/// Convenience constructor used throughout tests and examples.
pub fn ym(year: i32, month: u32) -> YearMonth {
    YearMonth::new(year, month).expect("month in 1..=12")
}
