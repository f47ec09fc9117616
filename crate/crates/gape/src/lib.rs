//! Growth-adjusted price-earnings valuation and a sorted-portfolio
//! backtesting engine.
//!
//! The centre of the crate is a payback-period reading of the
//! price-earnings ratio: instead of assuming flat earnings, the
//! growth-adjusted measure asks how many years of earnings *growing at
//! rate `g`* it takes to repay the share price, with a closed form, an
//! existence bound, and a ranking key for the securities whose earnings
//! contract too fast to ever repay. Around that sit the pieces an
//! empirical study needs:
//!
//! - [`valuation`]: the payback measures, solvency bound, ranking key,
//!   PEG measures, and the dividend-discount fair multiple;
//! - [`growth`]: fiscal-year alignment of quarterly earnings and the
//!   annualized historical growth estimator;
//! - [`data`]: CSV ingestion, validation, the linked universe, and a
//!   seeded synthetic generator with planted oracles;
//! - [`portfolio`]: annual quantile formation, window averaging, and
//!   monthly tracking with delisting semantics;
//! - [`stats`]: annualized returns, Sharpe ratios, paired t-tests, and the
//!   three-factor regression, with the distribution functions built in;
//! - [`report`]: the CSV tables and plot data a backtest emits, plus
//!   readers for them.
//!
//! A quick taste of the core measure:
//!
//! ```
//! use gape::valuation::{ga_pe, peg_payback_period, ValuationInputs};
//!
//! // Price 10, trailing EPS 1, earnings growing 10% a year.
//! let v = ValuationInputs::new(10.0, 1.0, 0.10)?;
//! let years = ga_pe(&v).years().unwrap();
//! assert!((years - 6.7845).abs() < 1e-4);
//! assert_eq!(peg_payback_period(&v), Some(7));
//! # Ok::<(), gape::valuation::ValuationError>(())
//! ```

pub mod data;
pub mod growth;
pub mod portfolio;
pub mod report;
pub mod stats;
pub mod types;
pub mod valuation;

#[cfg(doctest)]
mod book;
