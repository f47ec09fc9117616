//! Compiles every code block in the guide (`book/`) as a doctest, so the
//! narrative chapters can never drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/payback-measures.md")]
pub mod payback_measures {}

#[doc = include_str!("../../../book/src/growth-adjusted-pe.md")]
pub mod growth_adjusted_pe {}

#[doc = include_str!("../../../book/src/estimating-growth.md")]
pub mod estimating_growth {}

#[doc = include_str!("../../../book/src/data-formats.md")]
pub mod data_formats {}

#[doc = include_str!("../../../book/src/backtest-protocol.md")]
pub mod backtest_protocol {}

#[doc = include_str!("../../../book/src/statistics.md")]
pub mod statistics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
