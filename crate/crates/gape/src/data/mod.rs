//! Loading, validation, and linkage of the five input datasets, plus the
//! seeded synthetic generator used for desk-scale studies.
//!
//! Datasets and their CSV files (UTF-8, header row required, columns in any
//! order):
//!
//! | file                     | columns                                                        |
//! |--------------------------|----------------------------------------------------------------|
//! | `prices.csv`             | `security_id, month, close_price, total_return, market_cap`    |
//! | `earnings_quarterly.csv` | `firm_id, quarter_end, eps` (`quarter_end` as ISO-8601 date)   |
//! | `delistings.csv`         | `security_id, month, delist_return` (return may be empty)      |
//! | `links.csv`              | `firm_id, security_id, valid_from, valid_to` (empty = open)    |
//! | `factors.csv`            | `month, market_return, risk_free, hml, smb`                    |
//!
//! Month keys are `YYYY-MM` strings. Prices and EPS must arrive on a
//! consistent per-share basis (split-adjusted upstream); whether EPS is
//! basic or diluted is likewise the caller's choice, applied consistently.

mod csv_io;
mod synthetic;
mod universe;

pub(crate) use csv_io::write_atomic;
pub use csv_io::{load_dataset, write_dataset, Dataset};
pub use synthetic::{
    generate_synthetic, FirmPlan, StratumPlan, SyntheticError, SyntheticManifest, SyntheticSpec,
};
pub use universe::{AsOfView, FormationAudit, PriceObs, SecurityView, Universe, ValidationReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::GrowthError;
use crate::types::{FirmId, SecurityId, YearMonth};

/// One security-month of pricing data. `total_return` is month over month
/// and includes distributions when the upstream data carries them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyPriceRecord {
    pub security_id: SecurityId,
    pub month: YearMonth,
    pub close_price: f64,
    pub total_return: f64,
    pub market_cap: f64,
}

/// Final-month delisting event. An absent return means the terminal value
/// is unknown and a complete loss is assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelistingRecord {
    pub security_id: SecurityId,
    pub month: YearMonth,
    pub delist_return: Option<f64>,
}

/// Firm-security linkage over an inclusive month interval; an open
/// `valid_to` means the link is still live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub firm_id: FirmId,
    pub security_id: SecurityId,
    pub valid_from: YearMonth,
    pub valid_to: Option<YearMonth>,
}

impl LinkRecord {
    pub fn covers(&self, month: YearMonth) -> bool {
        month >= self.valid_from && self.valid_to.is_none_or(|end| month <= end)
    }
}

/// Monthly factor observations: proxy index total return, risk-free rate,
/// and the value and size factor returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMonth {
    pub month: YearMonth,
    pub market_return: f64,
    pub risk_free: f64,
    pub hml: f64,
    pub smb: f64,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Row {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{file}: duplicate {key} on lines {first_line} and {second_line}")]
    DuplicateKey {
        file: String,
        key: String,
        first_line: u64,
        second_line: u64,
    },
    #[error(
        "links.csv: security {security} has overlapping intervals [{a_from}, {a_to}] and [{b_from}, {b_to}]"
    )]
    OverlappingLinks {
        security: SecurityId,
        a_from: YearMonth,
        a_to: String,
        b_from: YearMonth,
        b_to: String,
    },
    #[error(transparent)]
    Earnings(#[from] GrowthError),
}

/// Convenience for full ingestion: read the five CSV files under `dir`,
/// assemble the linked universe, and report diagnostics.
pub fn load_and_validate(dir: &std::path::Path) -> Result<(Universe, ValidationReport), DataError> {
    let dataset = load_dataset(dir)?;
    Universe::build(dataset)
}

/// SHA-256 digest as lowercase hex, used for input and output fingerprints.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
