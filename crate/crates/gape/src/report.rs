//! Backtest report artifacts: the CSV tables and plot data a run emits,
//! plus the readers that parse them back.
//!
//! | file                 | contents                                                      |
//! |----------------------|---------------------------------------------------------------|
//! | `summary_table.csv`  | per window and portfolio, year-averaged formation medians    |
//! | `annual_returns.csv` | annualized return per portfolio for both sorts + difference  |
//! | `ttests.csv`         | pairwise paired t-tests between portfolios, both sorts       |
//! | `factors_gape.csv`   | Sharpe + three-factor regression per portfolio (payback sort)|
//! | `factors_pe.csv`     | the same for the price-earnings sort                         |
//! | `cumulative.csv`     | monthly cumulative value of the end portfolios plus index    |
//! | `cap_sweep.csv`      | P_1 return/Sharpe/alpha per market-cap percentile, both sorts|
//!
//! Values are written at full precision; presentation rounding is a
//! consumer concern. Infinite medians appear as the literal token `INF`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{sha256_hex, write_atomic, Universe};
use crate::portfolio::{
    run_backtest, BacktestConfig, BacktestResult, EngineError, FormationSummary, MedianValue,
    SortOutcome,
};
use crate::stats::{
    annualized_return, ols_three_factor, paired_t_test, sharpe_monthly, StatsError,
};
use crate::types::{ReturnSeries, YearMonth};

pub const SUMMARY_FILE: &str = "summary_table.csv";
pub const ANNUAL_RETURNS_FILE: &str = "annual_returns.csv";
pub const TTESTS_FILE: &str = "ttests.csv";
pub const FACTORS_GAPE_FILE: &str = "factors_gape.csv";
pub const FACTORS_PE_FILE: &str = "factors_pe.csv";
pub const CUMULATIVE_FILE: &str = "cumulative.csv";
pub const CAP_SWEEP_FILE: &str = "cap_sweep.csv";

/// Every artifact file a backtest run writes, in emission order.
pub const BACKTEST_ARTIFACTS: [&str; 7] = [
    SUMMARY_FILE,
    ANNUAL_RETURNS_FILE,
    TTESTS_FILE,
    FACTORS_GAPE_FILE,
    FACTORS_PE_FILE,
    CUMULATIVE_FILE,
    CAP_SWEEP_FILE,
];

#[derive(Debug, Error)]
pub enum ReportError {
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
    #[error("factor data missing for {0}")]
    MissingFactors(YearMonth),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A cell that is either a number or the infinite marker `INF`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableCell {
    Value(f64),
    Inf,
}

impl TableCell {
    pub fn value(&self) -> Option<f64> {
        match self {
            TableCell::Value(v) => Some(*v),
            TableCell::Inf => None,
        }
    }
}

impl fmt::Display for TableCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableCell::Value(v) => write!(f, "{v}"),
            TableCell::Inf => f.write_str("INF"),
        }
    }
}

impl Serialize for TableCell {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            TableCell::Value(v) => serializer.serialize_f64(*v),
            TableCell::Inf => serializer.serialize_str("INF"),
        }
    }
}

impl<'de> Deserialize<'de> for TableCell {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        if raw == "INF" {
            Ok(TableCell::Inf)
        } else {
            raw.parse::<f64>()
                .map(TableCell::Value)
                .map_err(serde::de::Error::custom)
        }
    }
}

/// One row of `summary_table.csv`: formation medians averaged over the
/// years in which they were finite, with the infinite years counted
/// alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub window: u32,
    pub portfolio: usize,
    pub mean_median_gape: TableCell,
    pub infinite_median_years: usize,
    pub mean_median_pe: f64,
    pub mean_median_growth: f64,
}

/// `annual_returns.csv` parsed back into aligned per-portfolio columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualReturnsTable {
    pub gape: Vec<f64>,
    pub pe: Vec<f64>,
    pub difference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub sort: String,
    /// 1-based indices of the compared portfolios, `low < high`.
    pub low: usize,
    pub high: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub dof: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub portfolio: usize,
    pub sharpe_monthly: f64,
    pub sharpe_annualized: f64,
    pub alpha: f64,
    pub alpha_t: f64,
    pub beta_market: f64,
    pub beta_market_t: f64,
    pub hml: f64,
    pub hml_t: f64,
    pub smb: f64,
    pub smb_t: f64,
    pub r_squared: f64,
    pub residual_dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeRow {
    pub month: YearMonth,
    pub gape_low: f64,
    pub gape_high: f64,
    pub pe_low: f64,
    pub pe_high: f64,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSweepRow {
    pub percentile: f64,
    pub sort: String,
    pub annual_return: f64,
    pub sharpe_monthly: f64,
    pub alpha: f64,
}

/// Aggregates per-year formation medians into `summary_table.csv` rows:
/// the mean of the yearly medians, taken over the years where the median
/// was finite, plus the count of infinite-median years.
pub fn build_summary_rows(summaries: &[FormationSummary]) -> Vec<SummaryRow> {
    #[derive(Default)]
    struct Acc {
        finite_gape: Vec<f64>,
        infinite_years: usize,
        pes: Vec<f64>,
        growths: Vec<f64>,
    }
    let mut acc: BTreeMap<(u32, usize), Acc> = BTreeMap::new();
    for s in summaries {
        let entry = acc.entry((s.window, s.portfolio)).or_default();
        match s.median_gape {
            MedianValue::Finite(v) => entry.finite_gape.push(v),
            MedianValue::Infinite => entry.infinite_years += 1,
        }
        entry.pes.push(s.median_pe);
        entry.growths.push(s.median_growth);
    }
    acc.into_iter()
        .map(|((window, portfolio), a)| SummaryRow {
            window,
            portfolio,
            mean_median_gape: if a.finite_gape.is_empty() {
                TableCell::Inf
            } else {
                TableCell::Value(mean(&a.finite_gape))
            },
            infinite_median_years: a.infinite_years,
            mean_median_pe: mean(&a.pes),
            mean_median_growth: mean(&a.growths),
        })
        .collect()
}

/// Pairwise paired t-tests between the portfolios of one sort.
pub fn build_ttest_rows(outcome: &SortOutcome, sort: &str) -> Result<Vec<TTestRow>, ReportError> {
    let mut rows = Vec::new();
    let series = &outcome.portfolio_series;
    for low in 0..series.len() {
        for high in low + 1..series.len() {
            let test = paired_t_test(&series[low], &series[high])?;
            rows.push(TTestRow {
                sort: sort.to_string(),
                low: low + 1,
                high: high + 1,
                mean_diff: test.mean_diff,
                t: test.t,
                dof: test.dof,
                p: test.p,
            });
        }
    }
    Ok(rows)
}

/// Sharpe ratio and three-factor regression per portfolio of one sort.
pub fn build_factor_rows(
    outcome: &SortOutcome,
    universe: &Universe,
) -> Result<Vec<FactorRow>, ReportError> {
    let mut rows = Vec::new();
    for (index, series) in outcome.portfolio_series.iter().enumerate() {
        let factors = aligned_factors(universe, series)?;
        let risk_free = ReturnSeries::from_start(
            series.start(),
            factors.iter().map(|f| f.risk_free).collect(),
        )
        .expect("risk-free rates are valid returns");
        let sharpe = sharpe_monthly(series, &risk_free)?;
        let reg = ols_three_factor(series, &factors)?;
        rows.push(FactorRow {
            portfolio: index + 1,
            sharpe_monthly: sharpe.monthly,
            sharpe_annualized: sharpe.annualized,
            alpha: reg.alpha,
            alpha_t: reg.t_stats[0],
            beta_market: reg.beta_market,
            beta_market_t: reg.t_stats[1],
            hml: reg.beta_hml,
            hml_t: reg.t_stats[2],
            smb: reg.beta_smb,
            smb_t: reg.t_stats[3],
            r_squared: reg.r_squared,
            residual_dof: reg.residual_dof,
        });
    }
    Ok(rows)
}

/// Monthly cumulative value (starting at 1.0) of the lowest and highest
/// portfolio of each sort, alongside the compounded index.
pub fn build_cumulative_rows(
    result: &BacktestResult,
    universe: &Universe,
) -> Result<Vec<CumulativeRow>, ReportError> {
    let gape_low = &result.gape.portfolio_series[0];
    let last = result.gape.portfolio_series.len() - 1;
    let gape_high = &result.gape.portfolio_series[last];
    let pe_low = &result.pe.portfolio_series[0];
    let pe_high = &result.pe.portfolio_series[last];
    let factors = aligned_factors(universe, gape_low)?;

    let mut rows = Vec::with_capacity(gape_low.len());
    let mut cum = [1.0f64; 5];
    for (i, (month, r_gape_low)) in gape_low.iter().enumerate() {
        let parts = [
            r_gape_low,
            gape_high.values()[i],
            pe_low.values()[i],
            pe_high.values()[i],
            factors[i].market_return,
        ];
        for (slot, r) in cum.iter_mut().zip(parts) {
            *slot *= 1.0 + r;
        }
        rows.push(CumulativeRow {
            month,
            gape_low: cum[0],
            gape_high: cum[1],
            pe_low: cum[2],
            pe_high: cum[3],
            index: cum[4],
        });
    }
    Ok(rows)
}

/// Reruns the backtest at each market-cap percentile and reports the
/// P_1 annualized return, monthly Sharpe, and alpha for both sorts.
pub fn cap_sweep_rows(
    universe: &Universe,
    base: &BacktestConfig,
    percentiles: &[f64],
) -> Result<Vec<CapSweepRow>, ReportError> {
    let mut rows = Vec::new();
    for &percentile in percentiles {
        let mut config = base.clone();
        config.cap_percentile = Some(percentile);
        let result = run_backtest(universe, &config)?;
        for (sort, outcome) in [("gape", &result.gape), ("pe", &result.pe)] {
            let series = &outcome.portfolio_series[0];
            let factors = aligned_factors(universe, series)?;
            let risk_free = ReturnSeries::from_start(
                series.start(),
                factors.iter().map(|f| f.risk_free).collect(),
            )
            .expect("risk-free rates are valid returns");
            let sharpe = sharpe_monthly(series, &risk_free)?;
            let reg = ols_three_factor(series, &factors)?;
            rows.push(CapSweepRow {
                percentile,
                sort: sort.to_string(),
                annual_return: annualized_return(series),
                sharpe_monthly: sharpe.monthly,
                alpha: reg.alpha,
            });
        }
    }
    Ok(rows)
}

fn aligned_factors(
    universe: &Universe,
    series: &ReturnSeries,
) -> Result<Vec<crate::data::FactorMonth>, ReportError> {
    universe
        .factor_series(series.start(), series.len())
        .ok_or_else(|| {
            let missing = (0..series.len())
                .map(|i| series.start().plus_months(i as i64))
                .find(|&m| universe.factor(m).is_none())
                .unwrap_or(series.start());
            ReportError::MissingFactors(missing)
        })
}

/// Writes every backtest artifact into `dir` (created if needed). The cap
/// sweep reruns the backtest per percentile; an empty list still writes the
/// header-only file.
pub fn write_backtest_reports(
    dir: &Path,
    universe: &Universe,
    result: &BacktestResult,
    cap_sweep: &[f64],
) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        file: dir.display().to_string(),
        source,
    })?;

    write_rows(
        &dir.join(SUMMARY_FILE),
        &build_summary_rows(&result.summaries),
    )?;
    write_annual_returns(&dir.join(ANNUAL_RETURNS_FILE), result)?;

    let mut ttests = build_ttest_rows(&result.gape, "gape")?;
    ttests.extend(build_ttest_rows(&result.pe, "pe")?);
    write_rows(&dir.join(TTESTS_FILE), &ttests)?;

    write_rows(
        &dir.join(FACTORS_GAPE_FILE),
        &build_factor_rows(&result.gape, universe)?,
    )?;
    write_rows(
        &dir.join(FACTORS_PE_FILE),
        &build_factor_rows(&result.pe, universe)?,
    )?;
    write_rows(
        &dir.join(CUMULATIVE_FILE),
        &build_cumulative_rows(result, universe)?,
    )?;
    let sweep = cap_sweep_rows(universe, &result.config, cap_sweep)?;
    write_csv_with_headers(&dir.join(CAP_SWEEP_FILE), &sweep, CAP_SWEEP_HEADERS)?;
    Ok(())
}

const CAP_SWEEP_HEADERS: &[&str] = &[
    "percentile",
    "sort",
    "annual_return",
    "sharpe_monthly",
    "alpha",
];

fn write_annual_returns(path: &Path, result: &BacktestResult) -> Result<(), ReportError> {
    let gape: Vec<f64> = result
        .gape
        .portfolio_series
        .iter()
        .map(annualized_return)
        .collect();
    let pe: Vec<f64> = result
        .pe
        .portfolio_series
        .iter()
        .map(annualized_return)
        .collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["series".to_string()];
    header.extend((1..=gape.len()).map(|i| format!("P_{i}")));
    writer
        .write_record(&header)
        .map_err(|e| csv_error(path, e))?;
    let mut write_row = |name: &str, values: &[f64]| -> Result<(), ReportError> {
        let mut record = vec![name.to_string()];
        record.extend(values.iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(|e| csv_error(path, e))
    };
    write_row("gape", &gape)?;
    write_row("pe", &pe)?;
    let difference: Vec<f64> = gape.iter().zip(&pe).map(|(g, p)| g - p).collect();
    write_row("difference", &difference)?;
    finish(path, writer)
}

/// Parses `annual_returns.csv` back into its three aligned rows.
pub fn read_annual_returns(path: &Path) -> Result<AnnualReturnsTable, ReportError> {
    let mut reader = csv_reader(path)?;
    let mut gape = None;
    let mut pe = None;
    let mut difference = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut fields = record.iter();
        let name = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ReportError::Row {
                file: path.display().to_string(),
                line,
                message: e.to_string(),
            })?;
        match name.as_str() {
            "gape" => gape = Some(values),
            "pe" => pe = Some(values),
            "difference" => difference = Some(values),
            other => {
                return Err(ReportError::Row {
                    file: path.display().to_string(),
                    line,
                    message: format!("unknown series `{other}`"),
                })
            }
        }
    }
    match (gape, pe, difference) {
        (Some(gape), Some(pe), Some(difference)) => Ok(AnnualReturnsTable {
            gape,
            pe,
            difference,
        }),
        _ => Err(ReportError::Row {
            file: path.display().to_string(),
            line: 0,
            message: "missing one of the gape/pe/difference rows".into(),
        }),
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, ReportError> {
    read_rows(path)
}

pub fn read_ttests(path: &Path) -> Result<Vec<TTestRow>, ReportError> {
    read_rows(path)
}

pub fn read_factor_table(path: &Path) -> Result<Vec<FactorRow>, ReportError> {
    read_rows(path)
}

pub fn read_cumulative(path: &Path) -> Result<Vec<CumulativeRow>, ReportError> {
    read_rows(path)
}

pub fn read_cap_sweep(path: &Path) -> Result<Vec<CapSweepRow>, ReportError> {
    read_rows(path)
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|source| ReportError::Io {
        file: path.display().to_string(),
        source,
    })
}

/// SHA-256 digest of a file, lowercase hex.
pub fn file_digest(path: &Path) -> Result<String, ReportError> {
    let mut file = std::fs::File::open(path).map_err(|source| ReportError::Io {
        file: path.display().to_string(),
        source,
    })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|source| ReportError::Io {
            file: path.display().to_string(),
            source,
        })?;
    Ok(sha256_hex(&bytes))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, ReportError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|err| match err.into_kind() {
            csv::ErrorKind::Io(source) => ReportError::Io {
                file: path.display().to_string(),
                source,
            },
            other => ReportError::Row {
                file: path.display().to_string(),
                line: 1,
                message: format!("{other:?}"),
            },
        })
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReportError> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push(
            record
                .deserialize(Some(&headers))
                .map_err(|err| ReportError::Row {
                    file: path.display().to_string(),
                    line,
                    message: err.to_string(),
                })?,
        );
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    finish(path, writer)
}

/// Like `write_rows` but emits the header even when there are no rows, so
/// empty artifacts still parse.
fn write_csv_with_headers<T: Serialize>(
    path: &Path,
    rows: &[T],
    headers: &[&str],
) -> Result<(), ReportError> {
    if rows.is_empty() {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(headers)
            .map_err(|e| csv_error(path, e))?;
        return finish(path, writer);
    }
    write_rows(path, rows)
}

fn finish(path: &Path, writer: csv::Writer<Vec<u8>>) -> Result<(), ReportError> {
    let bytes = writer.into_inner().expect("in-memory writer");
    write_atomic(path, &bytes).map_err(|source| ReportError::Io {
        file: path.display().to_string(),
        source,
    })
}

fn csv_error(path: &Path, err: csv::Error) -> ReportError {
    ReportError::Row {
        file: path.display().to_string(),
        line: err.position().map_or(0, |p| p.line()),
        message: err.to_string(),
    }
}
