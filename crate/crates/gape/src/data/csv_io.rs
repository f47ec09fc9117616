//! CSV readers and writers for the five datasets, with line-numbered
//! row diagnostics on the way in and atomic writes on the way out.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{DataError, DelistingRecord, FactorMonth, LinkRecord, MonthlyPriceRecord};
use crate::growth::QuarterlyEarningsRecord;

pub const PRICES_FILE: &str = "prices.csv";
pub const EARNINGS_FILE: &str = "earnings_quarterly.csv";
pub const DELISTINGS_FILE: &str = "delistings.csv";
pub const LINKS_FILE: &str = "links.csv";
pub const FACTORS_FILE: &str = "factors.csv";

/// The five datasets as flat record lists, in file order. Record positions
/// map back to CSV lines as `index + 2` (one header line, one record per
/// line).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub prices: Vec<MonthlyPriceRecord>,
    pub earnings: Vec<QuarterlyEarningsRecord>,
    pub delistings: Vec<DelistingRecord>,
    pub links: Vec<LinkRecord>,
    pub factors: Vec<FactorMonth>,
}

/// Reads all five CSV files under `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    Ok(Dataset {
        prices: read_csv(&dir.join(PRICES_FILE))?,
        earnings: read_csv(&dir.join(EARNINGS_FILE))?,
        delistings: read_csv(&dir.join(DELISTINGS_FILE))?,
        links: read_csv(&dir.join(LINKS_FILE))?,
        factors: read_csv(&dir.join(FACTORS_FILE))?,
    })
}

/// Writes all five CSV files under `dir`, creating it if needed. Each file
/// is written to a temporary sibling and renamed into place.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        file: dir.display().to_string(),
        source,
    })?;
    write_csv(&dir.join(PRICES_FILE), &dataset.prices)?;
    write_csv(&dir.join(EARNINGS_FILE), &dataset.earnings)?;
    write_csv(&dir.join(DELISTINGS_FILE), &dataset.delistings)?;
    write_csv(&dir.join(LINKS_FILE), &dataset.links)?;
    write_csv(&dir.join(FACTORS_FILE), &dataset.factors)?;
    Ok(())
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|err| match err.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                file: path.display().to_string(),
                source,
            },
            other => DataError::Row {
                file: file_name.clone(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|err| DataError::Row {
            file: file_name.clone(),
            line: 1,
            message: err.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|err| DataError::Row {
            file: file_name.clone(),
            line: err.position().map_or(0, |p| p.line()),
            message: err.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parsed: T = record
            .deserialize(Some(&headers))
            .map_err(|err| DataError::Row {
                file: file_name.clone(),
                line,
                message: err.to_string(),
            })?;
        out.push(parsed);
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer.serialize(record).map_err(|err| DataError::Row {
            file: path.display().to_string(),
            line: 0,
            message: err.to_string(),
        })?;
    }
    let bytes = writer.into_inner().expect("in-memory writer");
    write_atomic(path, &bytes).map_err(|source| DataError::Io {
        file: path.display().to_string(),
        source,
    })
}

/// Write-then-rename so a crash never leaves a half-written file behind.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = PathBuf::from(path);
    tmp.set_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ym;

    #[test]
    fn columns_may_arrive_in_any_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PRICES_FILE);
        fs::write(
            &path,
            "market_cap,close_price,security_id,total_return,month\n100.0,10.5,S1,0.02,1990-03\n",
        )
        .unwrap();
        let rows: Vec<MonthlyPriceRecord> = read_csv(&path).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].security_id, "S1".into());
        assert_eq!(rows[0].month, ym(1990, 3));
        assert_eq!(rows[0].close_price, 10.5);
    }

    #[test]
    fn bad_row_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FACTORS_FILE);
        fs::write(
            &path,
            "month,market_return,risk_free,hml,smb\n1990-03,0.01,0.002,0.001,0.0005\n1990-04,not_a_number,0.002,0.001,0.0005\n",
        )
        .unwrap();
        let err = read_csv::<FactorMonth>(&path).unwrap_err();
        match err {
            DataError::Row { file, line, .. } => {
                assert_eq!(file, FACTORS_FILE);
                assert_eq!(line, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_delist_return_is_absent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DELISTINGS_FILE);
        fs::write(
            &path,
            "security_id,month,delist_return\nS1,1995-06,-0.3\nS2,1995-07,\n",
        )
        .unwrap();
        let rows: Vec<DelistingRecord> = read_csv(&path).unwrap();
        assert_eq!(rows[0].delist_return, Some(-0.3));
        assert_eq!(rows[1].delist_return, None);
    }

    #[test]
    fn dataset_round_trips_through_files() {
        let dataset = Dataset {
            prices: vec![MonthlyPriceRecord {
                security_id: "S1".into(),
                month: ym(1990, 3),
                close_price: 12.0,
                total_return: 0.01,
                market_cap: 350.0,
            }],
            earnings: vec![QuarterlyEarningsRecord {
                firm_id: "F1".into(),
                quarter_end: "1989-12-31".parse().unwrap(),
                eps: 0.4,
            }],
            delistings: vec![],
            links: vec![LinkRecord {
                firm_id: "F1".into(),
                security_id: "S1".into(),
                valid_from: ym(1980, 1),
                valid_to: None,
            }],
            factors: vec![FactorMonth {
                month: ym(1990, 3),
                market_return: 0.01,
                risk_free: 0.002,
                hml: 0.001,
                smb: -0.002,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &dataset).unwrap();
        let reloaded = load_dataset(dir.path()).unwrap();
        assert_eq!(dataset, reloaded);
    }
}
