//! Run configuration: defaults, key-value config files, and flag overrides.
//!
//! Every setting can come from a config file (`key=value` lines, `#`
//! comments) or a command-line flag; when both are present the flag wins.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use gape::portfolio::{BacktestConfig, HoldingPolicy};

/// Inclusive range of formation years, written `START..END` (or a single
/// year).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl FromStr for YearRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_year = |y: &str| {
            y.trim()
                .parse::<i32>()
                .map_err(|_| format!("invalid year `{y}` in range `{s}`"))
        };
        let (start, end) = match s.split_once("..") {
            Some((a, b)) => (parse_year(a)?, parse_year(b)?),
            None => {
                let y = parse_year(s)?;
                (y, y)
            }
        };
        if start > end {
            return Err(format!("empty formation-year range `{s}`"));
        }
        Ok(YearRange { start, end })
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReturnsMode {
    /// Use the `total_return` column as given.
    Total,
    /// Recompute returns from close prices (sensitivity runs).
    PriceOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum HoldingArg {
    Rebalance,
    BuyAndHold,
}

impl From<HoldingArg> for HoldingPolicy {
    fn from(arg: HoldingArg) -> Self {
        match arg {
            HoldingArg::Rebalance => HoldingPolicy::MonthlyRebalance,
            HoldingArg::BuyAndHold => HoldingPolicy::BuyAndHold,
        }
    }
}

/// The resolved backtest run configuration, echoed into
/// `run_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub formation_years: YearRange,
    pub windows: BTreeSet<u32>,
    pub quantiles: usize,
    pub formation_month: u32,
    pub returns_mode: ReturnsMode,
    pub holding: HoldingArg,
    pub cap_sweep: Vec<f64>,
}

impl RunConfig {
    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            start_year: self.formation_years.start,
            end_year: self.formation_years.end,
            windows: self.windows.clone(),
            quantiles: self.quantiles,
            formation_month: self.formation_month,
            holding: self.holding.into(),
            cap_percentile: None,
        }
    }
}

/// Config values before defaulting; `None` means "not set anywhere".
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub formation_years: Option<YearRange>,
    pub windows: Option<Vec<u32>>,
    pub quantiles: Option<usize>,
    pub formation_month: Option<u32>,
    pub returns_mode: Option<ReturnsMode>,
    pub holding: Option<HoldingArg>,
    pub cap_sweep: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl PartialConfig {
    /// Parses `key=value` lines. Unknown keys and malformed values are
    /// usage errors.
    pub fn from_file_contents(contents: &str, file: &str) -> Result<Self, String> {
        let mut config = PartialConfig::default();
        for (index, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| format!("{file}:{}: {msg}", index + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "data_dir" => config.data_dir = Some(PathBuf::from(value)),
                "output_dir" => config.output_dir = Some(PathBuf::from(value)),
                "formation_years" => config.formation_years = Some(value.parse().map_err(at)?),
                "windows" => config.windows = Some(parse_list(value).map_err(at)?),
                "quantiles" => {
                    config.quantiles = Some(
                        value
                            .parse()
                            .map_err(|_| at(format!("invalid quantiles `{value}`")))?,
                    )
                }
                "formation_month" => {
                    config.formation_month = Some(
                        value
                            .parse()
                            .map_err(|_| at(format!("invalid formation_month `{value}`")))?,
                    )
                }
                "returns_mode" => {
                    config.returns_mode = Some(match value {
                        "total" => ReturnsMode::Total,
                        "price_only" => ReturnsMode::PriceOnly,
                        other => return Err(at(format!("invalid returns_mode `{other}`"))),
                    })
                }
                "holding" => {
                    config.holding = Some(match value {
                        "rebalance" => HoldingArg::Rebalance,
                        "buy_and_hold" => HoldingArg::BuyAndHold,
                        other => return Err(at(format!("invalid holding `{other}`"))),
                    })
                }
                "cap_sweep" => config.cap_sweep = Some(parse_list(value).map_err(at)?),
                "seed" => {
                    config.seed = Some(
                        value
                            .parse()
                            .map_err(|_| at(format!("invalid seed `{value}`")))?,
                    )
                }
                other => return Err(at(format!("unknown config key `{other}`"))),
            }
        }
        Ok(config)
    }

    /// Overlays `flags` (which win) on top of `self`.
    pub fn overridden_by(mut self, flags: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($field:ident) => {
                if flags.$field.is_some() {
                    self.$field = flags.$field;
                }
            };
        }
        take!(data_dir);
        take!(output_dir);
        take!(formation_years);
        take!(windows);
        take!(quantiles);
        take!(formation_month);
        take!(returns_mode);
        take!(holding);
        take!(cap_sweep);
        take!(seed);
        self
    }

    /// Applies defaults and checks required fields.
    pub fn finalize(self) -> Result<RunConfig, String> {
        let data_dir = self.data_dir.ok_or("data_dir is required")?;
        let output_dir = self.output_dir.ok_or("output_dir is required")?;
        let formation_years = self.formation_years.ok_or("formation_years is required")?;
        let windows: BTreeSet<u32> = self
            .windows
            .unwrap_or_else(|| vec![1, 2, 3])
            .into_iter()
            .collect();
        if windows.is_empty() {
            return Err("windows must be non-empty".into());
        }
        if windows.contains(&0) {
            return Err("growth windows must be at least 1 year".into());
        }
        let quantiles = self.quantiles.unwrap_or(5);
        if quantiles < 2 {
            return Err(format!("need at least 2 quantiles, got {quantiles}"));
        }
        let formation_month = self.formation_month.unwrap_or(3);
        if !(1..=12).contains(&formation_month) {
            return Err(format!("formation_month {formation_month} out of range"));
        }
        for pct in self.cap_sweep.iter().flatten() {
            if !(*pct > 0.0 && *pct <= 100.0) {
                return Err(format!("cap percentile {pct} must lie in (0, 100]"));
            }
        }
        Ok(RunConfig {
            data_dir,
            output_dir,
            formation_years,
            windows,
            quantiles,
            formation_month,
            returns_mode: self.returns_mode.unwrap_or(ReturnsMode::Total),
            holding: self.holding.unwrap_or(HoldingArg::Rebalance),
            cap_sweep: self.cap_sweep.unwrap_or_default(),
        })
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|_| format!("invalid list item `{item}`"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_range_forms() {
        assert_eq!(
            "1990..2014".parse::<YearRange>().unwrap(),
            YearRange {
                start: 1990,
                end: 2014
            }
        );
        assert_eq!(
            "1995".parse::<YearRange>().unwrap(),
            YearRange {
                start: 1995,
                end: 1995
            }
        );
        assert!("2000..1990".parse::<YearRange>().is_err());
        assert!("abc".parse::<YearRange>().is_err());
    }

    #[test]
    fn config_file_round_trip_and_flag_priority() {
        let file = "\
# comment
data_dir = /data
formation_years = 1990..1995
windows = 1,2
holding = buy_and_hold
";
        let from_file = PartialConfig::from_file_contents(file, "run.conf").unwrap();
        let flags = PartialConfig {
            windows: Some(vec![3]),
            output_dir: Some(PathBuf::from("/out")),
            ..Default::default()
        };
        let config = from_file.overridden_by(flags).finalize().unwrap();
        assert_eq!(config.data_dir, PathBuf::from("/data"));
        assert_eq!(config.windows, [3].into_iter().collect());
        assert_eq!(config.holding, HoldingArg::BuyAndHold);
        assert_eq!(config.quantiles, 5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = PartialConfig::from_file_contents("bogus = 1\n", "run.conf").unwrap_err();
        assert!(err.contains("unknown config key"), "{err}");
        assert!(err.contains("run.conf:1"), "{err}");
    }

    #[test]
    fn missing_required_fields_are_reported() {
        let err = PartialConfig::default().finalize().unwrap_err();
        assert!(err.contains("data_dir"), "{err}");
    }
}
