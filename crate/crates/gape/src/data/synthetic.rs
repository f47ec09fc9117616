//! Seeded synthetic dataset generator.
//!
//! Plants two independent structures the backtest can be checked against:
//!
//! - a per-firm valuation plant: constant annual earnings growth and a
//!   target payback period (or a never-repays proportion), from which March
//!   prices are derived so every formation recovers the planted metric;
//! - a per-stratum return plant: monthly total returns follow
//!   `rf + alpha + beta * market_excess + b_hml * HML + b_smb * SMB + noise`
//!   with the factor series drawn once for the whole universe.
//!
//! Close prices interpolate geometrically between March anchors, so the
//! `total_return` column (not the price path) is the authoritative return
//! source; the price path exists for formation and for `price_only`
//! sensitivity runs. Outputs are a deterministic function of `(spec, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::csv_io::Dataset;
use super::{FactorMonth, LinkRecord, MonthlyPriceRecord};
use crate::growth::QuarterlyEarningsRecord;
use crate::types::{FirmId, SecurityId, YearMonth};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
}

/// Planted model for one quantile stratum of firms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumPlan {
    pub alpha: f64,
    pub beta_market: f64,
    pub beta_hml: f64,
    pub beta_smb: f64,
    /// Target finite payback band (years); must not overlap other strata.
    pub payback_band: (f64, f64),
    /// Planted annual earnings growth band.
    pub growth_band: (f64, f64),
    /// Fraction of the stratum planted beyond the solvency bound. Only the
    /// last stratum may carry a nonzero fraction, since never-repay
    /// securities always rank behind every finite one.
    pub infinite_fraction: f64,
}

/// Generator parameters. All fields are planted values or draw scales; the
/// output is deterministic given the spec and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub firm_count: usize,
    pub start_month: YearMonth,
    pub months: usize,
    pub strata: Vec<StratumPlan>,
    /// Idiosyncratic monthly return noise (standard deviation).
    pub noise_sd: f64,
    /// Constant monthly risk-free rate.
    pub risk_free: f64,
    /// Mean and standard deviation of the monthly market excess return.
    pub market_mean: f64,
    pub market_sd: f64,
    pub hml_sd: f64,
    pub smb_sd: f64,
    /// Log-normal market-cap parameters (log-space mean and sd).
    pub cap_log_mean: f64,
    pub cap_log_sd: f64,
}

impl SyntheticSpec {
    /// A ready-made five-stratum plant: strictly separated payback bands,
    /// strictly decreasing alphas, and a slice of never-repay firms in the
    /// top stratum.
    pub fn quintile_demo(
        firm_count: usize,
        start_month: YearMonth,
        months: usize,
        noise_sd: f64,
    ) -> Self {
        let strata = vec![
            StratumPlan {
                alpha: 0.0070,
                beta_market: 1.10,
                beta_hml: 0.40,
                beta_smb: 0.80,
                payback_band: (2.0, 4.0),
                growth_band: (0.15, 0.45),
                infinite_fraction: 0.0,
            },
            StratumPlan {
                alpha: 0.0050,
                beta_market: 1.05,
                beta_hml: 0.35,
                beta_smb: 0.70,
                payback_band: (6.0, 8.0),
                growth_band: (0.08, 0.20),
                infinite_fraction: 0.0,
            },
            StratumPlan {
                alpha: 0.0035,
                beta_market: 1.00,
                beta_hml: 0.30,
                beta_smb: 0.55,
                payback_band: (10.0, 12.0),
                growth_band: (0.02, 0.10),
                infinite_fraction: 0.0,
            },
            StratumPlan {
                alpha: 0.0020,
                beta_market: 0.95,
                beta_hml: 0.32,
                beta_smb: 0.60,
                payback_band: (14.0, 16.0),
                growth_band: (-0.02, 0.05),
                infinite_fraction: 0.0,
            },
            StratumPlan {
                alpha: 0.0005,
                beta_market: 0.90,
                beta_hml: 0.38,
                beta_smb: 0.75,
                payback_band: (18.0, 20.0),
                growth_band: (-0.35, -0.10),
                infinite_fraction: 0.3,
            },
        ];
        Self {
            firm_count,
            start_month,
            months,
            strata,
            noise_sd,
            risk_free: 0.0025,
            market_mean: 0.005,
            market_sd: 0.04,
            hml_sd: 0.02,
            smb_sd: 0.02,
            cap_log_mean: 6.0,
            cap_log_sd: 1.5,
        }
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        let err = |msg: String| Err(SyntheticError::Infeasible(msg));
        if self.strata.is_empty() {
            return err("at least one stratum is required".into());
        }
        if self.firm_count < self.strata.len() {
            return err(format!(
                "{} firms cannot populate {} strata",
                self.firm_count,
                self.strata.len()
            ));
        }
        if self.months < 24 {
            return err(format!(
                "{} months is shorter than one formation plus its tracking year",
                self.months
            ));
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return err(format!(
                "noise_sd must be non-negative, got {}",
                self.noise_sd
            ));
        }
        let last = self.strata.len() - 1;
        for (i, stratum) in self.strata.iter().enumerate() {
            let (lo, hi) = stratum.payback_band;
            if !(lo > 0.0 && hi >= lo) {
                return err(format!("stratum {i}: invalid payback band ({lo}, {hi})"));
            }
            let (g_lo, g_hi) = stratum.growth_band;
            if !(g_lo > -1.0 && g_hi >= g_lo) {
                return err(format!("stratum {i}: invalid growth band ({g_lo}, {g_hi})"));
            }
            if !(0.0..=1.0).contains(&stratum.infinite_fraction) {
                return err(format!("stratum {i}: infinite_fraction must lie in [0, 1]"));
            }
            if stratum.infinite_fraction > 0.0 {
                if i != last {
                    return err(format!(
                        "stratum {i}: only the last stratum may plant never-repay firms"
                    ));
                }
                if g_hi >= 0.0 {
                    return err(format!(
                        "stratum {i}: never-repay firms need a negative growth band"
                    ));
                }
            }
            if i + 1 < self.strata.len() && hi >= self.strata[i + 1].payback_band.0 {
                return err(format!(
                    "stratum {i}: payback band overlaps the next stratum"
                ));
            }
        }
        Ok(())
    }
}

/// Planted truth for one firm, recorded in the manifest for oracle use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmPlan {
    pub firm_id: FirmId,
    pub security_id: SecurityId,
    pub stratum: usize,
    pub growth: f64,
    /// Price-earnings multiple applied to the prior fiscal year each March.
    pub pe: f64,
    /// Planted finite payback, absent for never-repay firms.
    pub target_payback: Option<f64>,
    /// Planted payback proportion for never-repay firms.
    pub payback_proportion: Option<f64>,
    pub market_cap: f64,
}

/// Sidecar manifest: the full spec, the seed, and every planted value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub seed: u64,
    pub spec: SyntheticSpec,
    pub firms: Vec<FirmPlan>,
}

/// Generates the five datasets and their manifest.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Dataset, SyntheticManifest), SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Factor series first, one draw sequence for the whole universe.
    let market = Normal::new(spec.market_mean, spec.market_sd).expect("finite params");
    let hml_dist = Normal::new(0.0, spec.hml_sd).expect("finite params");
    let smb_dist = Normal::new(0.0, spec.smb_sd).expect("finite params");
    let factors: Vec<FactorMonth> = (0..spec.months)
        .map(|i| {
            let month = spec.start_month.plus_months(i as i64);
            let market_excess = market.sample(&mut rng);
            FactorMonth {
                month,
                market_return: spec.risk_free + market_excess,
                risk_free: spec.risk_free,
                hml: hml_dist.sample(&mut rng),
                smb: smb_dist.sample(&mut rng),
            }
        })
        .collect();

    let end_month = spec.start_month.plus_months(spec.months as i64 - 1);
    let first_fiscal_year = spec.start_month.year() - 5;
    let last_fiscal_year = end_month.year();
    let cap_dist = LogNormal::new(spec.cap_log_mean, spec.cap_log_sd).expect("finite params");
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("finite params");

    let mut firms = Vec::with_capacity(spec.firm_count);
    let mut prices = Vec::new();
    let mut earnings = Vec::new();
    let mut links = Vec::new();

    // Per-stratum running count decides which members plant infinite
    // outcomes: the first `floor(fraction * stratum size)` of each stratum.
    let stratum_sizes: Vec<usize> = (0..spec.strata.len())
        .map(|s| (spec.firm_count + spec.strata.len() - 1 - s) / spec.strata.len())
        .collect();
    let mut stratum_seen = vec![0usize; spec.strata.len()];

    for i in 0..spec.firm_count {
        let stratum_idx = i % spec.strata.len();
        let stratum = &spec.strata[stratum_idx];
        let member = stratum_seen[stratum_idx];
        stratum_seen[stratum_idx] += 1;
        let infinite_quota =
            (stratum.infinite_fraction * stratum_sizes[stratum_idx] as f64).floor() as usize;
        let plant_infinite = member < infinite_quota;

        let growth = rng.random_range(stratum.growth_band.0..=stratum.growth_band.1);
        let (pe, target_payback, payback_proportion) = if plant_infinite {
            let proportion = rng.random_range(0.15..=0.85);
            // From E_inf/P = E(1+g)/(-gP): P/E = (1+g)/(-g * proportion).
            let pe = (1.0 + growth) / (-growth * proportion);
            (pe, None, Some(proportion))
        } else {
            let target = rng.random_range(stratum.payback_band.0..=stratum.payback_band.1);
            (pe_for_payback(target, growth), Some(target), None)
        };
        let market_cap = cap_dist.sample(&mut rng);

        let firm_id = FirmId::new(format!("F{:04}", i + 1));
        let security_id = SecurityId::new(format!("S{:04}", i + 1));
        links.push(LinkRecord {
            firm_id: firm_id.clone(),
            security_id: security_id.clone(),
            valid_from: YearMonth::new(first_fiscal_year, 1).expect("January"),
            valid_to: None,
        });

        // Earnings compound exactly: annual EPS is e0 * (1+g)^(y - y0),
        // emitted as four equal quarters ending Mar/Jun/Sep/Dec.
        let e0 = 1.0;
        let annual_eps = |year: i32| e0 * (1.0 + growth).powi(year - first_fiscal_year);
        for year in first_fiscal_year..=last_fiscal_year {
            let annual = annual_eps(year);
            for &(m, d) in &[(3u32, 31u32), (6, 30), (9, 30), (12, 31)] {
                earnings.push(QuarterlyEarningsRecord {
                    firm_id: firm_id.clone(),
                    quarter_end: chrono::NaiveDate::from_ymd_opt(year, m, d)
                        .expect("valid quarter end"),
                    eps: annual / 4.0,
                });
            }
        }

        // Prices: March anchors at pe * prior fiscal EPS, geometric
        // interpolation in between; returns from the stratum factor model.
        for (k, factor) in factors.iter().enumerate() {
            let month = spec.start_month.plus_months(k as i64);
            let anchor_year = if month.month() >= 3 {
                month.year()
            } else {
                month.year() - 1
            };
            let anchor = YearMonth::new(anchor_year, 3).expect("March");
            let offset = month.months_since(anchor) as f64;
            let close_price = pe * annual_eps(anchor_year - 1) * (1.0 + growth).powf(offset / 12.0);
            let market_excess = factor.market_return - factor.risk_free;
            let model = factor.risk_free
                + stratum.alpha
                + stratum.beta_market * market_excess
                + stratum.beta_hml * factor.hml
                + stratum.beta_smb * factor.smb;
            let drawn = noise.sample(&mut rng);
            let eps_noise = if spec.noise_sd > 0.0 { drawn } else { 0.0 };
            // Clamp keeps pathological draws inside the valid return domain.
            let total_return = (model + eps_noise).max(-0.95);
            prices.push(MonthlyPriceRecord {
                security_id: security_id.clone(),
                month,
                close_price,
                total_return,
                market_cap,
            });
        }

        firms.push(FirmPlan {
            firm_id,
            security_id,
            stratum: stratum_idx,
            growth,
            pe,
            target_payback,
            payback_proportion,
            market_cap,
        });
    }

    let dataset = Dataset {
        prices,
        earnings,
        delistings: Vec::new(),
        links,
        factors,
    };
    let manifest = SyntheticManifest {
        seed,
        spec: spec.clone(),
        firms,
    };
    Ok((dataset, manifest))
}

/// Price-earnings multiple whose payback period is exactly `target` at
/// growth `g`: inverts the price equation, `P/E = (1+g)((1+g)^N - 1)/g`.
fn pe_for_payback(target: f64, growth: f64) -> f64 {
    if growth.abs() < 1e-6 {
        return target;
    }
    (1.0 + growth) * ((1.0 + growth).powf(target) - 1.0) / growth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Universe;
    use crate::growth::{align_fiscal_years, annualized_growth};
    use crate::types::ym;
    use crate::valuation::{ga_pe, ValuationInputs};

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec::quintile_demo(50, ym(1995, 1), 60, 0.0)
    }

    #[test]
    fn same_seed_reproduces_identical_output() {
        let (a, ma) = generate_synthetic(&small_spec(), 7).unwrap();
        let (b, mb) = generate_synthetic(&small_spec(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let (c, _) = generate_synthetic(&small_spec(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_dataset_passes_validation() {
        let (dataset, _) = generate_synthetic(&small_spec(), 3).unwrap();
        let (universe, report) = Universe::build(dataset).unwrap();
        assert!(report.is_clean(), "{report}");
        assert_eq!(universe.securities().count(), 50);
    }

    #[test]
    fn planted_growth_is_recovered_by_the_estimator() {
        let (dataset, manifest) = generate_synthetic(&small_spec(), 11).unwrap();
        let series = align_fiscal_years(&dataset.earnings).unwrap();
        for plan in &manifest.firms {
            let s = series
                .iter()
                .find(|s| s.firm_id() == &plan.firm_id)
                .unwrap();
            for k in 1..=3u32 {
                let e_end = s.annual(1998).unwrap();
                let e_start = s.annual(1998 - k as i32).unwrap();
                let g = annualized_growth(e_end, e_start, k).unwrap();
                assert!(
                    (g - plan.growth).abs() <= 1e-12 * plan.growth.abs().max(1.0),
                    "firm {} k={k}: {g} vs {}",
                    plan.firm_id,
                    plan.growth
                );
            }
        }
    }

    #[test]
    fn planted_payback_is_recovered_at_each_march() {
        let (dataset, manifest) = generate_synthetic(&small_spec(), 5).unwrap();
        let (universe, _) = Universe::build(dataset).unwrap();
        let series = universe.earnings_for(&manifest.firms[0].firm_id).unwrap();
        let plan = &manifest.firms[0];
        for year in [1996, 1997, 1998] {
            let close = universe
                .price_at(&plan.security_id, ym(year, 3))
                .unwrap()
                .close_price;
            let eps = series.annual(year - 1).unwrap();
            let inputs = ValuationInputs::new(close, eps, plan.growth).unwrap();
            let years = ga_pe(&inputs).years().expect("finite plant");
            let target = plan.target_payback.unwrap();
            assert!(
                (years - target).abs() < 1e-9 * target,
                "year {year}: {years} vs {target}"
            );
        }
    }

    #[test]
    fn noiseless_returns_follow_the_stratum_model_exactly() {
        let (dataset, manifest) = generate_synthetic(&small_spec(), 13).unwrap();
        let spec = small_spec();
        for plan in manifest.firms.iter().take(10) {
            let stratum = &spec.strata[plan.stratum];
            for row in dataset
                .prices
                .iter()
                .filter(|p| p.security_id == plan.security_id)
                .take(6)
            {
                let f = dataset
                    .factors
                    .iter()
                    .find(|f| f.month == row.month)
                    .unwrap();
                let expected = f.risk_free
                    + stratum.alpha
                    + stratum.beta_market * (f.market_return - f.risk_free)
                    + stratum.beta_hml * f.hml
                    + stratum.beta_smb * f.smb;
                assert!(
                    (row.total_return - expected).abs() < 1e-15,
                    "{} {}",
                    plan.security_id,
                    row.month
                );
            }
        }
    }

    #[test]
    fn infinite_plants_sit_below_the_solvency_bound() {
        let (_, manifest) = generate_synthetic(&small_spec(), 17).unwrap();
        let infinite: Vec<_> = manifest
            .firms
            .iter()
            .filter(|f| f.target_payback.is_none())
            .collect();
        assert!(!infinite.is_empty());
        for plan in infinite {
            assert_eq!(plan.stratum, 4);
            let bound = -1.0 / (plan.pe + 1.0);
            assert!(plan.growth < bound, "{} vs {}", plan.growth, bound);
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = small_spec();
        spec.months = 12;
        assert!(matches!(
            generate_synthetic(&spec, 1),
            Err(SyntheticError::Infeasible(_))
        ));

        let mut spec = small_spec();
        spec.firm_count = 3;
        assert!(generate_synthetic(&spec, 1).is_err());

        let mut spec = small_spec();
        spec.strata[0].infinite_fraction = 0.5;
        assert!(generate_synthetic(&spec, 1).is_err());
    }
}
