//! Closed-form valuation math: the growth-adjusted payback period and its
//! companion measures.
//!
//! The central quantity is the number of years `N` it takes a stock's
//! cumulative earnings per share, growing at a constant annual rate `g`, to
//! repay the current price `P`:
//!
//! ```text
//! P = E (1+g) ((1+g)^N - 1) / g        (price equation)
//! N = ln(1 + (g/(1+g)) P/E) / ln(1+g)  (closed form)
//! ```
//!
//! For `g = 0` the measure reduces to the plain `P/E`; for
//! `g <= -E/(P+E)` total future earnings never reach `P` and the payback is
//! infinite. The infinite branch carries the payback proportion
//! `E_inf/P = E(1+g)/(-gP)` from which the ranking key
//! `N* = N_max + P/E_inf` is built.

use thiserror::Error;

/// Growth magnitudes below this route to the analytic `g -> 0` limit
/// `N = P/E`. The closed form is a 0/0 indeterminate at `g = 0` and loses
/// precision to cancellation just around it.
pub const ZERO_GROWTH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("price must be positive and finite, got {0}")]
    InvalidPrice(f64),
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("growth must be finite and greater than -1, got {0}")]
    InvalidGrowth(f64),
    #[error("years must be positive and finite, got {0}")]
    InvalidYears(f64),
    #[error("PEG is undefined for non-positive percentage growth, got {0}")]
    UndefinedPeg(f64),
    #[error("growth {growth} exceeds the solvency bound {bound}; payback is finite")]
    NotInfiniteRegion { growth: f64, bound: f64 },
    #[error("n_max must be non-negative and finite, got {0}")]
    InvalidNMax(f64),
    #[error("payout ratio must lie in (0, 1], got {0}")]
    InvalidPayout(f64),
    #[error("cost of equity must be positive and finite, got {0}")]
    InvalidCostOfEquity(f64),
    #[error("cost of equity {cost_of_equity} must exceed growth {growth}: valuation diverges")]
    GordonDivergence { cost_of_equity: f64, growth: f64 },
}

/// One security's valuation state at a formation date: price `P`, trailing
/// annual earnings per share `E > 0`, and annual earnings growth `g > -1`.
///
/// Construction rejects anything outside that domain, so the measure
/// functions below are total over `ValuationInputs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuationInputs {
    price: f64,
    eps: f64,
    growth: f64,
}

impl ValuationInputs {
    pub fn new(price: f64, eps: f64, growth: f64) -> Result<Self, ValuationError> {
        if !price.is_finite() || price <= 0.0 {
            return Err(ValuationError::InvalidPrice(price));
        }
        if !eps.is_finite() || eps <= 0.0 {
            return Err(ValuationError::InvalidEps(eps));
        }
        if !growth.is_finite() || growth <= -1.0 {
            return Err(ValuationError::InvalidGrowth(growth));
        }
        Ok(Self { price, eps, growth })
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// Plain trailing price-earnings ratio `P/E`.
    pub fn pe(&self) -> f64 {
        self.price / self.eps
    }

    /// Growth floor below which the payback never completes.
    pub fn solvency_bound(&self) -> f64 {
        -self.eps / (self.price + self.eps)
    }
}

/// Result of the growth-adjusted payback computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaPeOutcome {
    /// Payback completes after `years` (a positive real, not rounded).
    Finite { years: f64 },
    /// Total future earnings never reach the price. `payback_proportion` is
    /// the fraction `E_inf/P` of the price ever recouped, in `(0, 1]`; the
    /// value `1.0` occurs only when `g` sits exactly on the solvency bound.
    Infinite { payback_proportion: f64 },
}

impl GaPeOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, GaPeOutcome::Finite { .. })
    }

    pub fn years(&self) -> Option<f64> {
        match self {
            GaPeOutcome::Finite { years } => Some(*years),
            GaPeOutcome::Infinite { .. } => None,
        }
    }

    pub fn payback_proportion(&self) -> Option<f64> {
        match self {
            GaPeOutcome::Finite { .. } => None,
            GaPeOutcome::Infinite { payback_proportion } => Some(*payback_proportion),
        }
    }
}

/// Total earnings per share accrued over the next `years` years when annual
/// earnings start at `eps` and grow at rate `growth`:
/// `E (1+g) ((1+g)^years - 1) / g`, or `eps * years` in the zero-growth
/// limit.
///
/// `years` may be fractional; the geometric-series form interpolates
/// smoothly between whole years.
pub fn cumulative_earnings(eps: f64, growth: f64, years: f64) -> Result<f64, ValuationError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(ValuationError::InvalidEps(eps));
    }
    if !growth.is_finite() || growth <= -1.0 {
        return Err(ValuationError::InvalidGrowth(growth));
    }
    if !years.is_finite() || years <= 0.0 {
        return Err(ValuationError::InvalidYears(years));
    }
    if growth.abs() < ZERO_GROWTH_TOLERANCE {
        return Ok(eps * years);
    }
    let base = 1.0 + growth;
    Ok(eps * base * (base.powf(years) - 1.0) / growth)
}

/// Lower bound `-E/(P+E)` on the growth rate for the payback to complete.
/// Always lies in `(-1, 0)`.
pub fn solvency_bound(price: f64, eps: f64) -> Result<f64, ValuationError> {
    if !price.is_finite() || price <= 0.0 {
        return Err(ValuationError::InvalidPrice(price));
    }
    if !eps.is_finite() || eps <= 0.0 {
        return Err(ValuationError::InvalidEps(eps));
    }
    Ok(-eps / (price + eps))
}

/// The growth-adjusted payback period.
///
/// Routes on the growth rate:
/// - `|g|` below [`ZERO_GROWTH_TOLERANCE`]: `Finite` with `N = P/E` (the
///   analytic limit).
/// - `g` above the solvency bound: `Finite` with the closed-form `N`.
/// - `g` at or below the bound: `Infinite` carrying the payback proportion.
///   The exact-bound tie classifies as infinite because no finite horizon
///   solves the price equation there.
pub fn ga_pe(inputs: &ValuationInputs) -> GaPeOutcome {
    let g = inputs.growth;
    if g.abs() < ZERO_GROWTH_TOLERANCE {
        return GaPeOutcome::Finite { years: inputs.pe() };
    }
    if g <= inputs.solvency_bound() {
        let payback_proportion = inputs.eps * (1.0 + g) / (-g * inputs.price);
        return GaPeOutcome::Infinite { payback_proportion };
    }
    let years = ((g / (1.0 + g)) * inputs.pe()).ln_1p() / g.ln_1p();
    if !years.is_finite() {
        // Within a few ulps above the bound the log argument can cancel to
        // zero (or below); the true payback there exceeds any representable
        // horizon, so classify with the infinite branch.
        let payback_proportion = (inputs.eps * (1.0 + g) / (-g * inputs.price)).min(1.0);
        return GaPeOutcome::Infinite { payback_proportion };
    }
    GaPeOutcome::Finite { years }
}

/// Fraction `E_inf/P = E(1+g)/(-gP)` of the price ever repaid when earnings
/// contract geometrically. Defined only on the infinite-outcome region
/// `g <= -E/(P+E)`; lies in `(0, 1]`, reaching `1.0` exactly on the bound.
pub fn payback_proportion(inputs: &ValuationInputs) -> Result<f64, ValuationError> {
    let bound = inputs.solvency_bound();
    if inputs.growth > bound {
        return Err(ValuationError::NotInfiniteRegion {
            growth: inputs.growth,
            bound,
        });
    }
    Ok(inputs.eps * (1.0 + inputs.growth) / (-inputs.growth * inputs.price))
}

/// Ranking key `N* = N_max + P/E_inf` for infinite-payback securities.
///
/// `n_max` is the highest finite payback period observed in the same
/// ranking cohort. Since `P/E_inf >= 1` on the infinite region, `N*` always
/// sorts after every finite outcome of the cohort. The key orders
/// securities; it is not itself a payback time.
pub fn n_star(inputs: &ValuationInputs, n_max: f64) -> Result<f64, ValuationError> {
    if !n_max.is_finite() || n_max < 0.0 {
        return Err(ValuationError::InvalidNMax(n_max));
    }
    let proportion = payback_proportion(inputs)?;
    Ok(n_max + 1.0 / proportion)
}

/// The price-earnings-to-growth heuristic: `P/E` divided by the percentage
/// growth rate. Undefined for non-positive growth.
pub fn peg_ratio(pe: f64, growth_percent: f64) -> Result<f64, ValuationError> {
    if !pe.is_finite() || pe <= 0.0 {
        return Err(ValuationError::InvalidPrice(pe));
    }
    if !growth_percent.is_finite() || growth_percent <= 0.0 {
        return Err(ValuationError::UndefinedPeg(growth_percent));
    }
    Ok(pe / growth_percent)
}

/// Smallest whole number of years `N >= 1` whose cumulative earnings reach
/// the price, or `None` when the payback never completes.
///
/// Computed from the closed-form payback period, then snapped to the exact
/// integer schedule by comparing cumulative earnings at the neighbouring
/// whole years (the float ceiling alone can land one year off when `N` sits
/// next to an integer).
pub fn peg_payback_period(inputs: &ValuationInputs) -> Option<u64> {
    let years = ga_pe(inputs).years()?;
    let cum = |n: u64| {
        cumulative_earnings(inputs.eps, inputs.growth, n as f64)
            .expect("whole-year horizon on validated inputs")
    };
    let mut n = (years.ceil() as u64).max(1);
    // Bounded adjustment: away from the solvency bound one step suffices;
    // just above it cumulative earnings plateau within float resolution of
    // the price and walking further would chase rounding noise.
    for _ in 0..4 {
        if n > 1 && cum(n - 1) >= inputs.price {
            n -= 1;
        } else {
            break;
        }
    }
    for _ in 0..4 {
        if cum(n) < inputs.price {
            n += 1;
        } else {
            break;
        }
    }
    Some(n)
}

/// Dividend-discount inputs: payout ratio `gamma` in `(0, 1]`, cost of
/// equity `r`, dividend growth `g` with `r > g` (the perpetuity diverges
/// otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GordonInputs {
    payout_ratio: f64,
    cost_of_equity: f64,
    growth: f64,
}

impl GordonInputs {
    pub fn new(
        payout_ratio: f64,
        cost_of_equity: f64,
        growth: f64,
    ) -> Result<Self, ValuationError> {
        if !payout_ratio.is_finite() || payout_ratio <= 0.0 || payout_ratio > 1.0 {
            return Err(ValuationError::InvalidPayout(payout_ratio));
        }
        if !cost_of_equity.is_finite() || cost_of_equity <= 0.0 {
            return Err(ValuationError::InvalidCostOfEquity(cost_of_equity));
        }
        if !growth.is_finite() || growth <= -1.0 {
            return Err(ValuationError::InvalidGrowth(growth));
        }
        if cost_of_equity <= growth {
            return Err(ValuationError::GordonDivergence {
                cost_of_equity,
                growth,
            });
        }
        Ok(Self {
            payout_ratio,
            cost_of_equity,
            growth,
        })
    }

    pub fn payout_ratio(&self) -> f64 {
        self.payout_ratio
    }

    pub fn cost_of_equity(&self) -> f64 {
        self.cost_of_equity
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }
}

/// Fair price-earnings multiple `(1+g) gamma / (r - g)` implied by a
/// constant-growth dividend discount. Grows without bound as `g` approaches
/// `r` from below.
pub fn gordon_fair_pe(inputs: &GordonInputs) -> f64 {
    (1.0 + inputs.growth) * inputs.payout_ratio / (inputs.cost_of_equity - inputs.growth)
}
