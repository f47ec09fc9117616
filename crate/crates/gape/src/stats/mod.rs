//! Performance statistics for monthly return series: geometric annualized
//! returns, Sharpe ratios, paired t-tests, and the three-factor regression.
//!
//! All dispersion measures use sample conventions: standard deviations
//! divide by `n - 1` and regression standard errors use the unbiased
//! residual variance.

pub mod dist;

use thiserror::Error;

use crate::data::FactorMonth;
use crate::types::ReturnSeries;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series must cover identical months")]
    MisalignedSeries,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("excess returns have zero dispersion; the ratio is undefined")]
    ZeroDispersion,
    #[error("design matrix is rank deficient: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: &'static str },
}

/// Geometric average annual rate of return: for monthly returns
/// `r_1..r_M`, `prod(1 + r_j)^(12/M) - 1`.
///
/// A terminal total-loss month (`r = -1`) compounds the product to zero and
/// the annualized rate to exactly -1.
pub fn annualized_return(series: &ReturnSeries) -> f64 {
    let months = series.len() as f64;
    let log_growth: f64 = series.values().iter().map(|r| r.ln_1p()).sum();
    ((12.0 / months) * log_growth).exp_m1()
}

/// Monthly Sharpe ratio and its `sqrt(12)` annualized companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpe {
    pub monthly: f64,
    pub annualized: f64,
}

/// Mean excess return over the risk-free series divided by the sample
/// standard deviation of the excess returns.
pub fn sharpe_monthly(
    series: &ReturnSeries,
    risk_free: &ReturnSeries,
) -> Result<Sharpe, StatsError> {
    if !series.same_months(risk_free) {
        return Err(StatsError::MisalignedSeries);
    }
    if series.len() < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            got: series.len(),
        });
    }
    let excess: Vec<f64> = series
        .values()
        .iter()
        .zip(risk_free.values())
        .map(|(r, rf)| r - rf)
        .collect();
    let m = mean(&excess);
    let sd = sample_sd(&excess, m);
    if sd == 0.0 {
        return Err(StatsError::ZeroDispersion);
    }
    let monthly = m / sd;
    Ok(Sharpe {
        monthly,
        annualized: monthly * 12f64.sqrt(),
    })
}

/// Paired two-tailed t-test between two aligned monthly return series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
    /// Mean of the per-month differences `a_j - b_j`.
    pub mean_diff: f64,
}

/// Tests whether the mean monthly difference between `a` and `b` is zero.
///
/// Degenerate dispersion is flagged through the statistic itself: zero
/// spread with a nonzero mean yields an infinite `t` and `p = 0`; zero
/// spread with zero mean yields `t = 0` and `p = 1` by convention.
pub fn paired_t_test(a: &ReturnSeries, b: &ReturnSeries) -> Result<TTestResult, StatsError> {
    if !a.same_months(b) {
        return Err(StatsError::MisalignedSeries);
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: n });
    }
    let diffs: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    let mean_diff = mean(&diffs);
    let sd = sample_sd(&diffs, mean_diff);
    let dof = n - 1;
    let (t, p) = if sd == 0.0 {
        if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean_diff), 0.0)
        }
    } else {
        let t = mean_diff / (sd / (n as f64).sqrt());
        (t, dist::student_t_two_tailed_p(t, dof as f64))
    };
    Ok(TTestResult {
        t,
        p,
        dof,
        mean_diff,
    })
}

/// Three-factor regression output: monthly intercept, factor loadings,
/// their t-statistics and standard errors (both aligned
/// `[alpha, market, hml, smb]`), and fit quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionResult {
    pub alpha: f64,
    pub beta_market: f64,
    pub beta_hml: f64,
    pub beta_smb: f64,
    pub t_stats: [f64; 4],
    pub std_errors: [f64; 4],
    pub r_squared: f64,
    pub residual_dof: usize,
}

const DESIGN_COLUMNS: [&str; 4] = ["intercept", "market_excess", "hml", "smb"];

/// Regresses the portfolio's excess returns on the market excess return and
/// the HML and SMB factor series by ordinary least squares.
///
/// `factors` must cover exactly the portfolio's months, in order. Standard
/// errors come from the unbiased residual variance times the diagonal of
/// the inverted normal matrix.
pub fn ols_three_factor(
    portfolio: &ReturnSeries,
    factors: &[FactorMonth],
) -> Result<RegressionResult, StatsError> {
    let n = portfolio.len();
    if n < 5 {
        return Err(StatsError::TooFewObservations { needed: 5, got: n });
    }
    if factors.len() != n
        || !portfolio
            .iter()
            .zip(factors)
            .all(|((month, _), f)| f.month == month)
    {
        return Err(StatsError::MisalignedSeries);
    }

    let rows: Vec<[f64; 4]> = factors
        .iter()
        .map(|f| [1.0, f.market_return - f.risk_free, f.hml, f.smb])
        .collect();
    let y: Vec<f64> = portfolio
        .values()
        .iter()
        .zip(factors)
        .map(|(r, f)| r - f.risk_free)
        .collect();

    // Normal equations: (X'X) beta = X'y.
    let mut xtx = [[0.0f64; 4]; 4];
    let mut xty = [0.0f64; 4];
    for (row, &yi) in rows.iter().zip(&y) {
        for i in 0..4 {
            xty[i] += row[i] * yi;
            for j in 0..4 {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }

    let inv = invert_4x4(xtx).map_err(|col| StatsError::RankDeficient {
        column: DESIGN_COLUMNS[col],
    })?;
    let mut beta = [0.0f64; 4];
    for i in 0..4 {
        for j in 0..4 {
            beta[i] += inv[i][j] * xty[j];
        }
    }

    let y_mean = mean(&y);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (row, &yi) in rows.iter().zip(&y) {
        let fitted: f64 = (0..4).map(|j| beta[j] * row[j]).sum();
        ss_res += (yi - fitted) * (yi - fitted);
        ss_tot += (yi - y_mean) * (yi - y_mean);
    }
    let residual_dof = n - 4;
    let sigma2 = ss_res / residual_dof as f64;
    let mut t_stats = [0.0f64; 4];
    let mut std_errors = [0.0f64; 4];
    for i in 0..4 {
        let se = (sigma2 * inv[i][i]).sqrt();
        std_errors[i] = se;
        t_stats[i] = if se == 0.0 {
            f64::INFINITY.copysign(beta[i])
        } else {
            beta[i] / se
        };
    }
    let r_squared = if ss_tot == 0.0 {
        // Constant response: perfect fit or no fit at all.
        if ss_res < f64::EPSILON {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };

    Ok(RegressionResult {
        alpha: beta[0],
        beta_market: beta[1],
        beta_hml: beta[2],
        beta_smb: beta[3],
        t_stats,
        std_errors,
        r_squared,
        residual_dof,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Gauss-Jordan inverse with partial pivoting. On rank deficiency returns
/// the index of the column where elimination found no usable pivot.
fn invert_4x4(a: [[f64; 4]; 4]) -> Result<[[f64; 4]; 4], usize> {
    let scale = a.iter().flatten().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let tol = scale.max(1.0) * 1e-12;

    // Augmented [A | I]
    let mut m = [[0.0f64; 8]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[i][j];
        }
        m[i][4 + i] = 1.0;
    }
    for col in 0..4 {
        let pivot_row = (col..4)
            .max_by(|&r1, &r2| m[r1][col].abs().total_cmp(&m[r2][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() < tol {
            return Err(col);
        }
        m.swap(col, pivot_row);
        let pivot = m[col][col];
        for value in &mut m[col] {
            *value /= pivot;
        }
        let pivot_row = m[col];
        for (row, values) in m.iter_mut().enumerate() {
            if row != col {
                let factor = values[col];
                for (value, pivot_value) in values.iter_mut().zip(&pivot_row) {
                    *value -= factor * pivot_value;
                }
            }
        }
    }
    let mut inv = [[0.0f64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            inv[i][j] = m[i][4 + j];
        }
    }
    Ok(inv)
}
