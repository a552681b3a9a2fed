//! Per-segment exponent estimation, confidence intervals and the
//! goodness-of-fit statistic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;

use crate::error::{domain, Error, Result};
use crate::gamma::{gamma_fbm, gamma_locfrac, gamma_lrd};
use crate::scalogram::{LogVarianceVector, ScaleGrid};
use crate::wavelet::MotherWavelet;

/// Relative ridge added to the diagonal of Gamma before inversion.
pub const RIDGE: f64 = 1e-8;

/// Admissible range of the plug-in exponent (D or H) for Gamma.
pub const EXPONENT_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Fgls,
}

/// Slope alpha and intercept log beta of a log-log regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub alpha: f64,
    pub log_beta: f64,
    pub method: Method,
    /// Asymptotic covariance of (alpha, log beta), already divided by n_eff.
    pub cov: [[f64; 2]; 2],
    pub n_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub alpha: (f64, f64),
    pub log_beta: (f64, f64),
}

/// How the regression slope maps to the family's exponent, and which
/// Gamma applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentModel {
    /// alpha = D, with Hurst index H = (1 + D) / 2.
    Lrd,
    /// alpha = 2H + 1.
    Fbm,
    /// alpha = 2H + 1, band-limited analysis.
    #[serde(rename = "locfrac")]
    LocallyFractional,
}

impl ExponentModel {
    pub fn exponent(self, alpha: f64) -> f64 {
        match self {
            ExponentModel::Lrd => alpha,
            _ => 0.5 * (alpha - 1.0),
        }
    }

    pub fn alpha(self, exponent: f64) -> f64 {
        match self {
            ExponentModel::Lrd => exponent,
            _ => 2.0 * exponent + 1.0,
        }
    }

    /// Gamma at the exponent implied by `alpha`. The exponent is clamped
    /// into the range where Gamma is defined; the flag reports clamping.
    pub fn gamma(self, alpha: f64, grid: &ScaleGrid, psi: &MotherWavelet) -> Result<(DMatrix<f64>, bool)> {
        if !alpha.is_finite() {
            return domain(format!("slope must be finite, got {alpha}"));
        }
        let e = self.exponent(alpha);
        let (lo, hi) = EXPONENT_CLAMP;
        match self {
            ExponentModel::LocallyFractional => Ok((gamma_locfrac(e, grid, psi)?, false)),
            ExponentModel::Lrd | ExponentModel::Fbm => {
                let c = e.clamp(lo, hi);
                let g = if self == ExponentModel::Lrd { gamma_lrd(c, grid, psi)? } else { gamma_fbm(c, grid, psi)? };
                Ok((g, c != e))
            }
        }
    }
}

fn check_design(y: &[f64], l: &DMatrix<f64>) -> Result<()> {
    if l.ncols() != 2 || l.nrows() != y.len() || y.len() < 3 {
        return domain(format!("design must be {}x2 with at least three rows", y.len()));
    }
    Ok(())
}

/// Closed-form least squares (alpha, log beta) of y on the design.
pub fn ols_fit(y: &[f64], l: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_design(y, l)?;
    let n = y.len() as f64;
    let xm = l.column(0).sum() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = l[(i, 0)] - xm;
        sxx += dx * dx;
        sxy += dx * (v - ym);
    }
    if sxx <= 0.0 {
        return domain("design has a single distinct scale");
    }
    let alpha = sxy / sxx;
    Ok((alpha, ym - alpha * xm))
}

fn to_array(m: &DMatrix<f64>, scale: f64) -> [[f64; 2]; 2] {
    [[m[(0, 0)] * scale, m[(0, 1)] * scale], [m[(1, 0)] * scale, m[(1, 1)] * scale]]
}

fn regularised(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gamma.nrows();
    if gamma.ncols() != n {
        return domain("Gamma must be square");
    }
    let ridge = RIDGE * gamma.trace() / n as f64;
    let mut g = gamma.clone();
    for i in 0..n {
        g[(i, i)] += ridge;
    }
    Ok(g)
}

/// OLS estimate with covariance Sigma / n_eff, where
/// Sigma = (L'L)^{-1} L' Gamma L (L'L)^{-1}.
pub fn ols_theta(y: &LogVarianceVector, l: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<ThetaEstimate> {
    let (alpha, log_beta) = ols_fit(&y.values, l)?;
    if gamma.nrows() != l.nrows() {
        return domain("Gamma and design sizes differ");
    }
    let ltl_inv = (l.transpose() * l)
        .try_inverse()
        .ok_or_else(|| Error::Domain("design matrix is rank deficient".into()))?;
    let h = &ltl_inv * l.transpose();
    let sigma = &h * gamma * h.transpose();
    Ok(ThetaEstimate { alpha, log_beta, method: Method::Ols, cov: to_array(&sigma, 1.0 / y.n_eff), n_eff: y.n_eff })
}

/// FGLS estimate with covariance M / n_eff, M = (L' Gamma^{-1} L)^{-1},
/// after ridge regularisation of Gamma. Falls back to OLS (flag set)
/// when the regularised Gamma is still not positive definite.
pub fn fgls_theta(y: &LogVarianceVector, l: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<(ThetaEstimate, bool)> {
    check_design(&y.values, l)?;
    if gamma.nrows() != l.nrows() {
        return domain("Gamma and design sizes differ");
    }
    let g = regularised(gamma)?;
    let Some(chol) = g.cholesky() else {
        return Ok((ols_theta(y, l, gamma)?, true));
    };
    let gi_l = chol.solve(l);
    let Some(m) = (l.transpose() * &gi_l).try_inverse() else {
        return Ok((ols_theta(y, l, gamma)?, true));
    };
    let yv = DVector::from_column_slice(&y.values);
    let theta = &m * gi_l.transpose() * yv;
    Ok((
        ThetaEstimate { alpha: theta[0], log_beta: theta[1], method: Method::Fgls, cov: to_array(&m, 1.0 / y.n_eff), n_eff: y.n_eff },
        false,
    ))
}

/// T = n_eff (Y - L theta)' Gamma^{-1} (Y - L theta), compared with chi^2(l - 2).
pub fn gof(y: &LogVarianceVector, l: &DMatrix<f64>, theta: &ThetaEstimate, gamma: &DMatrix<f64>) -> Result<GofResult> {
    check_design(&y.values, l)?;
    let g = regularised(gamma)?;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("regularised Gamma in the goodness-of-fit statistic".into()))?;
    let resid = DVector::from_iterator(
        y.values.len(),
        y.values.iter().enumerate().map(|(i, v)| v - theta.alpha * l[(i, 0)] - theta.log_beta),
    );
    let statistic = (y.n_eff * resid.dot(&chol.solve(&resid))).max(0.0);
    let df = y.values.len() - 2;
    Ok(GofResult { statistic, df, p_value: chi2_sf(statistic, df) })
}

/// Upper tail of chi^2(df) via the regularised incomplete gamma function.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(0.5 * df as f64, 0.5 * x).clamp(0.0, 1.0)
}

/// Quantile of chi^2(df) at probability p, by bisection on the tail.
pub fn chi2_quantile(p: f64, df: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0 + 10.0 * df as f64);
    while chi2_sf(hi, df) > 1.0 - p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - chi2_sf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gaussian interval theta +- z_{(1+level)/2} sqrt(cov_ii).
pub fn confidence_interval(est: &ThetaEstimate, level: f64) -> Result<ConfidenceInterval> {
    if !(0.0..1.0).contains(&level) {
        return domain(format!("confidence level must lie in [0, 1), got {level}"));
    }
    let z = if level == 0.0 { 0.0 } else { Normal::standard().inverse_cdf(0.5 * (1.0 + level)) };
    let half = |v: f64| z * v.max(0.0).sqrt();
    let (ha, hb) = (half(est.cov[0][0]), half(est.cov[1][1]));
    Ok(ConfidenceInterval {
        level,
        alpha: (est.alpha - ha, est.alpha + ha),
        log_beta: (est.log_beta - hb, est.log_beta + hb),
    })
}
