//! Segment variances of wavelet coefficients across a grid of scales.
//!
//! For a segment [k, k') and scale a, the variance statistic averages the
//! squared coefficients e(a, a p) over shift indices p in [floor(k/a),
//! floor(k'/a)), normalised by a / (k' - k). The trimmed variant drops a
//! fraction w of the segment at each end, which keeps the long tails of a
//! band-limited wavelet away from the boundaries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::synth::SampledPath;
use crate::wavelet::{coefficient, coefficients_on_grid, MotherWavelet};

/// Scales a_N r_1 < ... < a_N r_l with integer ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub base: f64,
    pub ratios: Vec<u32>,
    /// Trimming fraction w in [0, 1/2); zero means the plain variance.
    pub trim: f64,
}

impl ScaleGrid {
    pub fn new(base: f64, ratios: Vec<u32>, trim: f64) -> Result<Self> {
        if !(base > 0.0 && base.is_finite()) {
            return domain(format!("base scale must be positive, got {base}"));
        }
        if ratios.len() < 2 {
            return domain("a log-log regression needs at least two scales");
        }
        if ratios[0] == 0 || ratios.windows(2).any(|w| w[1] <= w[0]) {
            return domain(format!("scale ratios must be positive and increasing, got {ratios:?}"));
        }
        if !(0.0..0.5).contains(&trim) {
            return domain(format!("trimming fraction must lie in [0, 1/2), got {trim}"));
        }
        Ok(ScaleGrid { base, ratios, trim })
    }

    /// Ratios 1, 2, ..., ell.
    pub fn uniform(base: f64, ell: usize) -> Result<Self> {
        Self::new(base, (1..=ell as u32).collect(), 0.0)
    }

    /// Integer ratios r0+1, ..., r0+ell whose scales see only frequencies in
    /// [f_min, f_max] through a wavelet band [lambda, mu].
    ///
    /// Scale a sees |xi| in [lambda/a, mu/a], so admissible scales form
    /// [mu/f_max, lambda/f_min]. r0 is the smallest offset for which the
    /// ratio span (r0+ell)/(r0+1) fits in that interval; the largest scale
    /// is pinned to lambda/f_min.
    pub fn band_limited(lambda: f64, mu: f64, f_min: f64, f_max: f64, ell: usize, trim: f64) -> Result<Self> {
        if !(lambda > 0.0 && mu > lambda && f_min > 0.0 && f_max > f_min) {
            return domain("band-limited grid needs 0 < lambda < mu and 0 < f_min < f_max");
        }
        let span = lambda * f_max / (mu * f_min);
        if span <= 1.0 {
            return Err(Error::BandCondition(format!(
                "mu/lambda = {} must be below f_max/f_min = {}",
                mu / lambda,
                f_max / f_min
            )));
        }
        if ell < 2 {
            return domain("a log-log regression needs at least two scales");
        }
        // (r0 + ell) / (r0 + 1) <= span  <=>  r0 >= (ell - span) / (span - 1)
        let r0 = ((ell as f64 - span) / (span - 1.0)).ceil().max(0.0) as u32;
        let top = r0 + ell as u32;
        let base = lambda / f_min / top as f64;
        Self::new(base, (r0 + 1..=top).collect(), trim)
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn scale(&self, i: usize) -> f64 {
        self.base * self.ratios[i] as f64
    }

    pub fn scales(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.scale(i)).collect()
    }

    pub fn log_scales(&self) -> Vec<f64> {
        self.scales().iter().map(|a| a.ln()).collect()
    }

    pub fn largest(&self) -> f64 {
        self.scale(self.len() - 1)
    }
}

/// Log-variance vector of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVarianceVector {
    pub values: Vec<f64>,
    pub start: f64,
    pub end: f64,
    /// (end - start) / a_N, the effective sample size of the segment.
    pub n_eff: f64,
}

fn floor_tol(x: f64) -> f64 {
    (x + 1e-9 * x.abs().max(1.0)).floor()
}

/// Shift indices [lo, hi) averaged by the (trimmed) variance of [k, k').
pub fn shift_range(k: f64, k_end: f64, a: f64, trim: f64) -> (i64, i64) {
    let len = k_end - k;
    if trim > 0.0 {
        let lo = floor_tol((k + trim * len) / a) as i64 + 1;
        let hi = floor_tol((k_end - trim * len) / a) as i64 - 1;
        (lo, hi + 1)
    } else {
        (floor_tol(k / a) as i64, floor_tol(k_end / a) as i64)
    }
}

fn check_segment(path: &SampledPath, k: f64, k_end: f64) -> Result<()> {
    if !(k >= 0.0 && k_end > k && k_end <= path.horizon() * (1.0 + 1e-12)) {
        return domain(format!("segment [{k}, {k_end}) must satisfy 0 <= k < k' <= {}", path.horizon()));
    }
    Ok(())
}

/// Plain segment variance at scale a, computed coefficient by coefficient.
pub fn seg_variance(path: &SampledPath, psi: &MotherWavelet, a: f64, k: f64, k_end: f64) -> Result<f64> {
    seg_variance_trimmed(path, psi, a, k, k_end, 0.0)
}

/// Trimmed segment variance a / ((1-2w)(k'-k)) sum e^2(a, a p).
pub fn seg_variance_trimmed(path: &SampledPath, psi: &MotherWavelet, a: f64, k: f64, k_end: f64, trim: f64) -> Result<f64> {
    check_segment(path, k, k_end)?;
    if !(0.0..0.5).contains(&trim) {
        return domain(format!("trimming fraction must lie in [0, 1/2), got {trim}"));
    }
    let (lo, hi) = shift_range(k, k_end, a, trim);
    if hi <= lo {
        return Err(Error::SegmentTooShort { start: k, end: k_end, scale: a });
    }
    let mut acc = 0.0;
    for p in lo..hi {
        acc += coefficient(path, psi, a, a * p as f64)?.powi(2);
    }
    Ok(a / ((1.0 - 2.0 * trim) * (k_end - k)) * acc)
}

/// Design matrix with rows (log a_i, 1).
pub fn design_matrix(grid: &ScaleGrid) -> DMatrix<f64> {
    let logs = grid.log_scales();
    DMatrix::from_fn(grid.len(), 2, |i, j| if j == 0 { logs[i] } else { 1.0 })
}

/// Precomputed coefficients and prefix sums of their squares on every
/// scale, so that any segment's log-variance vector costs O(ell).
#[derive(Debug, Clone)]
pub struct Scalogram {
    grid: ScaleGrid,
    horizon: f64,
    /// Per scale: index of the first admissible shift and prefix sums.
    first: Vec<i64>,
    prefix: Vec<Vec<f64>>,
    x_centered: Vec<f64>,
    sxx: f64,
}

impl Scalogram {
    pub fn new(path: &SampledPath, psi: &MotherWavelet, grid: &ScaleGrid) -> Result<Self> {
        let mut first = Vec::with_capacity(grid.len());
        let mut prefix = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let (f, coeffs) = coefficients_on_grid(path, psi, grid.scale(i))?;
            let mut acc = 0.0;
            let mut pre = Vec::with_capacity(coeffs.len() + 1);
            pre.push(0.0);
            for c in coeffs {
                acc += c * c;
                pre.push(acc);
            }
            first.push(f as i64);
            prefix.push(pre);
        }
        let logs = grid.log_scales();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let x_centered: Vec<f64> = logs.iter().map(|x| x - mean).collect();
        let sxx = x_centered.iter().map(|x| x * x).sum();
        Ok(Scalogram { grid: grid.clone(), horizon: path.horizon(), first, prefix, x_centered, sxx })
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Log-variance vector (log S_i) of the segment [k, k').
    pub fn log_variances(&self, k: f64, k_end: f64) -> Result<LogVarianceVector> {
        if !(k >= 0.0 && k_end > k && k_end <= self.horizon * (1.0 + 1e-12)) {
            return domain(format!("segment [{k}, {k_end}) must satisfy 0 <= k < k' <= {}", self.horizon));
        }
        let w = self.grid.trim;
        let mut values = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.len() {
            let a = self.grid.scale(i);
            let (lo, hi) = shift_range(k, k_end, a, w);
            if hi <= lo {
                return Err(Error::SegmentTooShort { start: k, end: k_end, scale: a });
            }
            let pre = &self.prefix[i];
            let (l, h) = (lo - self.first[i], hi - self.first[i]);
            if l < 0 || h as usize >= pre.len() {
                let shift = if l < 0 { lo } else { hi - 1 };
                return Err(Error::WindowOutOfRange { scale: a, shift: a * shift as f64 });
            }
            let s = a / ((1.0 - 2.0 * w) * (k_end - k)) * (pre[h as usize] - pre[l as usize]);
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::NonPositiveVariance { index: i });
            }
            values.push(s.ln());
        }
        Ok(LogVarianceVector { values, start: k, end: k_end, n_eff: (k_end - k) / self.grid.base })
    }

    /// Residual sum of squares of the least-squares line through
    /// (log a_i, log S_i) for the segment [k, k').
    pub fn segment_cost(&self, k: f64, k_end: f64) -> Result<f64> {
        let y = self.log_variances(k, k_end)?;
        Ok(self.residual(&y.values))
    }

    pub(crate) fn residual(&self, y: &[f64]) -> f64 {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for (x, v) in self.x_centered.iter().zip(y) {
            let d = v - mean;
            syy += d * d;
            sxy += x * d;
        }
        (syy - sxy * sxy / self.sxx).max(0.0)
    }
}

/// Log-variance vector computed directly from coefficients, without the
/// prefix-sum cache.
pub fn log_variance_vector(path: &SampledPath, psi: &MotherWavelet, grid: &ScaleGrid, k: f64, k_end: f64) -> Result<LogVarianceVector> {
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let s = seg_variance_trimmed(path, psi, grid.scale(i), k, k_end, grid.trim)?;
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::NonPositiveVariance { index: i });
        }
        values.push(s.ln());
    }
    Ok(LogVarianceVector { values, start: k, end: k_end, n_eff: (k_end - k) / grid.base })
}
