//! End-to-end analysis of one path: scales, segmentation, shrinking and
//! per-segment estimation.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{
    confidence_interval, fgls_theta, gof, ols_theta, ConfidenceInterval, ExponentModel, GofResult, ThetaEstimate,
};
use crate::scalogram::{design_matrix, ScaleGrid, Scalogram};
use crate::segment::{detect, shrink, ChangePoints, Constraints};
use crate::synth::{Family, SampledPath};
use crate::wavelet::WaveletKind;

/// Default tuning exponent of the asymptotic schedules.
pub const DEFAULT_KAPPA: f64 = 0.05;

/// Base scale a_N, in time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "lowercase")]
pub enum ScaleRule {
    /// The family's schedule N^{e(kappa)} samples.
    Kappa(f64),
    /// N^e samples.
    Exponent(f64),
    /// An explicit scale in time units.
    Fixed(f64),
}

/// Shrink rate v_N; the margin around each change point is horizon / v_N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "lowercase")]
pub enum RateRule {
    /// The family's schedule at this kappa.
    Kappa(f64),
    /// v_N = N^e.
    Exponent(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub model: ExponentModel,
    /// Number of change points.
    pub m: usize,
    /// Number of scales.
    pub ell: usize,
    pub wavelet: WaveletKind,
    /// Ignored by the locally fractional model, whose scales follow the band.
    pub scale: ScaleRule,
    pub rate: RateRule,
    /// Minimal segment length in time units; defaults to
    /// max(4 x largest scale, horizon / 20).
    pub min_len: Option<f64>,
    /// Candidate spacing in time units; defaults to the base scale, at least
    /// one step. Costs only change where a boundary crosses a shift grid,
    /// and the coarsest of those grids is the base scale.
    pub stride: Option<f64>,
    pub fgls: bool,
    pub gof: bool,
    pub ci_level: Option<f64>,
    /// Frequency band [f_min, f_max] of the locally fractional model.
    pub band: Option<(f64, f64)>,
    /// Trimming fraction of the segment variance.
    pub trim: f64,
}

impl AnalysisConfig {
    /// Schedules at kappa = 0.05. The locally fractional model uses the
    /// band-limited wavelet on [1, 3] and trims a tenth of each end.
    pub fn new(model: ExponentModel, m: usize) -> Self {
        let locfrac = model == ExponentModel::LocallyFractional;
        AnalysisConfig {
            model,
            m,
            ell: if model == ExponentModel::Lrd { 30 } else { 10 },
            wavelet: if locfrac {
                WaveletKind::BandLimited { lambda: 1.0, mu: 3.0 }
            } else {
                WaveletKind::CompactPoly { q: 3 }
            },
            scale: ScaleRule::Kappa(DEFAULT_KAPPA),
            rate: RateRule::Kappa(DEFAULT_KAPPA),
            min_len: None,
            stride: None,
            fgls: true,
            gof: true,
            ci_level: Some(0.95),
            band: None,
            trim: if locfrac { 0.1 } else { 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell < 3 {
            return domain(format!("at least three scales are needed, got ell = {}", self.ell));
        }
        if let Some(l) = self.ci_level {
            if !(0.0..1.0).contains(&l) {
                return domain(format!("confidence level must lie in [0, 1), got {l}"));
            }
        }
        for v in [self.min_len, self.stride].into_iter().flatten() {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("segment constraints must be finite and nonnegative, got {v}"));
            }
        }
        if self.stride == Some(0.0) {
            return domain("candidate stride must be positive");
        }
        match self.model {
            ExponentModel::LocallyFractional => {
                if !matches!(self.wavelet, WaveletKind::BandLimited { .. }) {
                    return Err(Error::InvalidSpec("the locally fractional model needs a band-limited wavelet".into()));
                }
                if self.band.is_none() {
                    return Err(Error::InvalidSpec("the locally fractional model needs a frequency band (f_min, f_max)".into()));
                }
            }
            ExponentModel::Fbm => {
                if matches!(self.wavelet, WaveletKind::CompactPoly { q } if q < 2) {
                    return Err(Error::InvalidSpec("fractional Brownian motion needs at least two vanishing moments".into()));
                }
            }
            ExponentModel::Lrd => {}
        }
        if let ScaleRule::Kappa(k) = self.scale {
            let hi = match self.model {
                ExponentModel::Lrd => 2.0 / 15.0,
                _ => 2.0 / 3.0,
            };
            if !(k > 0.0 && k < hi) {
                return domain(format!("scale kappa must lie in (0, {hi:.4}) for this family, got {k}"));
            }
        }
        if let RateRule::Kappa(k) = self.rate {
            let hi = match self.model {
                ExponentModel::Lrd => 2.0 / 15.0,
                ExponentModel::Fbm => 2.0 / 3.0,
                ExponentModel::LocallyFractional => 0.5,
            };
            if !(k > 0.0 && k < hi) {
                return domain(format!("rate kappa must lie in (0, {hi:.4}) for this family, got {k}"));
            }
        }
        match self.rate {
            RateRule::Fixed(v) if !(v > 0.0 && v.is_finite()) => domain(format!("shrink rate must be positive, got {v}")),
            RateRule::Exponent(e) if !e.is_finite() => domain("rate exponent must be finite"),
            _ => Ok(()),
        }
    }

    /// Scale grid for a path of `n` samples with step `delta`.
    pub fn grid(&self, n: usize, delta: f64) -> Result<ScaleGrid> {
        if self.model == ExponentModel::LocallyFractional {
            let (f_min, f_max) = self.band.ok_or_else(|| Error::InvalidSpec("missing frequency band".into()))?;
            let WaveletKind::BandLimited { lambda, mu } = self.wavelet else {
                return Err(Error::InvalidSpec("the locally fractional model needs a band-limited wavelet".into()));
            };
            return ScaleGrid::band_limited(lambda, mu, f_min, f_max, self.ell, self.trim);
        }
        let nf = n as f64;
        let base = match self.scale {
            ScaleRule::Kappa(k) => {
                let e = if self.model == ExponentModel::Lrd { 0.2 } else { 1.0 / 3.0 };
                nf.powf(e + k) * delta
            }
            ScaleRule::Exponent(e) => nf.powf(e) * delta,
            ScaleRule::Fixed(a) => a,
        };
        ScaleGrid::new(base, (1..=self.ell as u32).collect(), self.trim)
    }
}

/// The exponent model that analyses paths of `family`.
pub fn model_for(family: Family) -> ExponentModel {
    match family {
        Family::Fgn | Family::Farima => ExponentModel::Lrd,
        Family::Fbm => ExponentModel::Fbm,
        Family::LocallyFractional => ExponentModel::LocallyFractional,
    }
}

/// Estimates on one shrunk segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFit {
    pub index: usize,
    /// Shrunk interval in time units.
    pub start: f64,
    pub end: f64,
    pub log_variances: Vec<f64>,
    pub ols: ThetaEstimate,
    /// D for the long-memory model, H otherwise.
    pub exponent_ols: f64,
    pub fgls: Option<ThetaEstimate>,
    pub exponent_fgls: Option<f64>,
    /// Gamma was singular and FGLS fell back to OLS.
    pub fgls_fallback: bool,
    /// The plug-in exponent was clamped before evaluating Gamma.
    pub gamma_clamped: bool,
    pub gof: Option<GofResult>,
    pub ci_ols: Option<ConfidenceInterval>,
    pub ci_fgls: Option<ConfidenceInterval>,
}

impl SegmentFit {
    /// The FGLS estimate when available, otherwise OLS.
    pub fn best(&self) -> &ThetaEstimate {
        self.fgls.as_ref().unwrap_or(&self.ols)
    }
}

/// Everything the analysis of one path produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub model: ExponentModel,
    pub n: usize,
    pub delta: f64,
    pub grid: ScaleGrid,
    /// Shrink rate; absent without change points.
    pub v_n: Option<f64>,
    pub min_len: f64,
    pub stride: f64,
    pub change_points: ChangePoints,
    pub segments: Vec<SegmentFit>,
}

/// One point of the log-log regression plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub segment: usize,
    pub scale_index: usize,
    pub log_scale: f64,
    pub log_variance: f64,
    pub fitted: f64,
}

impl AnalysisReport {
    /// Log-variances against log-scales with the fitted line of each segment.
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        let logs = self.grid.log_scales();
        let mut rows = Vec::with_capacity(self.segments.len() * logs.len());
        for s in &self.segments {
            let th = s.best();
            for (i, (x, y)) in logs.iter().zip(&s.log_variances).enumerate() {
                rows.push(PlotRow {
                    segment: s.index,
                    scale_index: i,
                    log_scale: *x,
                    log_variance: *y,
                    fitted: th.alpha * x + th.log_beta,
                });
            }
        }
        rows
    }
}

/// Shrink rate for the configured rule. The Brownian schedule depends on
/// the spread A of the exponents, estimated on the unshrunk segments.
fn shrink_rate(cfg: &AnalysisConfig, n: usize, spread: impl FnOnce() -> Result<f64>) -> Result<f64> {
    let nf = n as f64;
    match cfg.rate {
        RateRule::Fixed(v) => Ok(v),
        RateRule::Exponent(e) => Ok(nf.powf(e)),
        RateRule::Kappa(k) => match cfg.model {
            ExponentModel::Lrd => Ok(nf.powf(0.4 - 3.0 * k)),
            ExponentModel::LocallyFractional => Ok(nf.powf(0.5 - k)),
            ExponentModel::Fbm => {
                let a = spread()?;
                if a >= 0.5 {
                    return Err(Error::Infeasible(format!(
                        "estimated exponent spread {a:.3} is not below 1/2, so the Brownian schedule has no admissible kappa; \
                         give the shrink rate explicitly"
                    )));
                }
                let hi = 1.0 / (1.0 + 4.0 * a) - 1.0 / 3.0;
                if k >= hi {
                    return Err(Error::Infeasible(format!(
                        "kappa {k} exceeds {hi:.4}, the bound implied by the estimated exponent spread {a:.3}"
                    )));
                }
                Ok(nf.powf(2.0 / 3.0 * (1.0 - 2.0 * a) - k * (2.0 + 4.0 * a)))
            }
        },
    }
}

/// Run the full analysis on `path`.
pub fn analyze(path: &SampledPath, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    cfg.validate()?;
    let psi = cfg.wavelet.build()?;
    let grid = cfg.grid(path.n(), path.delta)?;
    let sg = Scalogram::new(path, &psi, &grid)?;
    let horizon = sg.horizon();
    let min_len = cfg.min_len.unwrap_or_else(|| (4.0 * grid.largest()).max(horizon / 20.0));
    let stride = cfg.stride.unwrap_or_else(|| grid.base.max(path.delta));
    let cp = detect(&sg, &Constraints { m: cfg.m, min_len, stride })?;

    let l = design_matrix(&grid);
    let spread = || -> Result<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in cp.boundaries().windows(2) {
            let y = sg.log_variances(w[0], w[1])?;
            let (alpha, _) = crate::estimate::ols_fit(&y.values, &l)?;
            let e = cfg.model.exponent(alpha);
            lo = lo.min(e);
            hi = hi.max(e);
        }
        Ok(hi - lo)
    };
    let v_n = if cfg.m == 0 { None } else { Some(shrink_rate(cfg, path.n(), spread)?) };
    let intervals = match v_n {
        Some(v) => shrink(&cp, v)?,
        None => vec![(0.0, horizon)],
    };

    let fits: Vec<Result<SegmentFit>> = crate::par::map_range(intervals.len(), |j| {
        let (k, k_end) = intervals[j];
        let y = sg.log_variances(k, k_end)?;
        let (alpha0, _) = crate::estimate::ols_fit(&y.values, &l)?;
        let (gamma, clamped) = cfg.model.gamma(alpha0, &grid, &psi)?;
        let ols = ols_theta(&y, &l, &gamma)?;
        let (fgls, fallback) = if cfg.fgls || cfg.gof {
            let (t, f) = fgls_theta(&y, &l, &gamma)?;
            (Some(t), f)
        } else {
            (None, false)
        };
        let g = match (&fgls, cfg.gof) {
            (Some(t), true) => Some(gof(&y, &l, t, &gamma)?),
            _ => None,
        };
        let fgls = if cfg.fgls { fgls } else { None };
        let (ci_ols, ci_fgls) = match cfg.ci_level {
            Some(level) => (
                Some(confidence_interval(&ols, level)?),
                fgls.as_ref().map(|t| confidence_interval(t, level)).transpose()?,
            ),
            None => (None, None),
        };
        Ok(SegmentFit {
            index: j,
            start: k,
            end: k_end,
            exponent_ols: cfg.model.exponent(ols.alpha),
            exponent_fgls: fgls.as_ref().map(|t| cfg.model.exponent(t.alpha)),
            log_variances: y.values,
            ols,
            fgls,
            fgls_fallback: fallback,
            gamma_clamped: clamped,
            gof: g,
            ci_ols,
            ci_fgls,
        })
    });
    let segments = fits.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport {
        model: cfg.model,
        n: path.n(),
        delta: path.delta,
        grid,
        v_n,
        min_len,
        stride,
        change_points: cp,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate_piecewise, PiecewiseSpec};

    #[test]
    fn schedules_follow_the_family() {
        let cfg = AnalysisConfig::new(ExponentModel::Lrd, 1);
        let g = cfg.grid(20000, 1.0).unwrap();
        assert!((g.base - 20000f64.powf(0.25)).abs() < 1e-9);
        assert_eq!(g.len(), 30);
        let v = shrink_rate(&cfg, 20000, || unreachable!()).unwrap();
        assert!((v - 20000f64.powf(0.25)).abs() < 1e-9);

        let mut fbm = AnalysisConfig::new(ExponentModel::Fbm, 1);
        fbm.rate = RateRule::Kappa(0.01);
        let v = shrink_rate(&fbm, 10000, || Ok(0.25)).unwrap();
        assert!((v - 10000f64.powf(2.0 / 3.0 * 0.5 - 0.01 * 3.0)).abs() < 1e-9);
        assert!(matches!(shrink_rate(&fbm, 10000, || Ok(0.6)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn kappa_outside_admissible_range_is_rejected() {
        let mut cfg = AnalysisConfig::new(ExponentModel::Lrd, 1);
        cfg.rate = RateRule::Kappa(0.2);
        assert!(cfg.validate().is_err());
        let mut loc = AnalysisConfig::new(ExponentModel::LocallyFractional, 1);
        assert!(matches!(loc.validate(), Err(Error::InvalidSpec(_))));
        loc.band = Some((0.5, 2.0));
        loc.validate().unwrap();
    }

    #[test]
    fn single_regime_report_has_one_segment() {
        let spec = PiecewiseSpec::new(Family::Fgn, vec![], vec![0.4]);
        let path = simulate_piecewise(&spec, 4000, 1.0, 3).unwrap();
        let mut cfg = AnalysisConfig::new(ExponentModel::Lrd, 0);
        cfg.ell = 8;
        let r = analyze(&path, &cfg).unwrap();
        assert!(r.change_points.k_hat.is_empty());
        assert_eq!(r.segments.len(), 1);
        assert_eq!((r.segments[0].start, r.segments[0].end), (0.0, 4000.0));
        assert_eq!(r.plot_rows().len(), 8);
        let s = &r.segments[0];
        assert!((s.exponent_ols - 0.4).abs() < 0.3, "{}", s.exponent_ols);
        let ci = s.ci_ols.as_ref().unwrap();
        assert!(ci.alpha.0 < s.ols.alpha && s.ols.alpha < ci.alpha.1);
    }

    #[test]
    fn fitted_column_lies_on_the_line() {
        let spec = PiecewiseSpec::new(Family::Fgn, vec![0.5], vec![0.2, 0.8]);
        let path = simulate_piecewise(&spec, 6000, 1.0, 11).unwrap();
        let mut cfg = AnalysisConfig::new(ExponentModel::Lrd, 1);
        cfg.ell = 6;
        cfg.rate = RateRule::Fixed(20.0);
        let r = analyze(&path, &cfg).unwrap();
        for row in r.plot_rows() {
            let th = r.segments[row.segment].best();
            assert_eq!(row.fitted, th.alpha * row.log_scale + th.log_beta);
        }
    }
}
