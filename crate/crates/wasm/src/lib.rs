//! Browser bindings: simulate a path, detect change points and trace the
//! single-change contrast. Inputs and outputs are plain arrays and JSON
//! strings so the page needs no bundler.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use scalebreak::pipeline::{analyze, model_for, AnalysisConfig, AnalysisReport, PlotRow, RateRule, ScaleRule};
use scalebreak::scalogram::Scalogram;
use scalebreak::segment::contrast_profile as profile;
use scalebreak::synth::{simulate_piecewise, Family, PiecewiseSpec, SampledPath};

/// Analysis options sent by the page; unset fields take the library defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct Options {
    pub family: Option<Family>,
    pub m: Option<usize>,
    pub ell: Option<usize>,
    pub kappa: Option<f64>,
    /// Fixed base scale in time units.
    pub scale: Option<f64>,
    /// Fixed shrink rate.
    pub rate: Option<f64>,
    pub band: Option<(f64, f64)>,
}

impl Options {
    fn parse(json: &str) -> Result<Self, String> {
        if json.trim().is_empty() {
            return Ok(Options::default());
        }
        serde_json::from_str(json).map_err(|e| format!("bad options: {e}"))
    }

    fn config(&self) -> AnalysisConfig {
        let family = self.family.unwrap_or(Family::Fgn);
        let mut c = AnalysisConfig::new(model_for(family), self.m.unwrap_or(1));
        if let Some(l) = self.ell {
            c.ell = l;
        }
        if let Some(k) = self.kappa {
            c.scale = ScaleRule::Kappa(k);
            c.rate = RateRule::Kappa(k);
        }
        if let Some(a) = self.scale {
            c.scale = ScaleRule::Fixed(a);
        }
        if let Some(v) = self.rate {
            c.rate = RateRule::Fixed(v);
        }
        c.band = self.band.or((family == Family::LocallyFractional).then_some((1.0, 4.0)));
        c.ci_level = None;
        c
    }
}

pub fn simulate_impl(family: &str, tau: &[f64], exponents: &[f64], n: usize, delta: f64, seed: u32) -> Result<Vec<f64>, String> {
    let family: Family = family.parse().map_err(|e: scalebreak::Error| e.to_string())?;
    let mut spec = PiecewiseSpec::new(family, tau.to_vec(), exponents.to_vec());
    if family == Family::LocallyFractional {
        spec = spec.with_band(1.0, 4.0);
    }
    Ok(simulate_piecewise(&spec, n, delta, seed as u64).map_err(|e| e.to_string())?.values)
}

#[derive(Serialize)]
struct Detection<'a> {
    report: &'a AnalysisReport,
    plot: Vec<PlotRow>,
}

pub fn detect_impl(values: &[f64], delta: f64, options: &str) -> Result<String, String> {
    let path = SampledPath::new(values.to_vec(), delta).map_err(|e| e.to_string())?;
    let report = analyze(&path, &Options::parse(options)?.config()).map_err(|e| e.to_string())?;
    let out = Detection { plot: report.plot_rows(), report: &report };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ProfilePoint {
    k: f64,
    contrast: Option<f64>,
}

/// Contrast of every single-change split on a grid of `cells` candidates,
/// or on the analysis grid when `cells` is 0.
pub fn contrast_profile_impl(values: &[f64], delta: f64, options: &str, cells: usize) -> Result<String, String> {
    let path = SampledPath::new(values.to_vec(), delta).map_err(|e| e.to_string())?;
    let cfg = Options::parse(options)?.config();
    cfg.validate().map_err(|e| e.to_string())?;
    let psi = cfg.wavelet.build().map_err(|e| e.to_string())?;
    let grid = cfg.grid(path.n(), delta).map_err(|e| e.to_string())?;
    let sg = Scalogram::new(&path, &psi, &grid).map_err(|e| e.to_string())?;
    let min_len = cfg.min_len.unwrap_or_else(|| (4.0 * grid.largest()).max(sg.horizon() / 20.0));
    let stride = match cells {
        0 => cfg.stride.unwrap_or_else(|| grid.base.max(delta)),
        c => (sg.horizon() / c.max(2) as f64).max(delta),
    };
    let pts: Vec<ProfilePoint> =
        profile(&sg, min_len, stride).into_iter().map(|(k, contrast)| ProfilePoint { k, contrast }).collect();
    serde_json::to_string(&pts).map_err(|e| e.to_string())
}

/// Simulate a piecewise path of `n + 1` samples.
#[wasm_bindgen]
pub fn simulate(family: &str, tau: &[f64], exponents: &[f64], n: usize, delta: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    simulate_impl(family, tau, exponents, n, delta, seed).map_err(|e| JsError::new(&e))
}

/// Full analysis as JSON: `{report, plot}`.
#[wasm_bindgen]
pub fn detect(values: &[f64], delta: f64, options: &str) -> Result<String, JsError> {
    detect_impl(values, delta, options).map_err(|e| JsError::new(&e))
}

/// Single-change contrast as JSON `[{k, contrast}]`; null marks inadmissible splits.
#[wasm_bindgen]
pub fn contrast_profile(values: &[f64], delta: f64, options: &str, cells: usize) -> Result<String, JsError> {
    contrast_profile_impl(values, delta, options, cells).map_err(|e| JsError::new(&e))
}
