//! Run configuration: a JSON file merged with command-line flags, then
//! completed with per-family defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scalebreak::montecarlo::Design;
use scalebreak::pipeline::{model_for, AnalysisConfig, RateRule, ScaleRule};
use scalebreak::synth::{Family, PiecewiseSpec};
use scalebreak::wavelet::WaveletKind;

use crate::CliError;

/// Every field is optional; unset fields take the family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<Family>,
    /// Change fractions of the simulated process.
    pub tau: Option<Vec<f64>>,
    pub exponents: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    pub band: Option<(f64, f64)>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    /// Number of change points to detect; defaults to the number of change fractions.
    pub m: Option<usize>,
    pub ell: Option<usize>,
    /// Tuning exponent of both schedules.
    pub kappa: Option<f64>,
    pub wavelet: Option<WaveletKind>,
    /// Overrides the kappa schedule of the base scale.
    pub scale: Option<ScaleRule>,
    /// Overrides the kappa schedule of the shrink rate.
    pub rate: Option<RateRule>,
    pub min_len: Option<f64>,
    pub stride: Option<f64>,
    pub trim: Option<f64>,
    pub ci_level: Option<f64>,
    pub fgls: Option<bool>,
    pub gof: Option<bool>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f; })*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn merged(mut self, flags: RunConfig) -> Self {
        overlay!(
            self, flags, family, tau, exponents, sigmas, band, n, delta, m, ell, kappa, wavelet, scale, rate, min_len,
            stride, trim, ci_level, fgls, gof, seed, reps
        );
        self
    }

    /// Complete the configuration. Defaults follow the family schedules at
    /// kappa = 0.05 and a two-regime design with a change at three quarters
    /// of the path.
    pub fn resolve(&self) -> Result<Design, CliError> {
        let family = self.family.unwrap_or(Family::Fgn);
        let (tau, exponents) = match family {
            Family::Fgn | Family::Farima => (vec![0.75], vec![0.2, 0.8]),
            Family::Fbm => (vec![0.4], vec![0.4, 0.8]),
            Family::LocallyFractional => (vec![0.5], vec![0.3, 0.7]),
        };
        let tau = self.tau.clone().unwrap_or(tau);
        let exponents = self.exponents.clone().unwrap_or(exponents);
        let mut spec = PiecewiseSpec::new(family, tau, exponents);
        if let Some(s) = &self.sigmas {
            spec.sigmas = s.clone();
        }
        if family == Family::LocallyFractional {
            let (lo, hi) = self.band.unwrap_or((1.0, 4.0));
            spec = spec.with_band(lo, hi);
        } else if self.band.is_some() {
            return Err(CliError::Validation("a frequency band only applies to the locfrac family".into()));
        }

        let model = model_for(family);
        let mut a = AnalysisConfig::new(model, self.m.unwrap_or(spec.tau_stars.len()));
        overlay_analysis(&mut a, self);
        a.band = spec.freq_band;

        let design = Design {
            n: self.n.unwrap_or(20_000),
            delta: self.delta.unwrap_or(if family == Family::LocallyFractional { 0.05 } else { 1.0 }),
            spec,
            analysis: a,
            reps: self.reps.unwrap_or(50),
            seed: self.seed.unwrap_or(0),
        };
        if design.n < 2 || !(design.delta > 0.0 && design.delta.is_finite()) {
            return Err(CliError::Validation(format!(
                "need n >= 2 and a positive step, got n = {} and delta = {}",
                design.n, design.delta
            )));
        }
        design.spec.validate()?;
        design.analysis.validate()?;
        Ok(design)
    }
}

fn overlay_analysis(a: &mut AnalysisConfig, c: &RunConfig) {
    if let Some(l) = c.ell {
        a.ell = l;
    }
    if let Some(k) = c.kappa {
        a.scale = ScaleRule::Kappa(k);
        a.rate = RateRule::Kappa(k);
    }
    if let Some(w) = c.wavelet {
        a.wavelet = w;
    }
    if let Some(s) = c.scale {
        a.scale = s;
    }
    if let Some(r) = c.rate {
        a.rate = r;
    }
    if let Some(t) = c.trim {
        a.trim = t;
    }
    if let Some(l) = c.ci_level {
        a.ci_level = (l > 0.0).then_some(l);
    }
    if let Some(f) = c.fgls {
        a.fgls = f;
    }
    if let Some(g) = c.gof {
        a.gof = g;
    }
    a.min_len = c.min_len.or(a.min_len);
    a.stride = c.stride.or(a.stride);
}

/// Parse `poly:<q>` or `band:<lambda>,<mu>`.
pub fn parse_wavelet(s: &str) -> Result<WaveletKind, String> {
    let (kind, args) = s.split_once(':').ok_or_else(|| format!("expected poly:<q> or band:<lambda>,<mu>, got '{s}'"))?;
    match kind {
        "poly" => args
            .parse()
            .map(|q| WaveletKind::CompactPoly { q })
            .map_err(|_| format!("vanishing moments must be a positive integer, got '{args}'")),
        "band" => {
            let v = parse_list(args)?;
            match v[..] {
                [lambda, mu] => Ok(WaveletKind::BandLimited { lambda, mu }),
                _ => Err(format!("band wavelet needs two numbers lambda,mu, got '{args}'")),
            }
        }
        _ => Err(format!("unknown wavelet '{kind}', expected poly or band")),
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| format!("'{x}' is not a number"))).collect()
}

pub fn parse_band(s: &str) -> Result<(f64, f64), String> {
    match parse_list(s)?[..] {
        [lo, hi] => Ok((lo, hi)),
        _ => Err(format!("band needs two numbers f_min,f_max, got '{s}'")),
    }
}

/// SHA-256 of the canonical JSON form of `value`, in hex.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serialises");
    hex::encode(Sha256::digest(&bytes))
}
