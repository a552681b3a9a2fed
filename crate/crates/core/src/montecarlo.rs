//! Replicate studies: simulate, analyse and summarise.
//!
//! Replicate i uses seed `seed + i`, so parallel and serial runs agree
//! exactly and summaries are reduced in replicate order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{analyze, AnalysisConfig};
use crate::stats;
use crate::synth::{simulate_piecewise, PiecewiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub spec: PiecewiseSpec,
    pub n: usize,
    pub delta: f64,
    pub analysis: AnalysisConfig,
    pub reps: usize,
    pub seed: u64,
}

impl Design {
    /// Analysis settings completed from the process: change-point count
    /// and, for band-limited models, the frequency band.
    pub fn resolved_analysis(&self) -> AnalysisConfig {
        let mut a = self.analysis.clone();
        a.m = self.spec.tau_stars.len();
        if a.band.is_none() {
            a.band = self.spec.freq_band;
        }
        a
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.reps < 2 {
            return Err(Error::InvalidSpec(format!("a replicate study needs at least two replicates, got {}", self.reps)));
        }
        if self.analysis.model != crate::pipeline::model_for(self.spec.family) {
            return Err(Error::InvalidSpec(format!(
                "analysis model {:?} does not match the {:?} family",
                self.analysis.model, self.spec.family
            )));
        }
        self.resolved_analysis().validate()
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub tau_hat: Vec<f64>,
    pub exponent_ols: Vec<f64>,
    pub exponent_fgls: Vec<Option<f64>>,
    pub gof_statistic: Vec<Option<f64>>,
    pub gof_p_value: Vec<Option<f64>>,
}

/// Mean, empirical standard deviation and root MSE of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub quantity: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub replicates: Vec<Replicate>,
    pub summary: Vec<SummaryRow>,
}

impl MonteCarloResult {
    pub fn row(&self, quantity: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.quantity == quantity)
    }

    /// Values of one estimator across replicates, in replicate order.
    pub fn column(&self, quantity: &str) -> Vec<f64> {
        self.replicates.iter().filter_map(|r| pick(r, quantity)).collect()
    }
}

fn pick(r: &Replicate, quantity: &str) -> Option<f64> {
    let (name, j) = quantity.rsplit_once('_')?;
    let j: usize = j.parse().ok()?;
    match name {
        "tau" => r.tau_hat.get(j.checked_sub(1)?).copied(),
        "ols" => r.exponent_ols.get(j).copied(),
        "fgls" => r.exponent_fgls.get(j).copied().flatten(),
        "gof" => r.gof_statistic.get(j).copied().flatten(),
        _ => None,
    }
}

/// Run one replicate.
pub fn replicate(design: &Design, index: usize) -> Result<Replicate> {
    let seed = design.seed.wrapping_add(index as u64);
    let path = simulate_piecewise(&design.spec, design.n, design.delta, seed)?;
    let report = analyze(&path, &design.resolved_analysis())?;
    Ok(Replicate {
        index,
        seed,
        tau_hat: report.change_points.tau_hat.clone(),
        exponent_ols: report.segments.iter().map(|s| s.exponent_ols).collect(),
        exponent_fgls: report.segments.iter().map(|s| s.exponent_fgls).collect(),
        gof_statistic: report.segments.iter().map(|s| s.gof.as_ref().map(|g| g.statistic)).collect(),
        gof_p_value: report.segments.iter().map(|s| s.gof.as_ref().map(|g| g.p_value)).collect(),
    })
}

/// Run all replicates and summarise the estimators of the change
/// fractions and of the exponents.
pub fn run(design: &Design) -> Result<MonteCarloResult> {
    design.validate()?;
    let reps: Vec<Result<Replicate>> = crate::par::map_range(design.reps, |i| replicate(design, i));
    let replicates = reps.into_iter().collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    let mut add = |quantity: String, truth: f64| {
        let values: Vec<f64> = replicates.iter().filter_map(|r| pick(r, &quantity)).collect();
        if values.len() == replicates.len() {
            summary.push(SummaryRow {
                quantity,
                truth,
                mean: stats::mean(&values),
                sd: stats::std_dev(&values),
                rmse: stats::rmse(&values, truth),
            });
        }
    };
    for (j, t) in design.spec.tau_stars.iter().enumerate() {
        add(format!("tau_{}", j + 1), *t);
    }
    for prefix in ["ols", "fgls"] {
        for (j, e) in design.spec.exponents.iter().enumerate() {
            add(format!("{prefix}_{j}"), *e);
        }
    }
    Ok(MonteCarloResult { replicates, summary })
}
