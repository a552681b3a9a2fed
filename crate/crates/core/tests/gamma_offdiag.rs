//! Off-diagonal Gamma entries against simulated log-variance covariances.
//! The diagonal is checked by the acceptance gate.

use scalebreak::estimate::ExponentModel;
use scalebreak::scalogram::{ScaleGrid, Scalogram};
use scalebreak::synth::{simulate_piecewise, Family, PiecewiseSpec};
use scalebreak::wavelet::MotherWavelet;

fn empirical_cov(spec: &PiecewiseSpec, grid: &ScaleGrid, psi: &MotherWavelet, sims: u64) -> Vec<Vec<f64>> {
    let l = grid.len();
    let mut ys = Vec::new();
    let mut n_eff = 0.0;
    for s in 0..sims {
        let path = simulate_piecewise(spec, 4000, 1.0, 900 + s).unwrap();
        let y = Scalogram::new(&path, psi, grid).unwrap().log_variances(0.0, 4000.0).unwrap();
        n_eff = y.n_eff;
        ys.push(y.values);
    }
    let mean: Vec<f64> = (0..l).map(|i| ys.iter().map(|y| y[i]).sum::<f64>() / sims as f64).collect();
    (0..l)
        .map(|p| {
            (0..l)
                .map(|q| ys.iter().map(|y| (y[p] - mean[p]) * (y[q] - mean[q])).sum::<f64>() / (sims - 1) as f64 * n_eff)
                .collect()
        })
        .collect()
}

fn check(model: ExponentModel, spec: PiecewiseSpec) {
    let psi = MotherWavelet::compact_poly(3).unwrap();
    let grid = ScaleGrid::uniform(8.0, 3).unwrap();
    let sims = 2000;
    let emp = empirical_cov(&spec, &grid, &psi, sims);
    let (g, _) = model.gamma(model.alpha(spec.exponents[0]), &grid, &psi).unwrap();
    let mut separated = 0;
    for p in 0..3 {
        for q in 0..p {
            // Gaussian standard error of a sample covariance
            let se = ((emp[p][p] * emp[q][q] + emp[p][q].powi(2)) / (sims - 1) as f64).sqrt();
            let z = (emp[p][q] - g[(p, q)]).abs() / se;
            assert!(z < 3.0, "{model:?} ({p},{q}): empirical {:.3} analytic {:.3}, z {z:.1}", emp[p][q], g[(p, q)]);
            // An extra factor r_p r_q / gcd^2 off the diagonal is rejected.
            let (rp, rq) = (grid.ratios[p], grid.ratios[q]);
            let d = (1..=rp.min(rq)).rev().find(|c| rp.is_multiple_of(*c) && rq.is_multiple_of(*c)).unwrap() as f64;
            let alt = g[(p, q)] * (rp * rq) as f64 / (d * d);
            if (alt - g[(p, q)]).abs() > 6.0 * se {
                let z_alt = (emp[p][q] - alt).abs() / se;
                assert!(z_alt > 3.0, "{model:?} ({p},{q}): alternative {alt:.3} not rejected, z {z_alt:.1}");
                separated += 1;
            }
        }
    }
    assert!(separated > 0, "{model:?}: no entry separates the two forms");
}

#[test]
fn lrd_cross_scale_covariances() {
    check(ExponentModel::Lrd, PiecewiseSpec::new(Family::Fgn, vec![], vec![0.5]));
}

#[test]
fn fbm_cross_scale_covariances() {
    check(ExponentModel::Fbm, PiecewiseSpec::new(Family::Fbm, vec![], vec![0.5]));
}
