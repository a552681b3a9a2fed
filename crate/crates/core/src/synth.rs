//! Synthetic paths with known change points.
//!
//! Stationary Gaussian segments come from circulant embedding
//! (Davies-Harte) with a Cholesky fallback. Locally fractional paths are
//! built by spectral synthesis on a uniform frequency grid.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::rng::NormalRng;

/// Largest size for which the dense Cholesky fallback is attempted.
pub const CHOLESKY_MAX: usize = 4096;

const EMBED_DOUBLINGS: usize = 3;

/// Process families that can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Fractional Gaussian noise parametrised by D = 2H - 1.
    Fgn,
    /// FARIMA(0, d, 0) parametrised by D = 2d.
    Farima,
    /// Fractional Brownian motion parametrised by H.
    Fbm,
    /// Locally fractional process parametrised by its band exponent H.
    #[serde(rename = "locfrac")]
    LocallyFractional,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgn" => Ok(Family::Fgn),
            "farima" => Ok(Family::Farima),
            "fbm" => Ok(Family::Fbm),
            "locfrac" | "locally-fractional" => Ok(Family::LocallyFractional),
            other => Err(Error::InvalidSpec(format!("unknown family '{other}'"))),
        }
    }
}

/// A piecewise process: segment j runs over the fractions
/// [tau_{j-1}, tau_j) of the path with its own exponent and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSpec {
    pub family: Family,
    pub tau_stars: Vec<f64>,
    pub exponents: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Frequency band (f_min, f_max), locally fractional only.
    #[serde(default)]
    pub freq_band: Option<(f64, f64)>,
}

impl PiecewiseSpec {
    pub fn new(family: Family, tau_stars: Vec<f64>, exponents: Vec<f64>) -> Self {
        let sigmas = vec![1.0; exponents.len()];
        PiecewiseSpec { family, tau_stars, exponents, sigmas, freq_band: None }
    }

    pub fn with_band(mut self, f_min: f64, f_max: f64) -> Self {
        self.freq_band = Some((f_min, f_max));
        self
    }

    pub fn segments(&self) -> usize {
        self.exponents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.tau_stars.len();
        if self.exponents.len() != m + 1 || self.sigmas.len() != m + 1 {
            return Err(Error::InvalidSpec(format!(
                "{} change points need {} exponents and sigmas, got {} and {}",
                m,
                m + 1,
                self.exponents.len(),
                self.sigmas.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &self.tau_stars {
            if !(t > prev && t < 1.0) {
                return Err(Error::InvalidSpec(format!("change points must increase strictly inside (0,1), got {:?}", self.tau_stars)));
            }
            prev = t;
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidSpec(format!("sigma must be positive, got {s}")));
        }
        for &e in &self.exponents {
            let ok = match self.family {
                Family::Fgn | Family::Farima | Family::Fbm => e > 0.0 && e < 1.0,
                Family::LocallyFractional => e.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidSpec(format!("exponent {e} outside the admissible range for {:?}", self.family)));
            }
        }
        match (self.family, self.freq_band) {
            (Family::LocallyFractional, Some((lo, hi))) if lo > 0.0 && hi > lo => Ok(()),
            (Family::LocallyFractional, _) => Err(Error::InvalidSpec("locally fractional family needs 0 < f_min < f_max".into())),
            _ => Ok(()),
        }
    }

    /// Sample-index boundaries [b_0 = 0, b_1, ..., b_{m+1} = n].
    pub fn boundaries(&self, n: usize) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.tau_stars.len() + 2);
        b.push(0);
        b.extend(self.tau_stars.iter().map(|t| (n as f64 * t).floor() as usize));
        b.push(n);
        b
    }
}

/// Regularly sampled path X_0, X_delta, ..., X_{N delta}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub values: Vec<f64>,
    pub delta: f64,
}

impl SampledPath {
    pub fn new(values: Vec<f64>, delta: f64) -> Result<Self> {
        if values.len() < 2 {
            return domain("a path needs at least two samples");
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return domain(format!("sampling step must be positive, got {delta}"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("sample {i} is not finite"));
        }
        Ok(SampledPath { values, delta })
    }

    /// Number of steps N; the path holds N + 1 values.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// Observation horizon N delta.
    pub fn horizon(&self) -> f64 {
        self.n() as f64 * self.delta
    }

    pub fn std_dev(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        (self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Autocovariance of fractional Gaussian noise with Hurst index `h`.
pub fn fgn_autocov(h: f64, sigma2: f64, lag: usize) -> f64 {
    let k = lag as f64;
    let e = 2.0 * h;
    0.5 * sigma2 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Autocovariances r(0..=max_lag) of FARIMA(0, d, 0) with innovation
/// variance `sigma2`, |d| < 1/2.
pub fn farima_autocov(d: f64, sigma2: f64, max_lag: usize) -> Result<Vec<f64>> {
    if !(d > -0.5 && d < 0.5) {
        return domain(format!("FARIMA memory parameter must lie in (-1/2, 1/2), got {d}"));
    }
    let mut r = Vec::with_capacity(max_lag + 1);
    let r0 = sigma2 * (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp();
    r.push(r0);
    for k in 0..max_lag {
        let kf = k as f64;
        let next = r[k] * (kf + d) / (kf + 1.0 - d);
        r.push(next);
    }
    Ok(r)
}

/// Exact sample of length `n` from a stationary Gaussian sequence with
/// autocovariance `autocov(lag)`.
pub fn simulate_stationary(autocov: impl Fn(usize) -> f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = NormalRng::new(seed);
    stationary_with(&autocov, n, &mut rng)
}

pub(crate) fn stationary_with(autocov: &dyn Fn(usize) -> f64, n: usize, rng: &mut NormalRng) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        let r0 = autocov(0);
        if r0 < 0.0 {
            return Err(Error::NotPositiveDefinite("negative variance".into()));
        }
        return Ok(vec![r0.sqrt() * rng.normal()]);
    }
    let mut half = (n - 1).next_power_of_two();
    for _ in 0..=EMBED_DOUBLINGS {
        if let Some(eig) = circulant_eigenvalues(autocov, half) {
            return Ok(circulant_sample(&eig, n, rng));
        }
        half *= 2;
    }
    if n <= CHOLESKY_MAX {
        return cholesky_sample(autocov, n, rng);
    }
    Err(Error::NotPositiveDefinite(format!(
        "circulant embedding failed and n = {n} exceeds the Cholesky limit {CHOLESKY_MAX}"
    )))
}

/// Eigenvalues of the circulant of size 2*half built from r(0..=half), or
/// None when one is materially negative.
fn circulant_eigenvalues(autocov: &dyn Fn(usize) -> f64, half: usize) -> Option<Vec<f64>> {
    let len = 2 * half;
    let mut row: Vec<Complex64> = (0..len)
        .map(|k| Complex64::new(autocov(if k <= half { k } else { len - k }), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut row);
    let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let mut eig = Vec::with_capacity(len);
    for c in row {
        if c.re < -1e-10 * max {
            return None;
        }
        eig.push(c.re.max(0.0));
    }
    Some(eig)
}

fn circulant_sample(eig: &[f64], n: usize, rng: &mut NormalRng) -> Vec<f64> {
    let len = eig.len();
    let scale = 1.0 / len as f64;
    let mut buf: Vec<Complex64> = eig
        .iter()
        .map(|&l| {
            let s = (l * scale).sqrt();
            Complex64::new(s * rng.normal(), s * rng.normal())
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf.iter().take(n).map(|c| c.re).collect()
}

fn cholesky_sample(autocov: &dyn Fn(usize) -> f64, n: usize, rng: &mut NormalRng) -> Result<Vec<f64>> {
    let cov = DMatrix::from_fn(n, n, |i, j| autocov(i.abs_diff(j)));
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Toeplitz covariance rejected by Cholesky".into()))?;
    let mut z = DVector::zeros(n);
    rng.fill_normal(z.as_mut_slice());
    Ok((chol.l() * z).iter().copied().collect())
}

/// Simulate a piecewise path with N = `n` steps and sampling step `delta`.
///
/// FGN and FARIMA segments are independent stationary blocks; FBM segments
/// are independent motions started at 0. Locally fractional segments share
/// one white noise and differ only by their spectral density.
pub fn simulate_piecewise(spec: &PiecewiseSpec, n: usize, delta: f64, seed: u64) -> Result<SampledPath> {
    spec.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return domain(format!("sampling step must be positive, got {delta}"));
    }
    let bounds = spec.boundaries(n);
    for w in bounds.windows(2) {
        if w[1] <= w[0] + 1 {
            return Err(Error::InvalidSpec(format!("N = {n} leaves a segment with fewer than two samples")));
        }
    }
    let mut rng = NormalRng::new(seed);
    let values = match spec.family {
        Family::LocallyFractional => locfrac_values(spec, &bounds, delta, &mut rng)?,
        family => {
            let mut out = Vec::with_capacity(n + 1);
            for j in 0..spec.segments() {
                let start = bounds[j];
                let end = if j + 1 == spec.segments() { n + 1 } else { bounds[j + 1] };
                let len = end - start;
                let e = spec.exponents[j];
                let s2 = spec.sigmas[j].powi(2);
                match family {
                    Family::Fgn => {
                        let h = 0.5 * (1.0 + e);
                        out.extend(stationary_with(&|k| fgn_autocov(h, s2, k), len, &mut rng)?);
                    }
                    Family::Farima => {
                        let table = farima_autocov(0.5 * e, s2, 4 * len.next_power_of_two() + 1)?;
                        out.extend(stationary_with(&|k| table[k], len, &mut rng)?);
                    }
                    Family::Fbm => {
                        let incs = stationary_with(&|k| fgn_autocov(e, s2, k), len - 1, &mut rng)?;
                        let mut x = 0.0;
                        out.push(0.0);
                        for v in incs {
                            x += v;
                            out.push(x);
                        }
                    }
                    Family::LocallyFractional => unreachable!(),
                }
            }
            out
        }
    };
    SampledPath::new(values, delta)
}

/// Spectral density 1/rho^2 of a locally fractional segment, continued
/// outside the band by the boundary value times a Gaussian taper.
pub fn locfrac_density(xi: f64, h: f64, sigma: f64, f_min: f64, f_max: f64) -> f64 {
    let x = xi.abs();
    let power = |f: f64| sigma * sigma * f.powf(-1.0 - 2.0 * h);
    if x < f_min {
        let s = 0.25 * f_min;
        power(f_min) * (-0.5 * ((f_min - x) / s).powi(2)).exp()
    } else if x > f_max {
        let s = 0.25 * f_max;
        power(f_max) * (-0.5 * ((x - f_max) / s).powi(2)).exp()
    } else {
        power(x)
    }
}

fn locfrac_values(spec: &PiecewiseSpec, bounds: &[usize], delta: f64, rng: &mut NormalRng) -> Result<Vec<f64>> {
    let (f_min, f_max) = spec.freq_band.expect("validated");
    let n = *bounds.last().unwrap();
    let len = (4 * (n + 1)).next_power_of_two();
    let step = std::f64::consts::TAU / (len as f64 * delta);
    let top = f_max * 3.0;
    let kmax = (top / step).ceil() as usize;
    let noise: Vec<Complex64> = (0..kmax).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
    let fft = FftPlanner::new().plan_fft_inverse(len);
    let mut out = vec![0.0; n + 1];
    for j in 0..spec.segments() {
        let (h, sigma) = (spec.exponents[j], spec.sigmas[j]);
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let mut at_zero = 0.0;
        for (k, z) in noise.iter().enumerate().skip(1) {
            let xi = k as f64 * step;
            let c = z * (2.0 * step * locfrac_density(xi, h, sigma, f_min, f_max)).sqrt();
            buf[k % len] += c;
            at_zero += c.re;
        }
        fft.process(&mut buf);
        let end = if j + 1 == spec.segments() { n + 1 } else { bounds[j + 1] };
        for p in bounds[j]..end {
            out[p] = buf[p].re - at_zero;
        }
    }
    Ok(out)
}

/// Add the polynomial sum_k coeffs[k] (t / horizon)^k to a path.
pub fn add_polynomial_trend(path: &SampledPath, coeffs: &[f64]) -> SampledPath {
    let horizon = path.horizon();
    let values = path
        .values
        .iter()
        .enumerate()
        .map(|(p, v)| {
            let u = p as f64 * path.delta / horizon;
            v + coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
        })
        .collect();
    SampledPath { values, delta: path.delta }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_autocov(xs: &[f64], lag: usize) -> f64 {
        let n = xs.len();
        (0..n - lag).map(|i| xs[i] * xs[i + lag]).sum::<f64>() / (n - lag) as f64
    }

    #[test]
    fn fgn_white_noise_at_half() {
        assert!((fgn_autocov(0.5, 1.0, 0) - 1.0).abs() < 1e-15);
        for k in 1..10 {
            assert!(fgn_autocov(0.5, 1.0, k).abs() < 1e-14);
        }
    }

    #[test]
    fn farima_closed_form() {
        // r(1)/r(0) = d / (1 - d)
        let d = 0.3;
        let r = farima_autocov(d, 2.0, 3).unwrap();
        assert!((r[1] / r[0] - d / (1.0 - d)).abs() < 1e-14);
        // d = 0 is white noise with the innovation variance
        let w = farima_autocov(0.0, 2.0, 4).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-14 && w[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn stationary_recovers_autocovariance() {
        // mean over replicates of the empirical lag-k autocovariance
        let h = 0.8;
        let reps = 200;
        let mut acc = [0.0; 4];
        for s in 0..reps {
            let xs = simulate_stationary(|k| fgn_autocov(h, 1.0, k), 512, s).unwrap();
            for (lag, a) in acc.iter_mut().enumerate() {
                *a += sample_autocov(&xs, lag) / reps as f64;
            }
        }
        for (lag, a) in acc.iter().enumerate() {
            let want = fgn_autocov(h, 1.0, lag);
            // bias of the empirical autocovariance under long memory is a few percent
            assert!((a - want).abs() < 0.06, "lag {lag}: {a} vs {want}");
        }
    }

    #[test]
    fn cholesky_fallback_matches_embedding_in_law() {
        let mut rng = NormalRng::new(3);
        let r = |k: usize| fgn_autocov(0.7, 1.0, k);
        let reps = 4000;
        let mut var = 0.0;
        let mut cov1 = 0.0;
        for _ in 0..reps {
            let x = cholesky_sample(&r, 8, &mut rng).unwrap();
            var += x[3] * x[3] / reps as f64;
            cov1 += x[3] * x[4] / reps as f64;
        }
        assert!((var - 1.0).abs() < 0.07);
        assert!((cov1 - r(1)).abs() < 0.07);
    }

    #[test]
    fn negative_definite_sequence_rejected() {
        // r(0)=1, r(1)=0.9, r(2)=-0.9 is not a valid autocovariance
        let acf = |k: usize| match k {
            0 => 1.0,
            1 => 0.9,
            2 => -0.9,
            _ => 0.0,
        };
        assert!(matches!(simulate_stationary(acf, 3, 1), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn piecewise_fbm_restarts_at_zero() {
        let spec = PiecewiseSpec::new(Family::Fbm, vec![0.4], vec![0.3, 0.8]);
        let p = simulate_piecewise(&spec, 1000, 1.0, 9).unwrap();
        assert_eq!(p.values.len(), 1001);
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.values[400], 0.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = PiecewiseSpec::new(Family::Farima, vec![0.5], vec![0.2, 0.8]);
        let a = simulate_piecewise(&spec, 300, 1.0, 5).unwrap();
        let b = simulate_piecewise(&spec, 300, 1.0, 5).unwrap();
        let c = simulate_piecewise(&spec, 300, 1.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn spec_validation() {
        let bad = PiecewiseSpec::new(Family::Fgn, vec![0.6, 0.3], vec![0.2, 0.5, 0.8]);
        assert!(bad.validate().is_err());
        let bad = PiecewiseSpec::new(Family::Fbm, vec![0.5], vec![0.2, 1.0]);
        assert!(bad.validate().is_err());
        let bad = PiecewiseSpec::new(Family::LocallyFractional, vec![0.5], vec![0.2, 1.5]);
        assert!(bad.validate().is_err());
        assert!(bad.with_band(2.0, 80.0).validate().is_ok());
    }

    #[test]
    fn locfrac_increment_variance_follows_band_power_law() {
        // Var(X_{t+s} - X_t) = 2 int |1 - e^{i s xi}|^2 g(xi) dxi on the half line
        let spec = PiecewiseSpec::new(Family::LocallyFractional, vec![], vec![0.4]).with_band(2.0, 80.0);
        let delta = 0.01;
        let lag = 7;
        let reps = 300;
        let mut emp = 0.0;
        for s in 0..reps {
            let p = simulate_piecewise(&spec, 2000, delta, s).unwrap();
            let v = &p.values;
            emp += (lag..v.len()).map(|i| (v[i] - v[i - lag]).powi(2)).sum::<f64>() / (v.len() - lag) as f64;
        }
        emp /= reps as f64;
        let s = lag as f64 * delta;
        let rule = crate::quad::gauss_legendre(64);
        let mut want = 0.0;
        let panels = 2000;
        let top = 240.0;
        for i in 0..panels {
            let lo = top * i as f64 / panels as f64;
            let hi = top * (i + 1) as f64 / panels as f64;
            want += rule.integrate(lo, hi, |x| 2.0 * (2.0 - 2.0 * (s * x).cos()) * locfrac_density(x, 0.4, 1.0, 2.0, 80.0));
        }
        assert!((emp / want - 1.0).abs() < 0.05, "{emp} vs {want}");
    }
}
