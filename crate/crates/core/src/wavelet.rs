//! Mother wavelets and sampled wavelet coefficients.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad::{gauss_legendre, Rule};
use crate::synth::SampledPath;

/// Smallest admissible scale, in sampling steps.
pub const MIN_SCALE_STEPS: f64 = 2.0;

/// Tolerance for the vanishing-moment check at construction.
pub const MOMENT_TOL: f64 = 1e-12;

/// Relative threshold defining the effective support of a band-limited
/// wavelet.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Exponent of the cosine taper of the band-limited Fourier transform.
const TAPER_POWER: i32 = 8;

const TAYLOR_RADIUS: f64 = 1.5;
const QUADRATURE_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WaveletKind {
    /// Polynomial wavelet on [0, 1] with exactly `q` vanishing moments.
    CompactPoly { q: usize },
    /// Fourier transform supported on lambda <= |xi| <= mu.
    BandLimited { lambda: f64, mu: f64 },
}

impl WaveletKind {
    pub fn build(self) -> Result<MotherWavelet> {
        match self {
            WaveletKind::CompactPoly { q } => MotherWavelet::compact_poly(q),
            WaveletKind::BandLimited { lambda, mu } => MotherWavelet::band_limited(lambda, mu),
        }
    }
}

#[derive(Debug, Clone)]
struct BandTable {
    step: f64,
    values: Vec<f64>,
    half_width: f64,
    amplitude: f64,
}

/// An L2-normalised mother wavelet.
#[derive(Debug, Clone)]
pub struct MotherWavelet {
    kind: WaveletKind,
    /// Monomial coefficients on [0, 1] (compact wavelets).
    poly: Vec<f64>,
    /// The same polynomial as sum c t^i (1-t)^j, which evaluates without
    /// the cancellation of the monomial form.
    leibniz: Vec<(f64, i32, i32)>,
    band: Option<BandTable>,
    rule: Rule,
}

impl MotherWavelet {
    /// psi = c D^q [t^{q+2} (1-t)^{q+2}] on [0, 1].
    ///
    /// The q-fold derivative of a function with zeros of order q+2 at both
    /// ends integrates every monomial of degree below q to zero, keeps a
    /// double zero at each end (so psi is C^1 on the line) and has a
    /// nonzero q-th moment.
    pub fn compact_poly(q: usize) -> Result<Self> {
        if q == 0 || q > 6 {
            return domain(format!("vanishing-moment count must be in 1..=6, got {q}"));
        }
        let base = q + 2;
        // t^{q+2} (1-t)^{q+2}
        let mut coeffs = vec![0.0; 2 * base + 1];
        let mut binom = 1.0;
        for j in 0..=base {
            coeffs[base + j] = if j % 2 == 0 { binom } else { -binom };
            binom = binom * (base - j) as f64 / (j + 1) as f64;
        }
        for _ in 0..q {
            coeffs = derivative(&coeffs);
        }
        // Leibniz: D^q[t^n (1-t)^n] = sum_j C(q,j) D^j[t^n] D^{q-j}[(1-t)^n]
        let n = base as i32;
        let falling = |from: i32, k: i32| (0..k).map(|i| (from - i) as f64).product::<f64>();
        let mut leibniz = Vec::with_capacity(q + 1);
        let mut binom = 1.0;
        for j in 0..=q as i32 {
            let sign = if (q as i32 - j) % 2 == 0 { 1.0 } else { -1.0 };
            leibniz.push((sign * binom * falling(n, j) * falling(n, q as i32 - j), n - j, n - q as i32 + j));
            binom = binom * (q as i32 - j) as f64 / (j + 1) as f64;
        }
        let rule = gauss_legendre(64);
        let norm = rule.integrate(0.0, 1.0, |t| leibniz_eval(&leibniz, t).powi(2)).sqrt();
        let poly: Vec<f64> = coeffs.iter().map(|c| c / norm).collect();
        let leibniz = leibniz.into_iter().map(|(c, i, j)| (c / norm, i, j)).collect();
        let w = MotherWavelet { kind: WaveletKind::CompactPoly { q }, poly, leibniz, band: None, rule };
        for r in 0..q {
            let m = w.moment(r);
            if m.abs() > MOMENT_TOL {
                return Err(Error::Quadrature(format!("moment {r} of the compact wavelet is {m:e}")));
            }
        }
        Ok(w)
    }

    /// Band-limited wavelet whose transform is a cosine-power bump on
    /// [lambda, mu], mirrored evenly. psi is tabulated on its effective
    /// support and interpolated.
    pub fn band_limited(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0 && mu > lambda && mu.is_finite()) {
            return domain(format!("band-limited wavelet needs 0 < lambda < mu, got ({lambda}, {mu})"));
        }
        let width = mu - lambda;
        // int_0^w sin^16(pi x / w) dx = w C(16,8) / 2^16
        let energy = width * 12870.0 / 65536.0;
        let amplitude = (std::f64::consts::PI / energy).sqrt();
        let mut w = MotherWavelet {
            kind: WaveletKind::BandLimited { lambda, mu },
            poly: Vec::new(),
            leibniz: Vec::new(),
            band: None,
            rule: gauss_legendre(16),
        };
        let step = std::f64::consts::PI / (128.0 * mu);
        let scan = 400.0 / width;
        let raw: Vec<f64> = (0..=((scan / step).ceil() as usize))
            .map(|i| w.band_integral(i as f64 * step, amplitude, scan))
            .collect();
        let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let last = raw.iter().rposition(|v| v.abs() > SUPPORT_THRESHOLD * peak).unwrap_or(0);
        let keep = (last + 3).min(raw.len());
        w.band = Some(BandTable {
            step,
            values: raw[..keep].to_vec(),
            half_width: last as f64 * step,
            amplitude,
        });
        Ok(w)
    }

    fn band_hat(&self, xi: f64, amplitude: f64) -> f64 {
        let WaveletKind::BandLimited { lambda, mu } = self.kind else { return 0.0 };
        let x = xi.abs();
        if x <= lambda || x >= mu {
            return 0.0;
        }
        amplitude * (std::f64::consts::PI * (x - lambda) / (mu - lambda)).sin().powi(TAPER_POWER)
    }

    /// (1/pi) int_lambda^mu psi_hat(xi) cos(xi t) dxi
    fn band_integral(&self, t: f64, amplitude: f64, t_max: f64) -> f64 {
        let WaveletKind::BandLimited { lambda, mu } = self.kind else { return 0.0 };
        let panels = ((mu - lambda) * t_max / 6.0).ceil().max(4.0) as usize;
        let h = (mu - lambda) / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            let lo = lambda + i as f64 * h;
            acc += self.rule.integrate(lo, lo + h, |xi| self.band_hat(xi, amplitude) * (xi * t).cos());
        }
        acc / std::f64::consts::PI
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    /// Number of vanishing moments (unbounded for band-limited wavelets).
    pub fn vanishing_moments(&self) -> usize {
        match self.kind {
            WaveletKind::CompactPoly { q } => q,
            WaveletKind::BandLimited { .. } => usize::MAX,
        }
    }

    /// Interval outside which psi is treated as zero.
    pub fn support(&self) -> (f64, f64) {
        match &self.band {
            None => (0.0, 1.0),
            Some(b) => (-b.half_width, b.half_width),
        }
    }

    /// Monomial coefficients on [0, 1] for compact wavelets.
    pub fn polynomial(&self) -> Option<&[f64]> {
        self.band.is_none().then_some(self.poly.as_slice())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.band {
            None => {
                if !(0.0..=1.0).contains(&t) {
                    0.0
                } else {
                    leibniz_eval(&self.leibniz, t)
                }
            }
            Some(b) => {
                let x = t.abs();
                if x > b.half_width {
                    return 0.0;
                }
                let u = x / b.step;
                let i = u.floor() as usize;
                let f = u - i as f64;
                let at = |k: isize| -> f64 {
                    let k = k.unsigned_abs();
                    b.values.get(k).copied().unwrap_or(0.0)
                };
                let i = i as isize;
                let (y0, y1, y2, y3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
                // cubic Lagrange through the four neighbours (table is even in t)
                -f * (f - 1.0) * (f - 2.0) / 6.0 * y0 + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * y1
                    - (f + 1.0) * f * (f - 2.0) / 2.0 * y2
                    + (f + 1.0) * f * (f - 1.0) / 6.0 * y3
            }
        }
    }

    /// Polynomial continuation of a compact wavelet beyond [0, 1].
    pub(crate) fn eval_polynomial(&self, t: f64) -> f64 {
        leibniz_eval(&self.leibniz, t)
    }

    /// int t^r psi(t) dt; exact for compact wavelets.
    pub fn moment(&self, r: usize) -> f64 {
        match &self.band {
            // Gauss-Legendre with 64 nodes is exact here and avoids the
            // cancellation of summing monomial moments
            None => self.rule.integrate(0.0, 1.0, |t| t.powi(r as i32) * leibniz_eval(&self.leibniz, t)),
            Some(b) => {
                let (lo, hi) = (-b.half_width, b.half_width);
                let panels = ((hi - lo) / b.step / 8.0).ceil() as usize;
                let h = (hi - lo) / panels as f64;
                (0..panels)
                    .map(|i| {
                        let a = lo + i as f64 * h;
                        self.rule.integrate(a, a + h, |t| t.powi(r as i32) * self.eval(t))
                    })
                    .sum()
            }
        }
    }

    /// psi_hat(xi) = int psi(t) e^{-i xi t} dt.
    pub fn fourier(&self, xi: f64) -> Complex64 {
        if let Some(b) = &self.band {
            return Complex64::new(self.band_hat(xi, b.amplitude), 0.0);
        }
        let ax = xi.abs();
        if ax < TAYLOR_RADIUS {
            // sum_r (-i xi)^r m_r / r!
            let mut acc = Complex64::new(0.0, 0.0);
            let mut factor = Complex64::new(1.0, 0.0);
            for r in 0..48 {
                acc += factor * self.moment(r);
                factor *= Complex64::new(0.0, -xi) / (r + 1) as f64;
            }
            acc
        } else if ax < QUADRATURE_RADIUS {
            let re = self.rule.integrate(0.0, 1.0, |t| leibniz_eval(&self.leibniz, t) * (xi * t).cos());
            let im = self.rule.integrate(0.0, 1.0, |t| -leibniz_eval(&self.leibniz, t) * (xi * t).sin());
            Complex64::new(re, im)
        } else {
            // repeated integration by parts terminates for a polynomial:
            // int_0^1 f e^{-i xi t} = sum_k [f^(k)(0) - f^(k)(1) e^{-i xi}] / (i xi)^{k+1}
            // psi(1 - t) = (-1)^q psi(t) gives the derivatives at 1 from those at 0
            let q = self.vanishing_moments();
            let e1 = Complex64::from_polar(1.0, -xi);
            let ixi = Complex64::new(0.0, xi);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut d = self.poly.clone();
            let mut denom = ixi;
            let mut k = 0;
            while !d.is_empty() {
                let f0 = d[0];
                let f1 = if (q + k).is_multiple_of(2) { f0 } else { -f0 };
                k += 1;
                acc += (Complex64::new(f0, 0.0) - e1 * f1) / denom;
                denom *= ixi;
                d = derivative(&d);
            }
            acc
        }
    }
}

fn leibniz_eval(terms: &[(f64, i32, i32)], t: f64) -> f64 {
    let s = 1.0 - t;
    terms.iter().map(|&(c, i, j)| c * t.powi(i) * s.powi(j)).sum()
}

#[cfg(test)]
fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * t + v)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v).collect()
}

fn check_scale(path: &SampledPath, a: f64) -> Result<()> {
    if !a.is_finite() || a < MIN_SCALE_STEPS * path.delta {
        return domain(format!("scale {a} is below the minimum of {MIN_SCALE_STEPS} sampling steps"));
    }
    Ok(())
}

/// Sample indices p in 1..=N whose time p*delta falls in [lo, hi].
fn sample_range(path: &SampledPath, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
    let d = path.delta;
    let first = ((lo / d) - 1e-9).ceil().max(1.0) as usize;
    let last = (((hi / d) + 1e-9).floor() as usize).min(path.n());
    first..=last
}

/// Wavelet coefficient e(a, b) = delta / sqrt(a) sum_{p=1}^{N} psi((p delta - b)/a) X_p.
///
/// The window [b + a s0, b + a s1] spanned by the support must lie inside
/// the observed interval [0, N delta].
pub fn coefficient(path: &SampledPath, psi: &MotherWavelet, a: f64, b: f64) -> Result<f64> {
    check_scale(path, a)?;
    let (s0, s1) = psi.support();
    let tol = 1e-9 * path.horizon().max(1.0);
    if b + a * s0 < -tol || b + a * s1 > path.horizon() + tol {
        return Err(Error::WindowOutOfRange { scale: a, shift: b });
    }
    let mut acc = 0.0;
    for p in sample_range(path, b + a * s0, b + a * s1) {
        acc += psi.eval((p as f64 * path.delta - b) / a) * path.values[p];
    }
    Ok(acc * path.delta / a.sqrt())
}

/// Coefficients e(a, a p) for every shift index p whose window fits inside
/// the observed interval. Returns the first admissible index and the values.
pub fn coefficients_on_grid(path: &SampledPath, psi: &MotherWavelet, a: f64) -> Result<(usize, Vec<f64>)> {
    check_scale(path, a)?;
    let (s0, s1) = psi.support();
    let horizon = path.horizon();
    let first = ((-s0) - 1e-9).ceil().max(0.0) as usize;
    let last_f = (horizon / a - s1 + 1e-9).floor();
    if last_f < first as f64 {
        return Ok((first, Vec::new()));
    }
    let last = last_f as usize;
    let mut out = Vec::with_capacity(last + 1 - first);
    for p in first..=last {
        out.push(coefficient(path, psi, a, a * p as f64)?);
    }
    Ok((first, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_wavelet_is_normalised_with_exact_moments() {
        for q in 1..=6 {
            let w = MotherWavelet::compact_poly(q).unwrap();
            let norm = gauss_legendre(100).integrate(0.0, 1.0, |t| w.eval(t).powi(2));
            assert!((norm - 1.0).abs() < 1e-12, "q={q}: {norm}");
            for r in 0..q {
                assert!(w.moment(r).abs() < 1e-12, "q={q} r={r}");
            }
            assert!(w.moment(q).abs() > 1e-4, "q={q}: moment q must not vanish");
        }
    }

    #[test]
    fn compact_wavelet_vanishes_to_second_order_at_ends() {
        let w = MotherWavelet::compact_poly(3).unwrap();
        let p = w.polynomial().unwrap();
        assert!(p[0] == 0.0 && p[1] == 0.0);
        let d = derivative(p);
        assert!(horner(p, 1.0).abs() < 1e-9 && horner(&d, 1.0).abs() < 1e-9);
    }

    #[test]
    fn compact_fourier_branches_agree() {
        let w = MotherWavelet::compact_poly(3).unwrap();
        let g = gauss_legendre(200);
        for xi in [0.3, 1.49, 1.51, 5.0, 29.9, 30.1, 55.0] {
            let re = g.integrate(0.0, 1.0, |t| w.eval(t) * (xi * t).cos());
            let im = g.integrate(0.0, 1.0, |t| -w.eval(t) * (xi * t).sin());
            let got = w.fourier(xi);
            assert!((got.re - re).abs() < 1e-12 && (got.im - im).abs() < 1e-12, "xi={xi}: {got} vs {re}+{im}i");
        }
    }

    #[test]
    fn band_limited_is_normalised_and_oscillating() {
        let w = MotherWavelet::band_limited(1.0, 4.0).unwrap();
        let (lo, hi) = w.support();
        assert!(hi > 10.0 && hi < 40.0, "half width {hi}");
        let g = gauss_legendre(32);
        let panels = 2000;
        let h = (hi - lo) / panels as f64;
        let (mut e, mut m0, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..panels {
            let a = lo + i as f64 * h;
            e += g.integrate(a, a + h, |t| w.eval(t).powi(2));
            m0 += g.integrate(a, a + h, |t| w.eval(t));
            m2 += g.integrate(a, a + h, |t| t * t * w.eval(t));
        }
        assert!((e - 1.0).abs() < 1e-6, "energy {e}");
        // truncation at the effective support leaves residual moments
        assert!(m0.abs() < 1e-7 && m2.abs() < 1e-4, "moments {m0} {m2}");
        // Fourier transform is the bump itself and vanishes off the band
        assert_eq!(w.fourier(0.5).re, 0.0);
        assert_eq!(w.fourier(-4.5).re, 0.0);
        assert!((w.fourier(2.5).re - w.fourier(-2.5).re).abs() < 1e-15);
    }

    #[test]
    fn band_limited_table_matches_direct_inversion() {
        let w = MotherWavelet::band_limited(1.0, 4.0).unwrap();
        let amp = w.band.as_ref().unwrap().amplitude;
        for t in [0.0, 0.013, 0.77, 3.3, 9.1] {
            let direct = w.band_integral(t, amp, 100.0);
            assert!((w.eval(t) - direct).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn coefficient_kills_polynomials_up_to_degree_q_minus_one() {
        let w = MotherWavelet::compact_poly(3).unwrap();
        let quad = |p: f64| 1.0 + 0.5 * p - 0.01 * p * p;
        let path = SampledPath::new((0..=400).map(|p| quad(p as f64)).collect(), 1.0).unwrap();
        let cubic = SampledPath::new((0..=400).map(|p| quad(p as f64) + 1e-4 * (p as f64).powi(3)).collect(), 1.0).unwrap();
        // a large scale makes the Riemann sum close to the integral
        let e2 = coefficient(&path, &w, 200.0, 100.0).unwrap();
        let e3 = coefficient(&cubic, &w, 200.0, 100.0).unwrap();
        assert!(e2.abs() < 1e-5 * e3.abs(), "{e2} vs {e3}");
    }

    #[test]
    fn coefficient_checks_window_and_scale() {
        let w = MotherWavelet::compact_poly(2).unwrap();
        let path = SampledPath::new(vec![0.0; 101], 1.0).unwrap();
        assert!(matches!(coefficient(&path, &w, 10.0, 95.0), Err(Error::WindowOutOfRange { .. })));
        assert!(matches!(coefficient(&path, &w, 1.0, 5.0), Err(Error::Domain(_))));
        let (first, grid) = coefficients_on_grid(&path, &w, 10.0).unwrap();
        assert_eq!((first, grid.len()), (0, 10));
    }
}
