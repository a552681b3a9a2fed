//! Asymptotic covariance Gamma of the log-variance vector.
//!
//! For scales a r_p and a r_q with d = gcd(r_p, r_q), the shifts of the two
//! coefficient families differ by lags a d m, m in Z, and
//!
//!   n_eff Cov(log S_p, log S_q) -> gamma_pq = 2 d sum_m rho_pq(a d m)^2,
//!
//! where rho_pq is the correlation between coefficients at the two scales.
//! The families differ only in how rho is computed.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::quad::{gauss_jacobi, gauss_legendre, singular_endpoint, Rule};
use crate::scalogram::ScaleGrid;
use crate::wavelet::{MotherWavelet, WaveletKind};

/// Relative size below which further lag terms are dropped.
pub const LAG_SUM_TOL: f64 = 1e-10;

const MAX_LAG_TERMS: usize = 20_000;

pub(crate) fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn require_compact(psi: &MotherWavelet) -> Result<()> {
    match psi.kind() {
        WaveletKind::CompactPoly { .. } => Ok(()),
        WaveletKind::BandLimited { .. } => domain("this covariance needs a compactly supported wavelet"),
    }
}

/// Double integral of a power kernel against a compact wavelet,
///
///   I(s; r_p, r_q) = int_0^1 int_0^1 psi(x) psi(y) |s + r_p x - r_q y|^beta dx dy,
///
/// which drives the coefficient covariance of every process whose
/// (generalised) covariance kernel is a power of the lag.
///
/// Substituting z = r_p x - r_q y reduces it to int Phi(z) |s + z|^beta dz,
/// where the cross-correlation Phi of the dilated wavelets is a polynomial
/// on each of at most three pieces. Pieces are stored in Chebyshev form;
/// the kink z = -s is handled by Gauss-Jacobi rules anchored at it, which
/// are exact for polynomial times power.
pub struct PowerKernel<'a> {
    psi: &'a MotherWavelet,
    beta: f64,
    inner: Rule,
    jacobi: Rule,
    far: Rule,
    cheb: usize,
}

/// Cross-correlation of the wavelet dilated by r_p and r_q.
struct CrossCorrelation {
    pieces: Vec<(f64, f64, Vec<f64>)>,
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

impl<'a> PowerKernel<'a> {
    pub fn new(psi: &'a MotherWavelet, beta: f64) -> Result<Self> {
        require_compact(psi)?;
        if !(beta > -1.0 && beta < 2.0) {
            return domain(format!("kernel exponent must lie in (-1, 2), got {beta}"));
        }
        let q = psi.vanishing_moments();
        Ok(PowerKernel {
            psi,
            beta,
            inner: gauss_legendre(q + 6),
            jacobi: gauss_jacobi(q + 8, 0.0, beta),
            far: gauss_legendre(24),
            cheb: 2 * q + 12,
        })
    }

    fn cross_correlation(&self, rp: f64, rq: f64) -> CrossCorrelation {
        let mut breaks = [-rq, 0.0, rp - rq, rp];
        breaks.sort_by(f64::total_cmp);
        let n = self.cheb;
        let mut pieces = Vec::with_capacity(3);
        for w in breaks.windows(2) {
            let (z0, z1) = (w[0], w[1]);
            if z1 - z0 <= 1e-12 * (rp + rq) {
                continue;
            }
            let zm = 0.5 * (z0 + z1);
            let lower_moves = zm > 0.0;
            let upper_moves = zm + rq < rp;
            let phi = |z: f64| {
                let lo = if lower_moves { z } else { 0.0 };
                let hi = if upper_moves { z + rq } else { rp };
                self.inner.integrate(lo, hi, |u| self.psi.eval_polynomial(u / rp) * self.psi.eval_polynomial((u - z) / rq))
                    / (rp * rq)
            };
            let samples: Vec<f64> = (0..n)
                .map(|k| {
                    let x = (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos();
                    phi(zm + 0.5 * (z1 - z0) * x)
                })
                .collect();
            let coeffs: Vec<f64> = (0..n)
                .map(|j| {
                    let c: f64 = samples
                        .iter()
                        .enumerate()
                        .map(|(k, f)| f * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                        .sum();
                    c * if j == 0 { 1.0 } else { 2.0 } / n as f64
                })
                .collect();
            pieces.push((z0, z1, coeffs));
        }
        CrossCorrelation { pieces }
    }

    fn integral_with(&self, cc: &CrossCorrelation, s: f64) -> f64 {
        let c = -s;
        let b = self.beta;
        let mut acc = 0.0;
        for (z0, z1, coeffs) in &cc.pieces {
            let (z0, z1) = (*z0, *z1);
            let width = z1 - z0;
            let phi = |z: f64| clenshaw(coeffs, (2.0 * z - z0 - z1) / width);
            let tol = 1e-10 * width;
            let kernel = |z: f64| phi(z) * (s + z).abs().powf(b);
            acc += if c > z0 - tol && c < z1 + tol {
                singular_endpoint(&self.jacobi, b, c, z1, phi) - singular_endpoint(&self.jacobi, b, c, z0, phi)
            } else {
                let (near, sign, dist) = if c < z0 { (z0, 1.0, z0 - c) } else { (z1, -1.0, c - z1) };
                if dist >= 2.0 * width {
                    self.far.integrate(z0, z1, kernel)
                } else {
                    // subintervals no longer than their distance to the kink
                    let mut total = 0.0;
                    let mut from = 0.0;
                    let mut len = dist;
                    while from < width {
                        let to = (from + len).min(width);
                        let (a, e) = (near + sign * from, near + sign * to);
                        total += self.far.integrate(a.min(e), a.max(e), kernel);
                        from = to;
                        len *= 2.0;
                    }
                    total
                }
            };
        }
        acc
    }

    pub fn integral(&self, rp: f64, rq: f64, s: f64) -> f64 {
        self.integral_with(&self.cross_correlation(rp, rq), s)
    }

    /// 2 d (r_p r_q)^{-beta} sum_m (I(d m; r_p, r_q) / I(0; 1, 1))^2.
    pub fn gamma_entry(&self, rp: u32, rq: u32) -> Result<f64> {
        let i0 = self.integral(1.0, 1.0, 0.0);
        let d = gcd(rp, rq);
        let (fp, fq, fd) = (rp as f64, rq as f64, d as f64);
        let cc = self.cross_correlation(fp, fq);
        let term = |m: i64| (self.integral_with(&cc, fd * m as f64) / i0).powi(2);
        let mut sum = term(0);
        let overlap = ((fp + fq) / fd).ceil() as usize;
        let mut m = 1usize;
        loop {
            let t = term(m as i64) + term(-(m as i64));
            sum += t;
            if m > overlap && t < LAG_SUM_TOL * sum {
                break;
            }
            m += 1;
            if m > MAX_LAG_TERMS {
                return Err(Error::Quadrature(format!("lag sum for ratios ({rp}, {rq}) did not converge")));
            }
        }
        Ok(2.0 * fd * (fp * fq).powf(-self.beta) * sum)
    }

    /// Full matrix over the grid ratios.
    pub fn matrix(&self, grid: &ScaleGrid) -> Result<DMatrix<f64>> {
        symmetric(grid.len(), |p, q| self.gamma_entry(grid.ratios[p], grid.ratios[q]))
    }
}

fn symmetric(n: usize, entry: impl Fn(usize, usize) -> Result<f64> + Sync + Send) -> Result<DMatrix<f64>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|p| (p..n).map(move |q| (p, q))).collect();
    let vals: Vec<Result<f64>> = crate::par::map(&pairs, |&(p, q)| entry(p, q));
    let mut g = DMatrix::zeros(n, n);
    for (&(p, q), v) in pairs.iter().zip(vals) {
        let v = v?;
        g[(p, q)] = v;
        g[(q, p)] = v;
    }
    Ok(g)
}

/// Gamma for fractional Brownian motion with Hurst index `h`. The
/// coefficient covariance is -sigma^2/2 a^{2H+1} (r_p r_q)^{1/2} I(.) with
/// beta = 2H, so rho_pq(a d m) = (r_p r_q)^{-H} I(d m) / I(0; 1, 1).
pub fn gamma_fbm(h: f64, grid: &ScaleGrid, psi: &MotherWavelet) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h < 1.0) {
        return domain(format!("Hurst index must lie in (0, 1), got {h}"));
    }
    PowerKernel::new(psi, 2.0 * h)?.matrix(grid)
}

/// psi_hat products on a quadrature grid for one reduced ratio pair,
/// independent of the memory parameter.
#[derive(Debug, Clone)]
struct PairSpectrum {
    weight: Vec<f64>,
    ln_v: Vec<f64>,
    /// Real and imaginary parts of conj(psi_hat(p' v)) psi_hat(q' v).
    re: Vec<f64>,
    im: Vec<f64>,
    rot: Vec<(f64, f64)>,
    max_lag: usize,
    overlap: usize,
}

/// Frequency-domain Gamma for long-memory processes with spectral density
/// behaving as |xi|^{-D} at the origin:
///
///   gamma_pq = 2 d^{2D-1} (r_p r_q)^{1-D} sum_m N_pq(m)^2 / N_0^2,
///   N_pq(m) = Re int_0^inf conj(psi_hat(p' v)) psi_hat(q' v) v^{-D} e^{i v m} dv,
///   N_0 = int_0^inf |psi_hat(v)|^2 v^{-D} dv,
///
/// with p' = r_p/d and q' = r_q/d. The wavelet transforms are sampled
/// once, so evaluating Gamma for a new D only reweights the cached grid.
#[derive(Debug, Clone)]
pub struct LrdKernel {
    ratios: Vec<u32>,
    pairs: HashMap<(u32, u32), PairSpectrum>,
}

impl LrdKernel {
    pub fn new(psi: &MotherWavelet, grid: &ScaleGrid) -> Result<Self> {
        require_compact(psi)?;
        // |psi_hat(x)| <= tail / x^3 for large x (psi has a double zero at both ends)
        let tail = (0..2000)
            .map(|i| {
                let x = 30.0 + 0.37 * i as f64;
                psi.fourier(x).norm() * x.powi(3)
            })
            .fold(0.0, f64::max)
            * 1.5;
        let mut keys = vec![(1u32, 1u32)];
        for (i, &rp) in grid.ratios.iter().enumerate() {
            for &rq in &grid.ratios[i + 1..] {
                let d = gcd(rp, rq);
                keys.push((rp / d, rq / d));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let specs: Vec<PairSpectrum> = crate::par::map(&keys, |&(p, q)| pair_spectrum(psi, p, q, tail));
        Ok(LrdKernel { ratios: grid.ratios.clone(), pairs: keys.into_iter().zip(specs).collect() })
    }

    pub fn ratios(&self) -> &[u32] {
        &self.ratios
    }

    /// sum_m N(m)^2 / N_0^2 for the reduced pair, together with N_0.
    fn lag_sum(&self, key: (u32, u32), dm: f64, norm: f64) -> Result<f64> {
        let sp = &self.pairs[&key];
        let n = sp.weight.len();
        let mut wr = Vec::with_capacity(n);
        let mut wi = Vec::with_capacity(n);
        for i in 0..n {
            let f = sp.weight[i] * (-dm * sp.ln_v[i]).exp();
            wr.push(f * sp.re[i]);
            wi.push(f * sp.im[i]);
        }
        let n0: f64 = wr.iter().sum();
        let mut sum = (n0 / norm).powi(2);
        // (cos vm, sin vm) advanced by one rotation per lag
        let mut cs: Vec<(f64, f64)> = vec![(1.0, 0.0); n];
        for m in 1..=sp.max_lag {
            let (mut c, mut s) = (0.0, 0.0);
            for i in 0..n {
                let (co, si) = cs[i];
                let (rc, rs) = sp.rot[i];
                let nc = co * rc - si * rs;
                let ns = co * rs + si * rc;
                cs[i] = (nc, ns);
                c += wr[i] * nc;
                s += wi[i] * ns;
            }
            // N(m) = c - s and N(-m) = c + s
            let t = 2.0 * (c * c + s * s) / (norm * norm);
            sum += t;
            if m > sp.overlap && t < LAG_SUM_TOL * sum {
                return Ok(sum);
            }
        }
        Err(Error::Quadrature(format!("spectral lag sum for reduced ratios {key:?} did not converge")))
    }

    pub fn gamma(&self, d: f64) -> Result<DMatrix<f64>> {
        if !(d > 0.0 && d < 1.0) {
            return domain(format!("memory parameter D must lie in (0, 1), got {d}"));
        }
        let one = &self.pairs[&(1, 1)];
        let norm: f64 = (0..one.weight.len())
            .map(|i| one.weight[i] * (-d * one.ln_v[i]).exp() * one.re[i])
            .sum();
        let r = &self.ratios;
        symmetric(r.len(), |p, q| {
            let g = gcd(r[p], r[q]);
            let key = (r[p] / g, r[q] / g);
            let s = self.lag_sum(key, d, norm)?;
            let (g, rp, rq) = (g as f64, r[p] as f64, r[q] as f64);
            Ok(2.0 * g.powf(2.0 * d - 1.0) * (rp * rq).powf(1.0 - d) * s)
        })
    }
}

fn pair_spectrum(psi: &MotherWavelet, p: u32, q: u32, tail: f64) -> PairSpectrum {
    let (fp, fq) = (p as f64, q as f64);
    let overlap = (p + q) as usize;
    let max_lag = 8 * overlap + 32;
    let top = (tail * tail / (5.0 * 1e-12 * (fp * fq).powi(3))).powf(0.2).max(20.0 / fp.min(fq));
    let h = 10.0 / (fp + fq + max_lag as f64);
    let panels = (top / h).ceil() as usize;
    let rule = gauss_legendre(16);
    let cap = panels * rule.nodes.len();
    let mut sp = PairSpectrum {
        weight: Vec::with_capacity(cap),
        ln_v: Vec::with_capacity(cap),
        re: Vec::with_capacity(cap),
        im: Vec::with_capacity(cap),
        rot: Vec::with_capacity(cap),
        max_lag,
        overlap,
    };
    for k in 0..panels {
        let lo = k as f64 * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = lo + 0.5 * h * (1.0 + x);
            let prod = psi.fourier(fp * v).conj() * psi.fourier(fq * v);
            sp.weight.push(0.5 * h * w);
            sp.ln_v.push(v.ln());
            sp.re.push(prod.re);
            sp.im.push(prod.im);
            sp.rot.push((v.cos(), v.sin()));
        }
    }
    sp
}

/// Gamma for long-memory processes with memory parameter D.
///
/// The spectral density |xi|^{-D} and the generalised covariance
/// |t|^{D-1} are a Fourier pair, so the frequency-domain integrals of
/// [`LrdKernel`] equal the time-domain ones of [`PowerKernel`] with
/// beta = D - 1. The time-domain form is exact for compact wavelets and
/// much cheaper, so it is the one used here.
pub fn gamma_lrd(d: f64, grid: &ScaleGrid, psi: &MotherWavelet) -> Result<DMatrix<f64>> {
    if !(d > 0.0 && d < 1.0) {
        return domain(format!("memory parameter D must lie in (0, 1), got {d}"));
    }
    PowerKernel::new(psi, d - 1.0)?.matrix(grid)
}

/// Gamma for locally fractional processes observed through a band-limited
/// wavelet with trimming fraction w:
///
///   gamma_pq = 2 / ((1-2w) (r_p r_q)^{2H}) * 4 pi int_0^inf g(xi)^2 dxi / norm^2,
///   g(xi) = psi_hat(r_p xi) psi_hat(r_q xi) xi^{-1-2H},
///   norm = 2 int_0^inf psi_hat(u)^2 u^{-1-2H} du.
///
/// The lag sum over the shift lattice equals the continuous-lag integral
/// used here when mu <= pi.
pub fn gamma_locfrac(h: f64, grid: &ScaleGrid, psi: &MotherWavelet) -> Result<DMatrix<f64>> {
    let WaveletKind::BandLimited { lambda, mu } = psi.kind() else {
        return domain("the locally fractional covariance needs a band-limited wavelet");
    };
    if !h.is_finite() {
        return domain(format!("exponent must be finite, got {h}"));
    }
    let w = grid.trim;
    let rule = gauss_legendre(32);
    let e = -1.0 - 2.0 * h;
    let integrate = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let panels = 16;
        let step = (hi - lo) / panels as f64;
        (0..panels).map(|i| rule.integrate(lo + i as f64 * step, lo + (i + 1) as f64 * step, f)).sum()
    };
    let norm = 2.0 * integrate(lambda, mu, &|u| psi.fourier(u).re.powi(2) * u.powf(e));
    let r = &grid.ratios;
    symmetric(r.len(), |p, q| {
        let (rp, rq) = (r[p] as f64, r[q] as f64);
        let lo = (lambda / rp).max(lambda / rq);
        let hi = (mu / rp).min(mu / rq);
        if hi <= lo {
            return Ok(0.0);
        }
        let g2 = integrate(lo, hi, &|x| (psi.fourier(rp * x).re * psi.fourier(rq * x).re * x.powf(e)).powi(2));
        Ok(2.0 / ((1.0 - 2.0 * w) * (rp * rq).powf(2.0 * h)) * 4.0 * std::f64::consts::PI * g2 / (norm * norm))
    })
}
