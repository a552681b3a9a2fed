//! Change-point configuration by dynamic programming over a candidate grid.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalogram::Scalogram;

/// Constraints on admissible segmentations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Number of change points.
    pub m: usize,
    /// Minimal segment length, in time units.
    pub min_len: f64,
    /// Spacing of candidate change points, in time units.
    pub stride: f64,
}

/// Estimated change points and the attained contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePoints {
    /// Change points in time units.
    pub k_hat: Vec<f64>,
    /// Change points as fractions of the horizon.
    pub tau_hat: Vec<f64>,
    /// Summed segment costs at the optimum.
    pub contrast: f64,
    pub horizon: f64,
}

impl ChangePoints {
    /// Segment boundaries 0, k_1, ..., k_m, horizon.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.k_hat.len() + 2);
        b.push(0.0);
        b.extend_from_slice(&self.k_hat);
        b.push(self.horizon);
        b
    }
}

/// Grid positions 0, stride, 2 stride, ..., horizon.
pub fn candidate_positions(horizon: f64, stride: f64) -> Vec<f64> {
    let mut pos = vec![0.0];
    let mut c = 1usize;
    loop {
        let k = c as f64 * stride;
        if k >= horizon - 1e-9 * horizon {
            break;
        }
        pos.push(k);
        c += 1;
    }
    pos.push(horizon);
    pos
}

/// Minimise sum_j cost(i_j, i_{j+1}) over 0 = i_0 < i_1 < ... < i_m < i_{m+1} = n_pos - 1.
///
/// Sums accumulate left to right, so the optimum equals the one found by
/// enumerating every configuration in the same order. Exact ties go to the
/// lexicographically smallest configuration. Infinite costs mark
/// inadmissible segments.
#[allow(clippy::needless_range_loop)]
pub fn dp_segment<F>(n_pos: usize, m: usize, cost: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    if n_pos < m + 2 {
        return Err(Error::Infeasible(format!("{} candidate positions cannot hold {m} change points", n_pos.saturating_sub(2))));
    }
    let end = n_pos - 1;
    if m == 0 {
        let c = cost(0, end);
        return if c.is_finite() { Ok((Vec::new(), c)) } else { Err(Error::Infeasible("single segment is inadmissible".into())) };
    }
    // best[s][i]: minimal sum over configurations whose (s+1)-th change point is i
    let mut best: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut pred: Vec<Vec<usize>> = Vec::with_capacity(m);
    best.push((0..n_pos).map(|i| if i == 0 || i == end { f64::INFINITY } else { cost(0, i) }).collect());
    pred.push(vec![0; n_pos]);
    for s in 1..m {
        let prev = &best[s - 1];
        let prev_pred = &pred[..];
        let stage = |i: usize| -> (f64, usize) {
            let mut val = f64::INFINITY;
            let mut arg = usize::MAX;
            if i == end {
                return (val, arg);
            }
            for j in s..i {
                if !prev[j].is_finite() {
                    continue;
                }
                let v = prev[j] + cost(j, i);
                if v < val || (v == val && v.is_finite() && lex_less(prev_pred, s - 1, j, arg)) {
                    val = v;
                    arg = j;
                }
            }
            (val, arg)
        };
        let row: Vec<(f64, usize)> = crate::par::map_range(n_pos, stage);
        best.push(row.iter().map(|r| r.0).collect());
        pred.push(row.iter().map(|r| r.1).collect());
    }
    let mut total = f64::INFINITY;
    let mut arg = usize::MAX;
    for i in m..end {
        if !best[m - 1][i].is_finite() {
            continue;
        }
        let v = best[m - 1][i] + cost(i, end);
        if v < total || (v == total && v.is_finite() && lex_less(&pred, m - 1, i, arg)) {
            total = v;
            arg = i;
        }
    }
    if !total.is_finite() {
        return Err(Error::Infeasible("no configuration satisfies the minimal segment length".into()));
    }
    Ok((trace(&pred, m - 1, arg), total))
}

/// Change points of the configuration ending with change point `i` at stage `s`.
fn trace(pred: &[Vec<usize>], s: usize, i: usize) -> Vec<usize> {
    let mut path = vec![i];
    let mut cur = i;
    for st in (1..=s).rev() {
        cur = pred[st][cur];
        path.push(cur);
    }
    path.reverse();
    path
}

fn lex_less(pred: &[Vec<usize>], s: usize, a: usize, b: usize) -> bool {
    if b == usize::MAX {
        return true;
    }
    trace(pred, s, a) < trace(pred, s, b)
}

/// Cost of [k, k') or infinity when the segment is inadmissible.
fn admissible_cost(sg: &Scalogram, k: f64, k_end: f64, min_len: f64) -> f64 {
    if k_end - k < min_len * (1.0 - 1e-12) {
        return f64::INFINITY;
    }
    sg.segment_cost(k, k_end).unwrap_or(f64::INFINITY)
}

/// Contrast G(k_1, ..., k_m): the summed least-squares costs of the
/// segments delimited by `ks`.
pub fn contrast(sg: &Scalogram, ks: &[f64]) -> Result<f64> {
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(ks);
    bounds.push(sg.horizon());
    if bounds.windows(2).any(|w| w[1] <= w[0]) {
        return domain(format!("change points must increase strictly inside (0, {}), got {ks:?}", sg.horizon()));
    }
    let mut total = 0.0;
    for w in bounds.windows(2) {
        total += sg.segment_cost(w[0], w[1])?;
    }
    Ok(total)
}

/// Global minimiser of the contrast over the candidate grid.
pub fn detect(sg: &Scalogram, c: &Constraints) -> Result<ChangePoints> {
    if !(c.stride > 0.0 && c.min_len >= 0.0) {
        return domain("stride must be positive and the minimal length nonnegative");
    }
    let horizon = sg.horizon();
    if (c.m + 1) as f64 * c.min_len > horizon {
        return Err(Error::Infeasible(format!("{} segments of length {} exceed the horizon {horizon}", c.m + 1, c.min_len)));
    }
    let pos = candidate_positions(horizon, c.stride);
    let (idx, total) = dp_segment(pos.len(), c.m, |i, j| admissible_cost(sg, pos[i], pos[j], c.min_len))?;
    let k_hat: Vec<f64> = idx.iter().map(|&i| pos[i]).collect();
    Ok(ChangePoints { tau_hat: k_hat.iter().map(|k| k / horizon).collect(), k_hat, contrast: total, horizon })
}

/// Contrast as a function of a single change point over the candidate grid
/// (None where the split is inadmissible).
pub fn contrast_profile(sg: &Scalogram, min_len: f64, stride: f64) -> Vec<(f64, Option<f64>)> {
    let pos = candidate_positions(sg.horizon(), stride);
    let last = *pos.last().unwrap();
    pos[1..pos.len() - 1]
        .iter()
        .map(|&k| {
            let v = admissible_cost(sg, 0.0, k, min_len) + admissible_cost(sg, k, last, min_len);
            (k, v.is_finite().then_some(v))
        })
        .collect()
}

/// Shrunk segments with margin = horizon / v_n moved inward from every
/// estimated change point. The ends 0 and horizon are known exactly and
/// stay in place.
pub fn shrink(cp: &ChangePoints, v_n: f64) -> Result<Vec<(f64, f64)>> {
    if !(v_n > 0.0 && v_n.is_finite()) {
        return domain(format!("shrink rate must be positive, got {v_n}"));
    }
    let margin = cp.horizon / v_n;
    let last = cp.k_hat.len();
    cp.boundaries()
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let lo = if j == 0 { w[0] } else { w[0] + margin };
            let hi = if j == last { w[1] } else { w[1] - margin };
            if lo >= hi {
                Err(Error::MarginsSwallowSegment { segment: j, margin })
            } else {
                Ok((lo, hi))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalRng;
    use proptest::prelude::*;

    /// Enumerate all configurations in lexicographic order, summing left to
    /// right and keeping strict improvements.
    fn exhaustive(n_pos: usize, m: usize, cost: &dyn Fn(usize, usize) -> f64) -> Option<(Vec<usize>, f64)> {
        let end = n_pos - 1;
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut idx: Vec<usize> = (1..=m).collect();
        if m == 0 {
            let c = cost(0, end);
            return c.is_finite().then(|| (vec![], c));
        }
        if m + 1 > end {
            return None;
        }
        loop {
            let mut total = cost(0, idx[0]);
            for w in idx.windows(2) {
                total += cost(w[0], w[1]);
            }
            total += cost(idx[m - 1], end);
            if total.is_finite() && best.as_ref().is_none_or(|b| total < b.1) {
                best = Some((idx.clone(), total));
            }
            // next combination
            let mut i = m;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < end - (m - i) {
                    idx[i] += 1;
                    for t in i + 1..m {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn random_table(n: usize, seed: u64, ties: bool) -> Vec<f64> {
        let mut g = NormalRng::new(seed);
        (0..n * n)
            .map(|_| {
                let u = g.uniform();
                if ties {
                    (u * 4.0).floor()
                } else if u < 0.1 {
                    f64::INFINITY
                } else {
                    u
                }
            })
            .collect()
    }

    #[test]
    fn candidate_grid_ends_at_horizon() {
        assert_eq!(candidate_positions(10.0, 3.0), vec![0.0, 3.0, 6.0, 9.0, 10.0]);
        assert_eq!(candidate_positions(9.0, 3.0), vec![0.0, 3.0, 6.0, 9.0]);
    }

    #[test]
    fn shrink_moves_only_estimated_points() {
        let cp = ChangePoints { k_hat: vec![40.0], tau_hat: vec![0.4], contrast: 0.0, horizon: 100.0 };
        assert_eq!(shrink(&cp, 20.0).unwrap(), vec![(0.0, 35.0), (45.0, 100.0)]);
        assert!(matches!(shrink(&cp, 2.0), Err(Error::MarginsSwallowSegment { segment: 0, .. })));
        let none = ChangePoints { k_hat: vec![], tau_hat: vec![], contrast: 0.0, horizon: 100.0 };
        assert_eq!(shrink(&none, 1.5).unwrap(), vec![(0.0, 100.0)]);
    }

    #[test]
    fn infeasible_when_segments_too_long() {
        let r = dp_segment(6, 2, |i, j| if j - i < 3 { f64::INFINITY } else { 1.0 });
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dp_matches_exhaustive(n in 3usize..24, m in 0usize..4, seed in 0u64..10_000, ties in any::<bool>()) {
            prop_assume!(n >= m + 2);
            let t = random_table(n, seed, ties);
            let cost = |i: usize, j: usize| t[i * n + j];
            let want = exhaustive(n, m, &cost);
            match dp_segment(n, m, cost) {
                Ok((idx, total)) => {
                    let (widx, wtotal) = want.expect("dp found a configuration the oracle missed");
                    prop_assert_eq!(total.to_bits(), wtotal.to_bits());
                    prop_assert_eq!(idx, widx);
                }
                Err(_) => prop_assert!(want.is_none()),
            }
        }
    }
}
