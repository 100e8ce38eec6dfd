//! Farthest point sampling and the box-dimension estimate built on it.

use serde::{Deserialize, Serialize};

use super::{map_indices, sq_dist, GeneralizedFlow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsResult {
    pub ordering: Vec<usize>,
    /// `epsilon[i - 1]` is the largest distance to the first `i` chosen paths.
    pub epsilon: Vec<f64>,
}

pub fn farthest_point_sampling(flow: &GeneralizedFlow, start_index: usize) -> Result<FpsResult> {
    let n = flow.len();
    if start_index >= n {
        return Err(Error::InvalidInput(format!("start index {start_index} out of range for {n} paths")));
    }
    let emb = flow.h1_embedding();
    let mut chosen = vec![false; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut ordering = Vec::with_capacity(n);
    let mut epsilon = Vec::with_capacity(n);
    let mut next = start_index;
    for _ in 0..n {
        chosen[next] = true;
        ordering.push(next);
        let center = emb.row(next).to_vec();
        let fresh = map_indices(n, |j| sq_dist(emb.row(j), &center));
        for (d, f) in dist.iter_mut().zip(fresh) {
            *d = d.min(f);
        }
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !chosen[j] && best.is_none_or(|b| dist[j] > dist[b]) {
                best = Some(j);
            }
        }
        let covering = dist.iter().fold(0.0_f64, |m, &d| m.max(d));
        epsilon.push(covering.sqrt());
        match best {
            Some(b) => next = b,
            None => break,
        }
    }
    Ok(FpsResult { ordering, epsilon })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDimension {
    pub estimate: f64,
    /// Inclusive range of `i` used by the fit.
    pub fit_range: (usize, usize),
    pub points_used: usize,
    pub r_squared: f64,
    /// `[(1 - log 2 / log(1/ε_i)) · log i / log(1/ε_i), log i / log(1/ε_i)]`
    /// at the lower and upper end of the fit range.
    pub bracket_lo: (f64, f64),
    pub bracket_hi: (f64, f64),
    pub warnings: Vec<String>,
}

fn bracket(i: usize, eps: f64) -> (f64, f64) {
    let inv = (1.0 / eps).ln();
    let upper = (i as f64).ln() / inv;
    ((1.0 - std::f64::consts::LN_2 / inv) * upper, upper)
}

/// Least-squares slope of `log i` against `log(1/ε_i)` for
/// `i in [N^lo_frac, N^hi_frac]`.
pub fn box_dimension(epsilon: &[f64], lo_frac: f64, hi_frac: f64) -> Result<BoxDimension> {
    let n = epsilon.len();
    if !(0.0..=1.0).contains(&lo_frac) || !(0.0..=1.0).contains(&hi_frac) || lo_frac >= hi_frac {
        return Err(Error::InvalidInput(format!("fit fractions must satisfy 0 <= lo < hi <= 1, got {lo_frac}, {hi_frac}")));
    }
    let lo = ((n as f64).powf(lo_frac).ceil() as usize).max(1);
    let mut hi = ((n as f64).powf(hi_frac).floor() as usize).min(n);
    let mut warnings = Vec::new();
    if let Some(zero) = (lo..=hi).find(|&i| !(epsilon[i - 1] > 0.0)) {
        warnings.push(format!("epsilon vanishes at i = {zero}; fit range truncated to end at {}", zero - 1));
        hi = zero - 1;
    }
    if hi < lo + 1 {
        return Err(Error::InvalidInput(format!("fit range [{lo}, {hi}] holds fewer than two points")));
    }
    let xs: Vec<f64> = (lo..=hi).map(|i| (1.0 / epsilon[i - 1]).ln()).collect();
    let ys: Vec<f64> = (lo..=hi).map(|i| (i as f64).ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("epsilon is constant over the fit range".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(BoxDimension {
        estimate: slope,
        fit_range: (lo, hi),
        points_used: xs.len(),
        r_squared,
        bracket_lo: bracket(lo, epsilon[lo - 1]),
        bracket_hi: bracket(hi, epsilon[hi - 1]),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringCheck {
    pub i: usize,
    pub epsilon: f64,
    /// Smallest covering radius over `i`-subsets of the paths themselves.
    pub radius: f64,
    pub holds: bool,
}

const MAX_BRUTE_FORCE: usize = 10;

/// Compares the sampling radius `ε_i` against the optimal covering radius
/// found by enumerating every `i`-subset; tiny inputs only.
pub fn covering_radius_check(flow: &GeneralizedFlow, fps: &FpsResult, i: usize) -> Result<CoveringCheck> {
    let n = flow.len();
    if n > MAX_BRUTE_FORCE || i == 0 || i > n || fps.epsilon.len() != n {
        return Err(Error::InvalidInput(format!("brute force needs 1 <= i <= N <= {MAX_BRUTE_FORCE}, got i = {i}, N = {n}")));
    }
    let emb = flow.h1_embedding();
    let d: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| sq_dist(emb.row(a), emb.row(b)).sqrt()).collect()).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != i {
            continue;
        }
        let radius = (0..n)
            .map(|p| (0..n).filter(|c| mask & (1 << c) != 0).map(|c| d[p][c]).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        best = best.min(radius);
    }
    let epsilon = fps.epsilon[i - 1];
    let slack = 1e-12 * epsilon.max(1.0);
    Ok(CoveringCheck { i, epsilon, radius: best, holds: 0.5 * epsilon <= best + slack && best <= epsilon + slack })
}
