//! Second moments of the process and the noise variance.
//!
//! `m₂(t) = Var X_t` and `c₂(s,t) = Var(X_s X_t)` are plain sample variances
//! of the presmoothed curves. The noise variance uses, for each curve, half
//! the squared difference of the two observations closest to `t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Design, FunctionalSample, Grid};
use crate::error::{FpcaError, Result};
use crate::presmooth::PresmoothedCurve;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub grid: Grid,
    pub m2: Vec<f64>,
    /// Row-major `G × G`.
    pub c2: Vec<f64>,
    /// Noise variance on `grid`, computed with bandwidth `b_used`.
    pub sigma2: Vec<f64>,
    pub b_used: f64,
}

/// Presmoothed curves evaluated on the grid, curve-major.
fn evaluate_all(pres: &[PresmoothedCurve], points: &[f64]) -> Vec<Vec<f64>> {
    pres.par_iter()
        .map(|c| points.iter().map(|&t| c.evaluate(t)).collect())
        .collect()
}

fn variance(values: impl Iterator<Item = f64>, n: f64) -> f64 {
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in values {
        s1 += v;
        s2 += v * v;
    }
    let mean = s1 / n;
    (s2 / n - mean * mean).max(0.0)
}

/// `(m̂₂, ĉ₂)` on `grid`, both floored at zero. `ĉ₂` is row-major.
pub fn estimate_m2_c2(pres: &[PresmoothedCurve], grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    if pres.len() < 2 {
        return Err(FpcaError::InvalidData("moment estimation needs at least 2 curves".into()));
    }
    let n = pres.len() as f64;
    let g = grid.len();
    let x = evaluate_all(pres, grid.points());
    let m2 = (0..g).map(|t| variance(x.iter().map(|c| c[t]), n)).collect();
    let rows: Vec<Vec<f64>> = (0..g)
        .into_par_iter()
        .map(|s| {
            (0..g)
                .map(|t| {
                    if t < s {
                        0.0
                    } else {
                        variance(x.iter().map(|c| c[s] * c[t]), n)
                    }
                })
                .collect()
        })
        .collect();
    let mut c2 = vec![0.0; g * g];
    for s in 0..g {
        for t in s..g {
            c2[s * g + t] = rows[s][t];
            c2[t * g + s] = rows[s][t];
        }
    }
    Ok((m2, c2))
}

/// Indices of the closest and second-closest observation times to `t`,
/// distance ties going to the smaller index.
pub fn closest_pair(times: &[f64], t: f64) -> Option<(usize, usize)> {
    if times.len() < 2 {
        return None;
    }
    let p = times.partition_point(|&x| x < t);
    let lo = p.saturating_sub(2);
    let hi = (p + 2).min(times.len());
    let mut cand: Vec<usize> = (lo..hi).collect();
    cand.sort_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()).then(a.cmp(&b)));
    Some((cand[0], cand[1]))
}

/// Nearest-pair noise variance estimate at `t`. Curves whose
/// second-closest observation lies farther than `b` from `t` are left out.
pub fn sigma2_hat(sample: &FunctionalSample, t: f64, b: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(FpcaError::InvalidArgument(format!("b must be positive, got {b}")));
    }
    let mut total = 0.0;
    let mut included = 0usize;
    for c in sample.curves() {
        let Some((m1, m2)) = closest_pair(c.times(), t) else {
            continue;
        };
        if (c.times()[m2] - t).abs() <= b {
            let d = c.values()[m1] - c.values()[m2];
            total += d * d;
            included += 1;
        }
    }
    if included == 0 {
        return Err(FpcaError::EmptyWindow { t, b });
    }
    Ok(total / (2.0 * included as f64))
}

/// Number of curves entering [`sigma2_hat`] at `t`.
pub fn sigma2_count(sample: &FunctionalSample, t: f64, b: f64) -> usize {
    sample
        .curves()
        .iter()
        .filter_map(|c| closest_pair(c.times(), t).map(|(_, m2)| (c.times()[m2] - t).abs() <= b))
        .filter(|&inc| inc)
        .count()
}

/// Domain length over 10 for random designs; the largest spacing of the
/// shared time points for a common design.
pub fn default_b(sample: &FunctionalSample) -> f64 {
    match sample.design() {
        Design::Independent => sample.domain_length() / 10.0,
        Design::Common => {
            let t = sample.curves()[0].times();
            t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
        }
    }
}

/// `σ̂²` on every grid point. When some point has no usable curve, `b` is
/// doubled for the whole grid until every point is covered; the `b`
/// finally used is returned.
pub fn sigma2_on_grid(sample: &FunctionalSample, points: &[f64], b: f64) -> Result<(Vec<f64>, f64)> {
    if !(b > 0.0) {
        return Err(FpcaError::InvalidArgument(format!("b must be positive, got {b}")));
    }
    if sample.curves().iter().all(|c| c.len() < 2) {
        return Err(FpcaError::DesignTooSparse);
    }
    let mut b = b;
    loop {
        let est: Result<Vec<f64>> = points.par_iter().map(|&t| sigma2_hat(sample, t, b)).collect();
        match est {
            Ok(v) => return Ok((v, b)),
            Err(FpcaError::EmptyWindow { .. }) if b <= 2.0 * sample.domain_length() => b *= 2.0,
            Err(e) => return Err(e),
        }
    }
}

/// Moments and the noise variance on `grid`. `b = None` uses [`default_b`].
pub fn estimate_moments(
    pres: &[PresmoothedCurve],
    sample: &FunctionalSample,
    grid: &Grid,
    b: Option<f64>,
) -> Result<MomentEstimates> {
    let (m2, c2) = estimate_m2_c2(pres, grid)?;
    let b = b.unwrap_or_else(|| default_b(sample));
    let (sigma2, b_used) = sigma2_on_grid(sample, grid.points(), b)?;
    Ok(MomentEstimates {
        grid: grid.clone(),
        m2,
        c2,
        sigma2,
        b_used,
    })
}
