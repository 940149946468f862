//! Local regularity of the sample paths.
//!
//! Near `t` the increments behave like `E(X_u - X_v)² ≈ L_t² |u - v|^{2H_t}`.
//! Both `H_t` and `L_t` are read off mean squared increments of the
//! presmoothed curves over three points at spacing `Δ_*`, computed on a
//! coarse parameter grid and then spline-smoothed onto the working grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalSample, Grid};
use crate::error::{FpcaError, Result};
use crate::presmooth::PresmoothedCurve;
use crate::spline::CubicSpline;

/// Floor applied to mean squared increments before taking logs.
pub const THETA_FLOOR: f64 = 1e-12;

/// Tuning of the regularity estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularityOptions {
    /// Exponent in `Δ_* = exp(-ln^γ M̄)`.
    pub gamma: f64,
    pub h_clip: (f64, f64),
    pub l_min: f64,
    /// Interior knot count; `None` picks `⌊M̄/4⌋ + 1` capped by the grid size.
    pub n_knots: Option<usize>,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self {
            gamma: 0.75,
            h_clip: (0.05, 0.95),
            l_min: 1e-4,
            n_knots: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    pub grid: Grid,
    /// Smoothed `Ĥ_t` on `grid`.
    pub h: Vec<f64>,
    /// Smoothed `L̂_t` on `grid`.
    pub l: Vec<f64>,
    pub delta_star: f64,
    pub gamma: f64,
    /// Raw (clipped, unsmoothed) estimates on the parameter grid.
    pub param_points: Vec<f64>,
    pub h_param: Vec<f64>,
    pub l_param: Vec<f64>,
}

/// Three points around `t` with `t₂` the midpoint of `t₁` and `t₃`, pushed
/// inside `[0, 1]` near the boundary.
pub fn triple_points(t: f64, delta_star: f64) -> (f64, f64, f64) {
    let lo = (t - delta_star).max(0.0);
    let hi = (t + delta_star).min(1.0);
    let (t1, t3) = if t <= 0.5 { (lo, hi) } else { (hi, lo) };
    (t1, 0.5 * (t1 + t3), t3)
}

/// Mean squared increment `(1/N) Σ (X̃_u - X̃_v)²`.
pub fn theta_hat(pres: &[PresmoothedCurve], u: f64, v: f64) -> f64 {
    if pres.is_empty() {
        return 0.0;
    }
    let s: f64 = pres
        .iter()
        .map(|c| {
            let d = c.evaluate(u) - c.evaluate(v);
            d * d
        })
        .sum();
    s / pres.len() as f64
}

/// `Δ_* = exp(-ln^γ M̄)`, capped at 1/4 so that the triples stay well inside
/// the domain for very sparse designs.
pub fn delta_star(mean_observations: f64, gamma: f64) -> f64 {
    (-(mean_observations.max(1.0).ln().powf(gamma))).exp().min(0.25)
}

/// Raw `(Ĥ_t, L̂_t)` at one point, already clipped.
pub fn local_regularity(pres: &[PresmoothedCurve], t: f64, delta: f64, opts: &RegularityOptions) -> (f64, f64) {
    let (t1, t2, t3) = triple_points(t, delta);
    let th13 = theta_hat(pres, t1, t3).max(THETA_FLOOR);
    let th12 = theta_hat(pres, t1, t2).max(THETA_FLOOR);
    let h = ((th13.ln() - th12.ln()) / (2.0 * std::f64::consts::LN_2)).clamp(opts.h_clip.0, opts.h_clip.1);
    let l = (th13 / (t1 - t3).abs().powf(2.0 * h)).sqrt().max(opts.l_min);
    (h, l)
}

pub fn default_knot_count(mean_observations: f64, n_param: usize) -> usize {
    ((mean_observations / 4.0).floor() as usize + 1).min(n_param.saturating_sub(5))
}

/// Estimates `H_t` and `L_t` on `fine_grid` using the default options with
/// the given `gamma`.
pub fn estimate_regularity(
    pres: &[PresmoothedCurve],
    sample: &FunctionalSample,
    fine_grid: &Grid,
    gamma: f64,
) -> Result<RegularityEstimate> {
    let opts = RegularityOptions {
        gamma,
        ..RegularityOptions::default()
    };
    estimate_regularity_with(pres, sample.mean_observations(), fine_grid, &opts)
}

pub fn estimate_regularity_with(
    pres: &[PresmoothedCurve],
    mean_observations: f64,
    fine_grid: &Grid,
    opts: &RegularityOptions,
) -> Result<RegularityEstimate> {
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(FpcaError::InvalidArgument(format!("gamma must lie in (0, 1), got {}", opts.gamma)));
    }
    let (lo, hi) = opts.h_clip;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) || !(opts.l_min > 0.0) {
        return Err(FpcaError::InvalidArgument("regularity clip ranges are invalid".into()));
    }
    if pres.is_empty() {
        return Err(FpcaError::InvalidData("no presmoothed curves".into()));
    }
    let delta = delta_star(mean_observations, opts.gamma);
    let n_param = ((mean_observations / 3.0).floor() as usize).max(2);
    let param_points: Vec<f64> = (0..n_param).map(|k| k as f64 / (n_param - 1) as f64).collect();
    let raw: Vec<(f64, f64)> = param_points
        .par_iter()
        .map(|&t| local_regularity(pres, t, delta, opts))
        .collect();
    let h_param: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let l_param: Vec<f64> = raw.iter().map(|r| r.1).collect();

    let knots = opts
        .n_knots
        .unwrap_or_else(|| default_knot_count(mean_observations, n_param));
    let h_spline = CubicSpline::fit(&param_points, &h_param, knots)?;
    let l_spline = CubicSpline::fit(&param_points, &l_param, knots)?;
    let h = fine_grid
        .points()
        .iter()
        .map(|&t| h_spline.evaluate(t).clamp(lo, hi))
        .collect();
    let l = fine_grid
        .points()
        .iter()
        .map(|&t| l_spline.evaluate(t).max(opts.l_min))
        .collect();
    Ok(RegularityEstimate {
        grid: fine_grid.clone(),
        h,
        l,
        delta_star: delta,
        gamma: opts.gamma,
        param_points,
        h_param,
        l_param,
    })
}
