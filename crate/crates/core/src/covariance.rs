//! Covariance estimation from individually smoothed curves.
//!
//! At each pair `(s, t)` only the curves with data near both points enter
//! the average. The diagonal band `|s - t| ≤ 2h` is biased upward by the
//! noise shared between the two smoothed values of a curve; the correction
//! subtracts an estimate of that bias built from the NW weights and `σ̂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalSample, Grid};
use crate::error::{FpcaError, Result};
use crate::kernel::{window, GridSmoothing, Kernel};
use crate::moments::sigma2_on_grid;

/// Default exponent in `b = h^{1-ζ}`.
pub const DEFAULT_ZETA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub grid: Grid,
    /// Corrected covariance, row-major `G × G`.
    pub gamma_matrix: Vec<f64>,
    /// Diagonal correction that was subtracted, row-major.
    pub correction_matrix: Vec<f64>,
    pub h_used: f64,
    /// Bandwidth of the noise estimator inside the correction.
    pub b_used: f64,
    /// Noise standard deviation on the grid used by the correction.
    pub sigma: Vec<f64>,
}

impl CovarianceEstimate {
    /// Uncorrected covariance.
    pub fn raw_matrix(&self) -> Vec<f64> {
        self.gamma_matrix
            .iter()
            .zip(&self.correction_matrix)
            .map(|(g, d)| g + d)
            .collect()
    }
}

/// Mean of the smoothed values over the curves selected at `t`.
pub fn mean_hat(sample: &FunctionalSample, t: f64, h: f64, kernel: Kernel) -> Result<f64> {
    if !(h > 0.0) {
        return Err(FpcaError::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for c in sample.curves() {
        if let Some(w) = window(c, t, h, kernel) {
            total += w.apply(c.values());
            count += 1;
        }
    }
    if count == 0 {
        return Err(FpcaError::NoCurvesSelected { t, h });
    }
    Ok(total / count as f64)
}

/// Smoothed values and selection on the grid, shared by the raw estimator
/// and the correction.
struct Smoothed {
    smoothing: GridSmoothing,
    /// Curve-major smoothed values (0 where not selected).
    values: Vec<f64>,
    selected: Vec<Vec<usize>>,
    mean: Vec<f64>,
}

fn smooth(sample: &FunctionalSample, grid: &Grid, h: f64, kernel: Kernel) -> Result<Smoothed> {
    let smoothing = GridSmoothing::new(sample, grid.points(), h, kernel)?;
    let g = grid.len();
    let n = sample.n_curves();
    let mut values = vec![0.0; n * g];
    let mut selected = Vec::with_capacity(n);
    for (i, c) in sample.curves().iter().enumerate() {
        let sel = smoothing.selected_points(i);
        for &p in &sel {
            values[i * g + p] = smoothing.window(i, p).map_or(0.0, |w| w.apply(c.values()));
        }
        selected.push(sel);
    }
    let mut sum = vec![0.0; g];
    let mut count = vec![0usize; g];
    for (i, sel) in selected.iter().enumerate() {
        for &p in sel {
            sum[p] += values[i * g + p];
            count[p] += 1;
        }
    }
    if let Some(p) = count.iter().position(|&c| c == 0) {
        return Err(FpcaError::NoCurvesSelected { t: grid.points()[p], h });
    }
    let mean = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    Ok(Smoothed {
        smoothing,
        values,
        selected,
        mean,
    })
}

/// Row `s` of the pair counts and of `Σ_i (X̂_s - μ̂_s)(X̂_t - μ̂_t)`.
fn raw_row(sm: &Smoothed, s: usize, g: usize) -> (Vec<f64>, Vec<f64>) {
    let mut counts = vec![0.0; g];
    let mut sums = vec![0.0; g];
    for (i, sel) in sm.selected.iter().enumerate() {
        if sel.binary_search(&s).is_err() {
            continue;
        }
        let ds = sm.values[i * g + s] - sm.mean[s];
        for &t in sel {
            counts[t] += 1.0;
            sums[t] += ds * (sm.values[i * g + t] - sm.mean[t]);
        }
    }
    (counts, sums)
}

fn check_counts(counts: &[f64], h: f64, grid: &Grid) -> Result<()> {
    let g = grid.len();
    if let Some(k) = counts.iter().position(|&c| c < 2.0) {
        let p = grid.points();
        return Err(FpcaError::InfeasibleBandwidth {
            h,
            reason: format!(
                "{} curve(s) observed near both s = {} and t = {}",
                counts[k],
                p[k / g],
                p[k % g]
            ),
        });
    }
    Ok(())
}

fn raw_from(sm: &Smoothed, grid: &Grid, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = grid.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..g).into_par_iter().map(|s| raw_row(sm, s, g)).collect();
    let counts: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    check_counts(&counts, h, grid)?;
    let gamma = rows
        .iter()
        .flat_map(|(c, s)| s.iter().zip(c).map(|(v, w)| v / w))
        .collect();
    Ok((gamma, counts))
}

/// Uncorrected covariance `Γ̂_N` on the grid, row-major. Fails unless every
/// grid pair is seen by at least 2 curves.
pub fn covariance_raw(sample: &FunctionalSample, grid: &Grid, h: f64, kernel: Kernel) -> Result<Vec<f64>> {
    let sm = smooth(sample, grid, h, kernel)?;
    Ok(raw_from(&sm, grid, h)?.0)
}

fn correction_from(sm: &Smoothed, grid: &Grid, h: f64, sigma: &[f64], counts: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let p = grid.points();
    let rows: Vec<Vec<f64>> = (0..g)
        .into_par_iter()
        .map(|s| {
            let mut row = vec![0.0; g];
            for (i, sel) in sm.selected.iter().enumerate() {
                let Some(ws) = sm.smoothing.window(i, s) else {
                    continue;
                };
                for &t in sel {
                    if (p[s] - p[t]).abs() > 2.0 * h {
                        continue;
                    }
                    if let Some(wt) = sm.smoothing.window(i, t) {
                        row[t] += ws.overlap(wt);
                    }
                }
            }
            for t in 0..g {
                row[t] = if (p[s] - p[t]).abs() > 2.0 * h {
                    0.0
                } else {
                    sigma[s] * sigma[t] * row[t] / counts[s * g + t]
                };
            }
            row
        })
        .collect();
    rows.concat()
}

/// Diagonal correction `d̂_N` on the grid for the noise standard deviation
/// `sigma` (values on the grid). Exactly zero off the band `|s - t| ≤ 2h`.
pub fn diagonal_correction(sample: &FunctionalSample, grid: &Grid, h: f64, sigma: &[f64], kernel: Kernel) -> Result<Vec<f64>> {
    if sigma.len() != grid.len() {
        return Err(FpcaError::InvalidArgument("sigma must be given on the grid".into()));
    }
    let sm = smooth(sample, grid, h, kernel)?;
    let (_, counts) = raw_from(&sm, grid, h)?;
    Ok(correction_from(&sm, grid, h, sigma, &counts))
}

/// Corrected covariance with a given noise standard deviation on the grid.
pub fn covariance_corrected(
    sample: &FunctionalSample,
    grid: &Grid,
    h: f64,
    sigma: &[f64],
    b_used: f64,
    kernel: Kernel,
) -> Result<CovarianceEstimate> {
    if sigma.len() != grid.len() {
        return Err(FpcaError::InvalidArgument("sigma must be given on the grid".into()));
    }
    let sm = smooth(sample, grid, h, kernel)?;
    let (raw, counts) = raw_from(&sm, grid, h)?;
    let correction = correction_from(&sm, grid, h, sigma, &counts);
    let gamma_matrix = raw.iter().zip(&correction).map(|(r, d)| r - d).collect();
    Ok(CovarianceEstimate {
        grid: grid.clone(),
        gamma_matrix,
        correction_matrix: correction,
        h_used: h,
        b_used,
        sigma: sigma.to_vec(),
    })
}

/// Corrected covariance with `σ̂` estimated at `b = h^{1-ζ}`.
pub fn estimate_covariance(sample: &FunctionalSample, grid: &Grid, h: f64, zeta: f64, kernel: Kernel) -> Result<CovarianceEstimate> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(FpcaError::InvalidArgument(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    if !(h > 0.0) {
        return Err(FpcaError::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let (sigma2, b_used) = sigma2_on_grid(sample, grid.points(), h.powf(1.0 - zeta))?;
    let sigma: Vec<f64> = sigma2.iter().map(|v| v.sqrt()).collect();
    covariance_corrected(sample, grid, h, &sigma, b_used, kernel)
}
