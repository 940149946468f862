//! Nadaraya-Watson smoothing and curve selection.
//!
//! A curve is *selected* at `t` for bandwidth `h` when at least one of its
//! observations receives positive kernel weight, i.e. lies in the kernel
//! window around `t`. Unselected curves have all-zero weights (the `0/0 = 0`
//! rule) and are dropped from every average taken at `t`.

use serde::{Deserialize, Serialize};

use crate::data::{Curve, FunctionalSample};
use crate::error::{FpcaError, Result};

/// Symmetric kernel supported on `[-1, 1]`, integrating to one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `0.75 (1 - u²)`
    #[default]
    Epanechnikov,
    /// `0.5`
    Uniform,
    /// `1 - |u|`
    Triangular,
}

impl Kernel {
    #[inline]
    pub fn evaluate(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - a * a),
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
        }
    }

    /// `∫_{-1}^{1} |u|^a K(u) du`, in closed form.
    pub fn moment(self, a: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => 3.0 / ((a + 1.0) * (a + 3.0)),
            Kernel::Uniform => 1.0 / (a + 1.0),
            Kernel::Triangular => 2.0 / ((a + 1.0) * (a + 2.0)),
        }
    }
}

/// Free-function form of [`Kernel::moment`].
pub fn kernel_moment(a: f64, kernel: Kernel) -> f64 {
    kernel.moment(a)
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(FpcaError::InvalidArgument(format!("bandwidth must be positive, got {h}")))
    }
}

/// Nonzero part of the weight vector of one curve at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// Index of the first observation with positive weight.
    pub start: usize,
    /// Normalized weights for observations `start..start + weights.len()`.
    pub weights: Vec<f64>,
}

impl Window {
    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&values[self.start..])
            .map(|(w, y)| w * y)
            .sum()
    }

    /// `Σ_m W_m(s) W_m(t)` for the windows of the same curve at `s` and `t`.
    pub fn overlap(&self, other: &Window) -> f64 {
        let lo = self.start.max(other.start);
        let hi = (self.start + self.weights.len()).min(other.start + other.weights.len());
        (lo..hi)
            .map(|m| self.weights[m - self.start] * other.weights[m - other.start])
            .sum()
    }
}

/// Normalized NW weights of `curve` at `t`, or `None` when no observation
/// gets positive kernel weight. Assumes `h > 0`.
pub fn window(curve: &Curve, t: f64, h: f64, kernel: Kernel) -> Option<Window> {
    let times = curve.times();
    let lo = times.partition_point(|&x| x < t - h);
    let hi = times.partition_point(|&x| x <= t + h);
    if lo >= hi {
        return None;
    }
    let raw: Vec<f64> = times[lo..hi].iter().map(|&x| kernel.evaluate((x - t) / h)).collect();
    let first = raw.iter().position(|&k| k > 0.0)?;
    let last = raw.iter().rposition(|&k| k > 0.0)?;
    let raw = &raw[first..=last];
    let total: f64 = raw.iter().sum();
    Some(Window {
        start: lo + first,
        weights: raw.iter().map(|k| k / total).collect(),
    })
}

/// Full weight vector `W_m(t; h)`, all zeros when the curve is not selected.
pub fn nw_weights(curve: &Curve, t: f64, h: f64, kernel: Kernel) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    let mut out = vec![0.0; curve.len()];
    if let Some(w) = window(curve, t, h, kernel) {
        out[w.start..w.start + w.weights.len()].copy_from_slice(&w.weights);
    }
    Ok(out)
}

/// Result of smoothing one curve at one point.
///
/// A degenerate evaluation (curve not selected) stores `NaN`, so that any
/// accidental numerical use is visible; use [`SmoothedEvaluation::value`].
#[derive(Clone, Copy, Debug)]
pub struct SmoothedEvaluation {
    value: f64,
    selected: bool,
}

impl SmoothedEvaluation {
    pub fn selected(&self) -> bool {
        self.selected
    }

    pub fn value(&self) -> Option<f64> {
        self.selected.then_some(self.value)
    }
}

/// `X̂_t(h) = Σ_m W_m(t; h) Y_m` together with the selection flag `w_i(t; h)`.
pub fn smooth_at(curve: &Curve, t: f64, h: f64, kernel: Kernel) -> Result<SmoothedEvaluation> {
    check_bandwidth(h)?;
    Ok(match window(curve, t, h, kernel) {
        Some(w) => SmoothedEvaluation {
            value: w.apply(curve.values()),
            selected: true,
        },
        None => SmoothedEvaluation {
            value: f64::NAN,
            selected: false,
        },
    })
}

/// `(𝒲_N(t; h), 𝒲_N(s, t; h))`: curves selected at `t`, and at both `s`
/// and `t`.
pub fn selection_counts(sample: &FunctionalSample, s: f64, t: f64, h: f64, kernel: Kernel) -> Result<(usize, usize)> {
    check_bandwidth(h)?;
    let mut w_t = 0;
    let mut w_st = 0;
    for c in sample.curves() {
        let at_t = window(c, t, h, kernel).is_some();
        if at_t {
            w_t += 1;
            if window(c, s, h, kernel).is_some() {
                w_st += 1;
            }
        }
    }
    Ok((w_t, w_st))
}

/// Harmonic-mean type effective count
/// `𝒩_Γ(t|s; h) = 𝒲_N(s,t)² / Σ_i w_i(s) w_i(t) max_m W_m^{(i)}(t)`.
pub fn n_gamma(sample: &FunctionalSample, s: f64, t: f64, h: f64, kernel: Kernel) -> Result<f64> {
    check_bandwidth(h)?;
    let mut count = 0usize;
    let mut denom = 0.0;
    for c in sample.curves() {
        if window(c, s, h, kernel).is_none() {
            continue;
        }
        if let Some(wt) = window(c, t, h, kernel) {
            count += 1;
            denom += wt.max_weight();
        }
    }
    if count == 0 {
        return Err(FpcaError::NoCurvesSelected { t, h });
    }
    let w = count as f64;
    Ok(w * w / denom)
}

/// Smoothing of every curve at every point of a grid, for one bandwidth.
///
/// Entries are stored curve-major: index `i * n_points + g`.
#[derive(Clone, Debug)]
pub struct GridSmoothing {
    pub h: f64,
    pub n_curves: usize,
    pub n_points: usize,
    pub windows: Vec<Option<Window>>,
}

impl GridSmoothing {
    pub fn new(sample: &FunctionalSample, points: &[f64], h: f64, kernel: Kernel) -> Result<Self> {
        check_bandwidth(h)?;
        let windows = sample
            .curves()
            .iter()
            .flat_map(|c| points.iter().map(move |&t| window(c, t, h, kernel)))
            .collect();
        Ok(Self {
            h,
            n_curves: sample.n_curves(),
            n_points: points.len(),
            windows,
        })
    }

    #[inline]
    pub fn window(&self, curve: usize, point: usize) -> Option<&Window> {
        self.windows[curve * self.n_points + point].as_ref()
    }

    /// Selected grid indices of one curve, increasing.
    pub fn selected_points(&self, curve: usize) -> Vec<usize> {
        (0..self.n_points).filter(|&g| self.window(curve, g).is_some()).collect()
    }

    /// `𝒲_N(s, t; h)` for all grid pairs, row-major.
    pub fn pair_counts(&self) -> Vec<f64> {
        let g = self.n_points;
        let mut counts = vec![0.0; g * g];
        for i in 0..self.n_curves {
            let sel = self.selected_points(i);
            for &s in &sel {
                let row = &mut counts[s * g..(s + 1) * g];
                for &t in &sel {
                    row[t] += 1.0;
                }
            }
        }
        counts
    }

    /// Pair counts and `1/𝒩_Γ(t|s; h)` stored at `[s * G + t]`; the latter is
    /// `+∞` where no curve is selected at both points.
    pub fn pair_counts_and_inv_n_gamma(&self) -> (Vec<f64>, Vec<f64>) {
        let g = self.n_points;
        let mut counts = vec![0.0; g * g];
        let mut max_sum = vec![0.0; g * g];
        for i in 0..self.n_curves {
            let sel = self.selected_points(i);
            let maxw: Vec<f64> = sel
                .iter()
                .map(|&t| self.window(i, t).map_or(0.0, Window::max_weight))
                .collect();
            for &s in &sel {
                let crow = &mut counts[s * g..(s + 1) * g];
                for &t in &sel {
                    crow[t] += 1.0;
                }
                let mrow = &mut max_sum[s * g..(s + 1) * g];
                for (&t, &m) in sel.iter().zip(&maxw) {
                    mrow[t] += m;
                }
            }
        }
        let inv = counts
            .iter()
            .zip(&max_sum)
            .map(|(&w, &m)| if w > 0.0 { m / (w * w) } else { f64::INFINITY })
            .collect();
        (counts, inv)
    }
}
