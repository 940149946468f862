//! Pilot smoothing of individual curves.
//!
//! Each curve is smoothed with a local-constant kernel estimator at the
//! anchors `{0, T_1, …, T_M, 1}` and linearly interpolated in between. The
//! common bandwidth is the (lower) median of leave-one-out CV choices made
//! on a random subset of curves.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Curve, FunctionalSample};
use crate::error::{FpcaError, Result};
use crate::kernel::{window, Kernel};
use crate::rng::{substream, TAG_SUBSET};

/// Number of candidates in the default leave-one-out CV grid.
pub const LSCV_GRID_SIZE: usize = 20;

/// Piecewise-linear reconstruction of a curve through smoothed anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresmoothedCurve {
    anchor_times: Vec<f64>,
    anchor_values: Vec<f64>,
}

impl PresmoothedCurve {
    pub fn from_anchors(anchor_times: Vec<f64>, anchor_values: Vec<f64>) -> Result<Self> {
        if anchor_times.is_empty() || anchor_times.len() != anchor_values.len() {
            return Err(FpcaError::InvalidArgument("anchor times and values must be nonempty and of equal length".into()));
        }
        if anchor_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FpcaError::InvalidArgument("anchor times must be strictly increasing".into()));
        }
        Ok(Self {
            anchor_times,
            anchor_values,
        })
    }

    pub fn anchor_times(&self) -> &[f64] {
        &self.anchor_times
    }

    pub fn anchor_values(&self) -> &[f64] {
        &self.anchor_values
    }

    /// Linear interpolation between anchors, constant beyond the end anchors.
    pub fn evaluate(&self, t: f64) -> f64 {
        let ts = &self.anchor_times;
        let vs = &self.anchor_values;
        let k = ts.partition_point(|&x| x <= t);
        if k == 0 {
            return vs[0];
        }
        if k == ts.len() {
            return vs[ts.len() - 1];
        }
        let (t0, t1) = (ts[k - 1], ts[k]);
        let (v0, v1) = (vs[k - 1], vs[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            anchor_times: self.anchor_times.clone(),
            anchor_values: self.anchor_values.iter().map(|v| c * v).collect(),
        }
    }
}

/// Presmoothed sample plus the bandwidth and CV subset that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Presmoothing {
    pub bandwidth: f64,
    /// Indices (into the sample) of the curves used for CV, increasing.
    pub subset: Vec<usize>,
    pub curves: Vec<PresmoothedCurve>,
}

/// 20 geometric candidates from `2 / M̄` to `0.5`.
pub fn default_lscv_candidates(mean_observations: f64) -> Vec<f64> {
    let hi: f64 = 0.5;
    let lo = (2.0 / mean_observations).min(hi);
    let ratio = (hi / lo).ln() / (LSCV_GRID_SIZE - 1) as f64;
    let mut out: Vec<f64> = (0..LSCV_GRID_SIZE).map(|k| lo * (ratio * k as f64).exp()).collect();
    out[LSCV_GRID_SIZE - 1] = hi;
    out.dedup();
    out
}

/// Leave-one-out squared error for one bandwidth; `None` when every
/// leave-one-out window is empty.
fn loo_error(curve: &Curve, h: f64, kernel: Kernel, mean: f64) -> Option<f64> {
    let t = curve.times();
    let y = curve.values();
    let mut total = 0.0;
    let mut any = false;
    for m in 0..t.len() {
        let lo = t.partition_point(|&x| x < t[m] - h);
        let hi = t.partition_point(|&x| x <= t[m] + h);
        let (mut num, mut den) = (0.0, 0.0);
        for k in (lo..hi).filter(|&k| k != m) {
            let w = kernel.evaluate((t[k] - t[m]) / h);
            num += w * y[k];
            den += w;
        }
        let resid = if den > 0.0 {
            any = true;
            y[m] - num / den
        } else {
            y[m] - mean
        };
        total += resid * resid;
    }
    any.then_some(total)
}

/// Bandwidth minimizing the leave-one-out CV error. Ties go to the smaller
/// bandwidth; empty leave-one-out windows are charged `(Y_m - ȳ)²`.
pub fn lscv_bandwidth(curve: &Curve, candidate_h: &[f64], kernel: Kernel) -> Result<f64> {
    if curve.len() < 3 {
        return Err(FpcaError::InvalidArgument(format!(
            "leave-one-out CV needs at least 3 observations, curve {} has {}",
            curve.id(),
            curve.len()
        )));
    }
    if candidate_h.is_empty() || candidate_h.iter().any(|&h| !(h > 0.0)) {
        return Err(FpcaError::InvalidArgument("candidate bandwidths must be nonempty and positive".into()));
    }
    let mut cands = candidate_h.to_vec();
    cands.sort_by(f64::total_cmp);
    let mean = curve.values().iter().sum::<f64>() / curve.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for h in cands {
        if let Some(err) = loo_error(curve, h, kernel, mean) {
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((h, err));
            }
        }
    }
    best.map(|(h, _)| h).ok_or(FpcaError::BandwidthGridTooSmall)
}

/// Smooths one curve at its anchors with bandwidth `h`.
pub fn presmooth_curve(curve: &Curve, h: f64, kernel: Kernel) -> PresmoothedCurve {
    let mut anchors = Vec::with_capacity(curve.len() + 2);
    if curve.times()[0] > 0.0 {
        anchors.push(0.0);
    }
    anchors.extend_from_slice(curve.times());
    if curve.times()[curve.len() - 1] < 1.0 {
        anchors.push(1.0);
    }
    let mut values: Vec<Option<f64>> = anchors
        .iter()
        .map(|&t| window(curve, t, h, kernel).map(|w| w.apply(curve.values())))
        .collect();
    // Observation anchors always see themselves; only the end anchors can be
    // degenerate, and they copy their neighbour.
    let n = values.len();
    if values[0].is_none() {
        values[0] = values[1..].iter().flatten().next().copied();
    }
    if values[n - 1].is_none() {
        values[n - 1] = values[..n - 1].iter().rev().flatten().next().copied();
    }
    PresmoothedCurve {
        anchor_times: anchors,
        anchor_values: values.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
    }
}

/// Lower median.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Presmooths every curve with the median CV bandwidth of a random subset of
/// at most `subset_size` curves having at least 3 observations.
pub fn presmooth_sample(sample: &FunctionalSample, subset_size: usize, kernel: Kernel, seed: u64) -> Result<Presmoothing> {
    presmooth_sample_with_candidates(
        sample,
        subset_size,
        kernel,
        seed,
        &default_lscv_candidates(sample.mean_observations()),
    )
}

pub fn presmooth_sample_with_candidates(
    sample: &FunctionalSample,
    subset_size: usize,
    kernel: Kernel,
    seed: u64,
    candidates: &[f64],
) -> Result<Presmoothing> {
    if subset_size == 0 {
        return Err(FpcaError::InvalidArgument("subset size must be at least 1".into()));
    }
    let eligible: Vec<usize> = sample
        .curves()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.len() >= 3)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(FpcaError::InvalidData("no curve has the 3 observations needed for CV".into()));
    }
    let k = subset_size.min(eligible.len());
    let mut subset: Vec<usize> = if k == eligible.len() {
        eligible
    } else {
        let mut rng = substream(seed, TAG_SUBSET, 0);
        index::sample(&mut rng, eligible.len(), k)
            .into_iter()
            .map(|j| eligible[j])
            .collect()
    };
    subset.sort_unstable();

    let chosen: Vec<f64> = subset
        .par_iter()
        .map(|&i| lscv_bandwidth(&sample.curves()[i], candidates, kernel))
        .collect::<Result<_>>()?;
    let mut chosen = chosen;
    let bandwidth = lower_median(&mut chosen);

    let curves = sample
        .curves()
        .par_iter()
        .map(|c| presmooth_curve(c, bandwidth, kernel))
        .collect();
    Ok(Presmoothing {
        bandwidth,
        subset,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Design;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn uniform_times(m: usize) -> Vec<f64> {
        (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect()
    }

    #[test]
    fn constant_curve_picks_smallest_feasible_candidate() {
        let t = uniform_times(10); // spacing 0.1
        let c = Curve::new(0, t, vec![1.0; 10]).unwrap();
        // 0.05 and 0.08 leave every LOO window empty; 0.15 is the smallest feasible
        let h = lscv_bandwidth(&c, &[0.3, 0.05, 0.15, 0.08, 0.2], Kernel::Epanechnikov).unwrap();
        assert_eq!(h, 0.15);
        assert!(matches!(
            lscv_bandwidth(&c, &[0.01, 0.05], Kernel::Epanechnikov),
            Err(FpcaError::BandwidthGridTooSmall)
        ));
        let short = Curve::new(1, vec![0.2, 0.4], vec![1.0, 1.0]).unwrap();
        assert!(lscv_bandwidth(&short, &[0.1], Kernel::Epanechnikov).is_err());
    }

    fn noisy_line(rng: &mut ChaCha8Rng, m: usize, sd: f64) -> Curve {
        let mut t: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        let y = t.iter().map(|&x| x + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        Curve::new(0, t, y).unwrap()
    }

    #[test]
    fn noisier_curves_get_wider_bandwidths() {
        let cands = default_lscv_candidates(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut wins = 0;
        for _ in 0..50 {
            let noisy = noisy_line(&mut rng, 100, 0.5);
            let quiet = noisy_line(&mut rng, 100, 0.05);
            let hn = lscv_bandwidth(&noisy, &cands, Kernel::Epanechnikov).unwrap();
            let hq = lscv_bandwidth(&quiet, &cands, Kernel::Epanechnikov).unwrap();
            if hn > hq {
                wins += 1;
            }
        }
        assert!(wins >= 40, "wider in only {wins}/50");
    }

    #[test]
    fn pure_noise_prefers_the_wide_bandwidth() {
        let t = uniform_times(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut wide = 0;
        for _ in 0..100 {
            let y: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            let c = Curve::new(0, t.clone(), y).unwrap();
            if lscv_bandwidth(&c, &[0.01, 0.5], Kernel::Epanechnikov).unwrap() == 0.5 {
                wide += 1;
            }
        }
        assert!(wide > 50, "0.5 won {wide}/100");
    }

    #[test]
    fn default_candidates() {
        let c = default_lscv_candidates(100.0);
        assert_eq!(c.len(), 20);
        assert!((c[0] - 0.02).abs() < 1e-15);
        assert_eq!(c[19], 0.5);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn presmoothed_curve_interpolates_anchors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = noisy_line(&mut rng, 30, 0.2);
        let p = presmooth_curve(&c, 0.1, Kernel::Epanechnikov);
        assert_eq!(p.anchor_times()[0], 0.0);
        assert_eq!(*p.anchor_times().last().unwrap(), 1.0);
        for (k, &t) in c.times().iter().enumerate() {
            let nw = crate::kernel::smooth_at(&c, t, 0.1, Kernel::Epanechnikov).unwrap().value().unwrap();
            assert_eq!(p.evaluate(t), nw);
            assert_eq!(p.anchor_values()[k + 1], nw);
        }
        // affine between consecutive anchors
        let (a, b) = (p.anchor_times()[4], p.anchor_times()[5]);
        let xs: Vec<f64> = (0..=20).map(|k| a + (b - a) * k as f64 / 20.0).collect();
        for w in xs.windows(3) {
            let d2 = p.evaluate(w[0]) - 2.0 * p.evaluate(w[1]) + p.evaluate(w[2]);
            assert!(d2.abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_end_anchor_copies_neighbour() {
        let c = Curve::new(0, vec![0.4, 0.5, 0.6], vec![1.0, 2.0, 3.0]).unwrap();
        let p = presmooth_curve(&c, 0.15, Kernel::Epanechnikov);
        assert_eq!(p.anchor_values()[0], p.anchor_values()[1]);
        assert_eq!(p.anchor_values()[4], p.anchor_values()[3]);
    }

    fn random_sample(seed: u64, n: usize) -> FunctionalSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let curves = (0..n)
            .map(|i| {
                let c = noisy_line(&mut rng, 40, 0.3);
                Curve::new(i as u64, c.times().to_vec(), c.values().to_vec()).unwrap()
            })
            .collect();
        FunctionalSample::new(curves, Design::Independent).unwrap()
    }

    #[test]
    fn subset_equal_to_population_ignores_seed() {
        let s = random_sample(1, 20);
        let a = presmooth_sample(&s, 20, Kernel::Epanechnikov, 1).unwrap();
        let b = presmooth_sample(&s, 20, Kernel::Epanechnikov, 999).unwrap();
        assert_eq!(a.subset, (0..20).collect::<Vec<_>>());
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let s = random_sample(2, 60);
        let a = presmooth_sample(&s, 20, Kernel::Epanechnikov, 42).unwrap();
        let b = presmooth_sample(&s, 20, Kernel::Epanechnikov, 42).unwrap();
        assert_eq!(a.subset.len(), 20);
        assert_eq!(a, b);
    }

    #[test]
    fn identical_curves_share_their_cv_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = noisy_line(&mut rng, 50, 0.3);
        let curves = (0..8)
            .map(|i| Curve::new(i, c.times().to_vec(), c.values().to_vec()).unwrap())
            .collect();
        let s = FunctionalSample::new(curves, Design::Common).unwrap();
        let p = presmooth_sample(&s, 5, Kernel::Epanechnikov, 0).unwrap();
        let own = lscv_bandwidth(&c, &default_lscv_candidates(s.mean_observations()), Kernel::Epanechnikov).unwrap();
        assert_eq!(p.bandwidth, own);
    }

    #[test]
    fn short_curves_are_excluded_from_the_subset() {
        let mut curves: Vec<Curve> = random_sample(4, 5).curves().to_vec();
        curves.push(Curve::new(99, vec![0.3, 0.6], vec![0.0, 1.0]).unwrap());
        let s = FunctionalSample::new(curves, Design::Independent).unwrap();
        let p = presmooth_sample(&s, 10, Kernel::Epanechnikov, 0).unwrap();
        assert_eq!(p.subset, vec![0, 1, 2, 3, 4]);
        assert_eq!(p.curves.len(), 6);
    }

    #[test]
    fn lower_median_of_even_count() {
        assert_eq!(lower_median(&mut [4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&mut [5.0, 1.0, 3.0]), 3.0);
    }
}
