//! Plug-in risk bounds and bandwidth selection.
//!
//! For every candidate `h` the eigenvalue and eigenfunction risks are
//! bounded by a squared-bias term `B1` driven by the local regularity, a
//! noise variance term `B2` and a penalty `B3` for curves dropped from the
//! covariance average. Integrals use the trapezoid weights of the working
//! grid in both coordinates. A bandwidth is infeasible, and its bound `+∞`,
//! when some grid pair is seen by fewer than 2 curves or when the pooled
//! observation windows leave part of the grid range uncovered.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalSample, Grid};
use crate::error::{FpcaError, Result};
use crate::kernel::{GridSmoothing, Kernel};
use crate::moments::MomentEstimates;
use crate::regularity::RegularityEstimate;

/// Number of points of the default bandwidth grid.
pub const DEFAULT_GRID_SIZE: usize = 61;
/// Largest bandwidth of the default grid.
pub const DEFAULT_GRID_MAX: f64 = 0.1;
/// Upper clamp applied after inflation.
pub const INFLATION_CAP: f64 = 0.5;

/// Geometric grid of candidate bandwidths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    values: Vec<f64>,
}

impl BandwidthGrid {
    pub fn geometric(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0) || !(max > min) || count < 2 {
            return Err(FpcaError::InvalidArgument(format!(
                "bandwidth grid needs 0 < min < max and at least 2 points, got [{min}, {max}] × {count}"
            )));
        }
        let step = (max / min).ln() / (count - 1) as f64;
        let mut values: Vec<f64> = (0..count).map(|k| min * (step * k as f64).exp()).collect();
        values[count - 1] = max;
        Ok(Self { values })
    }

    /// `count` points from `ln N / (M̄ √N)` to `max`.
    pub fn for_sample(sample: &FunctionalSample, max: f64, count: usize) -> Result<Self> {
        let n = sample.n_curves() as f64;
        let min = n.ln() / (sample.mean_observations() * n.sqrt());
        if min >= max {
            return Err(FpcaError::BandwidthGridTooSmall);
        }
        Self::geometric(min, max, count)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Eigen-element proxies entering the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proxy {
    /// Every `ψ_k ≡ 1` and every gap weight `1/(λ_j - λ_k)²` set to 1.
    Constant,
    /// Preliminary eigenvalues (nonincreasing) and eigenfunctions on the grid.
    Eigen { values: Vec<f64>, functions: Vec<Vec<f64>> },
}

/// Everything the bounds need besides the data.
#[derive(Clone, Debug)]
pub struct RiskBoundInputs<'a> {
    pub moments: &'a MomentEstimates,
    pub regularity: &'a RegularityEstimate,
    pub proxy: Proxy,
    pub k0: usize,
    pub kernel: Kernel,
}

/// The three terms of one bound. All `+∞` at an infeasible bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    #[serde(with = "crate::io::infinite_as_null")]
    pub b1: f64,
    #[serde(with = "crate::io::infinite_as_null")]
    pub b2: f64,
    #[serde(with = "crate::io::infinite_as_null")]
    pub b3: f64,
}

impl BoundTerms {
    pub const INFEASIBLE: Self = Self {
        b1: f64::INFINITY,
        b2: f64::INFINITY,
        b3: f64::INFINITY,
    };

    pub fn total(&self) -> f64 {
        self.b1 + self.b2 + self.b3
    }

    pub fn is_feasible(&self) -> bool {
        self.total().is_finite()
    }
}

/// Minimizers, inflated bandwidths and full traces (`[j][h]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub h_grid: Vec<f64>,
    pub lambda_raw: Vec<f64>,
    pub psi_raw: Vec<f64>,
    pub lambda_inflated: Vec<f64>,
    pub psi_inflated: Vec<f64>,
    pub lambda_traces: Vec<Vec<BoundTerms>>,
    pub psi_traces: Vec<Vec<BoundTerms>>,
}

/// `h ln(1/h)`, clamped to `[lower, 0.5]`.
pub fn inflate(h: f64, lower: f64) -> f64 {
    (h * (1.0 / h).ln()).clamp(lower, INFLATION_CAP)
}

/// Whether every point of `[lo, hi]` lies strictly within `h` of some
/// pooled observation time.
pub fn covers_range(pooled_times: &[f64], lo: f64, hi: f64, h: f64) -> bool {
    let (Some(&first), Some(&last)) = (pooled_times.first(), pooled_times.last()) else {
        return false;
    };
    first - lo < h && hi - last < h && pooled_times.windows(2).all(|w| w[1] - w[0] < 2.0 * h)
}

/// All observation times of the sample, sorted.
pub fn pooled_times(sample: &FunctionalSample) -> Vec<f64> {
    let mut t: Vec<f64> = sample.curves().iter().flat_map(|c| c.times().iter().copied()).collect();
    t.sort_by(f64::total_cmp);
    t
}

/// Quantities shared by all elements at one bandwidth.
struct AtBandwidth {
    /// `σ²(s) m₂(t) / 𝒩_Γ(t|s)` plus its transpose, row-major.
    variance: Vec<f64>,
    /// `c₂(s,t) (1/𝒲_N(s,t) - 1/N)`, row-major.
    penalty: Vec<f64>,
    /// `L_t² h^{2H_t} ∫|u|^{2H_t} K`.
    bias: Vec<f64>,
}

fn bilinear(grid: &Grid, u: &[f64], m: &[f64], v: &[f64]) -> f64 {
    let g = grid.len();
    let w = grid.quad_weights();
    let mut total = 0.0;
    for s in 0..g {
        let row = &m[s * g..(s + 1) * g];
        let inner: f64 = (0..g).map(|t| row[t] * w[t] * v[t]).sum();
        total += w[s] * u[s] * inner;
    }
    total
}

impl<'a> RiskBoundInputs<'a> {
    fn grid(&self) -> &Grid {
        &self.moments.grid
    }

    fn validate(&self, j: usize) -> Result<()> {
        let g = self.grid().len();
        if self.regularity.h.len() != g || self.moments.m2.len() != g || self.moments.c2.len() != g * g {
            return Err(FpcaError::InvalidArgument("moments and regularity must share the grid".into()));
        }
        if self.k0 < 2 {
            return Err(FpcaError::InvalidArgument(format!("K0 must be at least 2, got {}", self.k0)));
        }
        if j == 0 || j > self.k0 {
            return Err(FpcaError::InvalidArgument(format!("element {j} outside 1..={}", self.k0)));
        }
        if let Proxy::Eigen { values, functions } = &self.proxy {
            if values.len() < self.k0 || functions.len() < self.k0 || functions.iter().any(|f| f.len() != g) {
                return Err(FpcaError::InvalidArgument(format!("proxies must provide {} elements on the grid", self.k0)));
            }
        }
        Ok(())
    }

    /// `ψ_k²` on the grid (1-based `k`).
    fn squared_proxy(&self, k: usize) -> Vec<f64> {
        match &self.proxy {
            Proxy::Constant => vec![1.0; self.grid().len()],
            Proxy::Eigen { functions, .. } => functions[k - 1].iter().map(|v| v * v).collect(),
        }
    }

    fn gap_weight(&self, j: usize, k: usize) -> Result<f64> {
        match &self.proxy {
            Proxy::Constant => Ok(1.0),
            Proxy::Eigen { values, .. } => {
                let gap = values[j - 1] - values[k - 1];
                if gap == 0.0 {
                    Err(FpcaError::DegenerateSpectrum { j, k })
                } else {
                    Ok(1.0 / (gap * gap))
                }
            }
        }
    }

    fn at_bandwidth(&self, sample: &FunctionalSample, pooled: &[f64], h: f64) -> Result<Option<AtBandwidth>> {
        let grid = self.grid();
        let pts = grid.points();
        let g = pts.len();
        if !covers_range(pooled, pts[0], pts[g - 1], h) {
            return Ok(None);
        }
        let smoothing = GridSmoothing::new(sample, pts, h, self.kernel)?;
        let (counts, inv_ng) = smoothing.pair_counts_and_inv_n_gamma();
        if counts.iter().any(|&c| c < 2.0) {
            return Ok(None);
        }
        let n = sample.n_curves() as f64;
        let sigma2 = &self.moments.sigma2;
        let m2 = &self.moments.m2;
        let mut variance = vec![0.0; g * g];
        for s in 0..g {
            for t in 0..g {
                variance[s * g + t] = sigma2[s] * m2[t] * inv_ng[s * g + t] + sigma2[t] * m2[s] * inv_ng[t * g + s];
            }
        }
        let penalty = self
            .moments
            .c2
            .iter()
            .zip(&counts)
            .map(|(c, w)| c * (1.0 / w - 1.0 / n))
            .collect();
        let bias = self
            .regularity
            .h
            .iter()
            .zip(&self.regularity.l)
            .map(|(&hh, &l)| l * l * h.powf(2.0 * hh) * self.kernel.moment(2.0 * hh))
            .collect();
        Ok(Some(AtBandwidth {
            variance,
            penalty,
            bias,
        }))
    }

    fn lambda_terms(&self, at: &AtBandwidth, psi2: &[f64]) -> BoundTerms {
        let grid = self.grid();
        let a = grid.inner(&self.moments.m2, psi2);
        let b = grid.inner(&at.bias, psi2);
        BoundTerms {
            b1: 4.0 * a * b,
            b2: 2.0 * bilinear(grid, psi2, &at.variance, psi2),
            b3: bilinear(grid, psi2, &at.penalty, psi2),
        }
    }

    fn psi_terms(&self, at: &AtBandwidth, j: usize, squared: &[Vec<f64>]) -> Result<BoundTerms> {
        let grid = self.grid();
        let pj = &squared[j - 1];
        let aj = grid.inner(&self.moments.m2, pj);
        let bj = grid.inner(&at.bias, pj);
        let mut out = BoundTerms { b1: 0.0, b2: 0.0, b3: 0.0 };
        for k in (1..=self.k0).filter(|&k| k != j) {
            let wk = self.gap_weight(j, k)?;
            let pk = &squared[k - 1];
            let ak = grid.inner(&self.moments.m2, pk);
            let bk = grid.inner(&at.bias, pk);
            out.b1 += 2.0 * wk * (aj * bk + ak * bj);
            out.b2 += 2.0 * wk * bilinear(grid, pk, &at.variance, pj);
            out.b3 += wk * bilinear(grid, pk, &at.penalty, pj);
        }
        Ok(out)
    }
}

/// `(B1, B2, B3)` of the eigenvalue bound for element `j` (1-based).
pub fn eigenvalue_bound(inputs: &RiskBoundInputs, sample: &FunctionalSample, j: usize, h: f64) -> Result<BoundTerms> {
    inputs.validate(j)?;
    let pooled = pooled_times(sample);
    Ok(match inputs.at_bandwidth(sample, &pooled, h)? {
        Some(at) => inputs.lambda_terms(&at, &inputs.squared_proxy(j)),
        None => BoundTerms::INFEASIBLE,
    })
}

/// `(B1, B2, B3)` of the eigenfunction bound for element `j` (1-based).
pub fn eigenfunction_bound(inputs: &RiskBoundInputs, sample: &FunctionalSample, j: usize, h: f64) -> Result<BoundTerms> {
    inputs.validate(j)?;
    let squared: Vec<Vec<f64>> = (1..=inputs.k0).map(|k| inputs.squared_proxy(k)).collect();
    for k in (1..=inputs.k0).filter(|&k| k != j) {
        inputs.gap_weight(j, k)?;
    }
    let pooled = pooled_times(sample);
    match inputs.at_bandwidth(sample, &pooled, h)? {
        Some(at) => inputs.psi_terms(&at, j, &squared),
        None => Ok(BoundTerms::INFEASIBLE),
    }
}

/// Grid index of the smallest total; ties go to the smaller bandwidth.
fn argmin(trace: &[BoundTerms]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in trace.iter().enumerate() {
        let v = t.total();
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluates both bounds for elements `1..=n_elements` over the grid and
/// picks and inflates the minimizers.
pub fn select_bandwidths(
    inputs: &RiskBoundInputs,
    sample: &FunctionalSample,
    grid: &BandwidthGrid,
    n_elements: usize,
) -> Result<BandwidthSelection> {
    if n_elements == 0 || n_elements > inputs.k0 {
        return Err(FpcaError::InvalidArgument(format!(
            "number of elements must lie in 1..={}, got {n_elements}",
            inputs.k0
        )));
    }
    inputs.validate(n_elements)?;
    for j in 1..=n_elements {
        for k in (1..=inputs.k0).filter(|&k| k != j) {
            inputs.gap_weight(j, k)?;
        }
    }
    let squared: Vec<Vec<f64>> = (1..=inputs.k0).map(|k| inputs.squared_proxy(k)).collect();
    let pooled = pooled_times(sample);
    type Row = (Vec<BoundTerms>, Vec<BoundTerms>);
    let per_h: Vec<Row> = grid
        .values()
        .par_iter()
        .map(|&h| -> Result<Row> {
            Ok(match inputs.at_bandwidth(sample, &pooled, h)? {
                Some(at) => {
                    let lam = (1..=n_elements).map(|j| inputs.lambda_terms(&at, &squared[j - 1])).collect();
                    let psi = (1..=n_elements)
                        .map(|j| inputs.psi_terms(&at, j, &squared))
                        .collect::<Result<_>>()?;
                    (lam, psi)
                }
                None => (vec![BoundTerms::INFEASIBLE; n_elements], vec![BoundTerms::INFEASIBLE; n_elements]),
            })
        })
        .collect::<Result<_>>()?;
    let lambda_traces: Vec<Vec<BoundTerms>> = (0..n_elements).map(|j| per_h.iter().map(|r| r.0[j]).collect()).collect();
    let psi_traces: Vec<Vec<BoundTerms>> = (0..n_elements).map(|j| per_h.iter().map(|r| r.1[j]).collect()).collect();
    let pick = |traces: &[Vec<BoundTerms>]| -> Result<Vec<f64>> {
        traces
            .iter()
            .map(|tr| argmin(tr).map(|i| grid.values()[i]).ok_or(FpcaError::DesignTooSparse))
            .collect()
    };
    let lambda_raw = pick(&lambda_traces)?;
    let psi_raw = pick(&psi_traces)?;
    let lambda_inflated = lambda_raw.iter().map(|&h| inflate(h, grid.min())).collect();
    let psi_inflated = psi_raw.iter().map(|&h| inflate(h, grid.min())).collect();
    Ok(BandwidthSelection {
        h_grid: grid.values().to_vec(),
        lambda_raw,
        psi_raw,
        lambda_inflated,
        psi_inflated,
        lambda_traces,
        psi_traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Curve, Design};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn common_sample(n: usize, m: usize, seed: u64) -> FunctionalSample {
        let t: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let curves = (0..n)
            .map(|i| Curve::new(i as u64, t.clone(), (0..m).map(|_| rng.random::<f64>()).collect()).unwrap())
            .collect();
        FunctionalSample::new(curves, Design::Common).unwrap()
    }

    fn random_sample(n: usize, m: usize, seed: u64) -> FunctionalSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let curves = (0..n)
            .map(|i| {
                let mut t: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                t.sort_by(f64::total_cmp);
                t.dedup();
                let y = t.iter().map(|_| rng.random::<f64>()).collect();
                Curve::new(i as u64, t, y).unwrap()
            })
            .collect();
        FunctionalSample::new(curves, Design::Independent).unwrap()
    }

    struct Fixture {
        moments: MomentEstimates,
        regularity: RegularityEstimate,
    }

    fn fixture(g: usize, h: impl Fn(f64) -> f64, l: impl Fn(f64) -> f64, m2: impl Fn(f64) -> f64, sigma2: impl Fn(f64) -> f64, c2: impl Fn(f64, f64) -> f64) -> Fixture {
        let grid = Grid::uniform(g, 1.0).unwrap();
        let p = grid.points().to_vec();
        let moments = MomentEstimates {
            grid: grid.clone(),
            m2: p.iter().map(|&t| m2(t)).collect(),
            c2: p.iter().flat_map(|&s| p.iter().map(move |&t| (s, t))).map(|(s, t)| c2(s, t)).collect(),
            sigma2: p.iter().map(|&t| sigma2(t)).collect(),
            b_used: 0.1,
        };
        let regularity = RegularityEstimate {
            grid,
            h: p.iter().map(|&t| h(t)).collect(),
            l: p.iter().map(|&t| l(t)).collect(),
            delta_star: 0.05,
            gamma: 0.75,
            param_points: vec![],
            h_param: vec![],
            l_param: vec![],
        };
        Fixture { moments, regularity }
    }

    fn standard_fixture(g: usize) -> Fixture {
        fixture(
            g,
            |t| 0.3 + 0.4 * t,
            |t| 1.0 + t,
            |t| 0.5 + t,
            |t| 0.1 + 0.2 * t * t,
            |s, t| 0.2 + s * t,
        )
    }

    fn inputs<'a>(f: &'a Fixture, proxy: Proxy, k0: usize) -> RiskBoundInputs<'a> {
        RiskBoundInputs {
            moments: &f.moments,
            regularity: &f.regularity,
            proxy,
            k0,
            kernel: Kernel::Epanechnikov,
        }
    }

    /// Normalized weights of one curve at `t`, straight from the kernel.
    fn weights(c: &Curve, t: f64, h: f64) -> Option<Vec<f64>> {
        let k: Vec<f64> = c.times().iter().map(|&x| Kernel::Epanechnikov.evaluate((x - t) / h)).collect();
        let s: f64 = k.iter().sum();
        (s > 0.0).then(|| k.iter().map(|v| v / s).collect())
    }

    /// `(𝒲_N(s,t), 1/𝒩_Γ(t|s))` by direct summation.
    fn counts(sample: &FunctionalSample, s: f64, t: f64, h: f64) -> (f64, f64) {
        let mut w = 0.0;
        let mut num = 0.0;
        for c in sample.curves() {
            if let (Some(_), Some(wt)) = (weights(c, s, h), weights(c, t, h)) {
                w += 1.0;
                num += wt.iter().cloned().fold(0.0, f64::max);
            }
        }
        (w, num / (w * w))
    }

    /// The bounds written out term by term with explicit double sums.
    fn oracle(f: &Fixture, sample: &FunctionalSample, h: f64, psi: &[Vec<f64>], lambda: &[f64], j: usize) -> (BoundTerms, BoundTerms) {
        let grid = &f.moments.grid;
        let p = grid.points();
        let w = grid.quad_weights();
        let g = p.len();
        let n = sample.n_curves() as f64;
        let m2 = &f.moments.m2;
        let sg = &f.moments.sigma2;
        let kappa = |t: usize| {
            let hh = f.regularity.h[t];
            f.regularity.l[t].powi(2) * h.powf(2.0 * hh) * 3.0 / ((2.0 * hh + 1.0) * (2.0 * hh + 3.0))
        };
        let mut lam = BoundTerms { b1: 0.0, b2: 0.0, b3: 0.0 };
        let mut eig = BoundTerms { b1: 0.0, b2: 0.0, b3: 0.0 };
        let pj = &psi[j - 1];
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        for s in 0..g {
            i1 += w[s] * m2[s] * pj[s] * pj[s];
            i2 += w[s] * kappa(s) * pj[s] * pj[s];
        }
        lam.b1 = 4.0 * i1 * i2;
        for s in 0..g {
            for t in 0..g {
                let (wst, inv_t_s) = counts(sample, p[s], p[t], h);
                let (_, inv_s_t) = counts(sample, p[t], p[s], h);
                let c2 = f.moments.c2[s * g + t];
                let q = w[s] * w[t];
                lam.b2 += q * 2.0 * (sg[t] * m2[s] * inv_s_t + sg[s] * m2[t] * inv_t_s) * pj[t].powi(2) * pj[s].powi(2);
                lam.b3 += q * c2 * (1.0 / wst - 1.0 / n) * pj[t].powi(2) * pj[s].powi(2);
                for k in (1..=psi.len()).filter(|&k| k != j) {
                    let pk = &psi[k - 1];
                    let gap2 = (lambda[j - 1] - lambda[k - 1]).powi(2);
                    let base = q * pj[t].powi(2) * pk[s].powi(2) / gap2;
                    eig.b1 += 2.0 * base * (m2[t] * kappa(s) + m2[s] * kappa(t));
                    eig.b2 += 2.0 * base * (sg[s] * m2[t] * inv_t_s + sg[t] * m2[s] * inv_s_t);
                    eig.b3 += base * c2 * (1.0 / wst - 1.0 / n);
                }
            }
        }
        (lam, eig)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn bounds_match_explicit_double_sums() {
        let f = standard_fixture(11);
        let sample = random_sample(30, 25, 7);
        let p = f.moments.grid.points().to_vec();
        let psi = vec![
            p.iter().map(|&t| 1.0 + 0.5 * t).collect::<Vec<_>>(),
            p.iter().map(|&t| (3.0 * t).sin() + 0.2).collect(),
            p.iter().map(|&t| t * t - 0.3).collect(),
        ];
        let lambda = vec![2.0, 0.7, 0.1];
        let proxy = Proxy::Eigen {
            values: lambda.clone(),
            functions: psi.clone(),
        };
        let inp = inputs(&f, proxy, 3);
        for &h in &[0.08, 0.15] {
            for j in 1..=3 {
                let (lo, eo) = oracle(&f, &sample, h, &psi, &lambda, j);
                let lb = eigenvalue_bound(&inp, &sample, j, h).unwrap();
                let eb = eigenfunction_bound(&inp, &sample, j, h).unwrap();
                for (a, b) in [(lb.b1, lo.b1), (lb.b2, lo.b2), (lb.b3, lo.b3), (eb.b1, eo.b1), (eb.b2, eo.b2), (eb.b3, eo.b3)] {
                    assert!(rel(a, b) < 1e-10 || (a - b).abs() < 1e-14, "h={h} j={j}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn two_element_expansion() {
        // K0 = 2, ψ ≡ 1, gap g
        let f = standard_fixture(11);
        let sample = common_sample(20, 41, 1);
        let g = 0.5;
        let proxy = Proxy::Eigen {
            values: vec![1.0, 1.0 - g],
            functions: vec![vec![1.0; 11]; 2],
        };
        let inp = inputs(&f, proxy, 2);
        let lb = eigenvalue_bound(&inp, &sample, 1, 0.1).unwrap();
        let eb = eigenfunction_bound(&inp, &sample, 1, 0.1).unwrap();
        // B1ψ = 2/g² · 2ab = B1λ/g²; B2ψ = 2/g² · ∬V = B2λ/g²; B3ψ = B3λ/g²
        assert!(rel(eb.b1, lb.b1 / (g * g)) < 1e-12);
        assert!(rel(eb.b2, lb.b2 / (g * g)) < 1e-12);
        assert!(rel(eb.b3, lb.b3 / (g * g)) < 1e-12);
    }

    #[test]
    fn bias_term_hand_value_and_scaling() {
        let f = fixture(101, |_| 0.5, |_| 1.0, |_| 1.0, |_| 0.0, |_, _| 0.0);
        let sample = common_sample(10, 201, 2);
        let inp = inputs(&f, Proxy::Constant, 2);
        for &h in &[0.02, 0.05, 0.1] {
            let b = eigenvalue_bound(&inp, &sample, 1, h).unwrap();
            assert!(rel(b.b1, 1.5 * h) < 1e-12, "{} vs {}", b.b1, 1.5 * h);
        }
        let b = eigenvalue_bound(&inp, &sample, 1, 0.08).unwrap().b1;
        let half = eigenvalue_bound(&inp, &sample, 1, 0.04).unwrap().b1;
        assert!((b / half - 2.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_vanishes_when_every_curve_is_selected() {
        let f = standard_fixture(21);
        let sample = common_sample(15, 101, 3);
        let inp = inputs(&f, Proxy::Constant, 3);
        let b = eigenvalue_bound(&inp, &sample, 1, 0.05).unwrap();
        assert_eq!(b.b3, 0.0);
        assert!(b.b2 > 0.0);
    }

    #[test]
    fn common_design_forbids_bandwidths_below_half_spacing() {
        let f = standard_fixture(101);
        let sample = common_sample(10, 50, 4);
        let delta = 1.0 / 49.0;
        let inp = inputs(&f, Proxy::Constant, 2);
        for k in 1..20 {
            let h = 0.5 * delta * k as f64 / 20.0;
            assert!(!eigenvalue_bound(&inp, &sample, 1, h).unwrap().is_feasible(), "h = {h}");
        }
        assert!(eigenvalue_bound(&inp, &sample, 1, 0.6 * delta).unwrap().is_feasible());
        let grid = BandwidthGrid::geometric(0.001, 0.1, 61).unwrap();
        let sel = select_bandwidths(&inp, &sample, &grid, 2).unwrap();
        assert!(sel.lambda_raw.iter().chain(&sel.psi_raw).all(|&h| h >= delta / 2.0));
    }

    #[test]
    fn first_run_argmins_coincide_exactly() {
        let f = standard_fixture(41);
        for seed in 0..3 {
            let sample = random_sample(60, 30, seed);
            let inp = inputs(&f, Proxy::Constant, 4);
            let grid = BandwidthGrid::for_sample(&sample, 0.1, 25).unwrap();
            let sel = select_bandwidths(&inp, &sample, &grid, 4).unwrap();
            for j in 0..4 {
                assert_eq!(sel.lambda_raw[j], sel.psi_raw[j]);
                assert_eq!(sel.lambda_raw[j], sel.lambda_raw[0]);
                let a = argmin(&sel.lambda_traces[j]);
                let b = argmin(&sel.psi_traces[j]);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn doubling_gaps_quarters_terms() {
        let f = standard_fixture(21);
        let sample = random_sample(40, 30, 9);
        let p = f.moments.grid.points().to_vec();
        let psi = vec![
            vec![1.0; 21],
            p.iter().map(|&t| (2.0 * t - 1.0) * 1.7).collect::<Vec<_>>(),
            p.iter().map(|&t| (6.0 * t).cos()).collect(),
        ];
        let one = Proxy::Eigen {
            values: vec![3.0, 1.0, 0.5],
            functions: psi.clone(),
        };
        let two = Proxy::Eigen {
            values: vec![6.0, 2.0, 1.0],
            functions: psi,
        };
        let grid = BandwidthGrid::for_sample(&sample, 0.1, 21).unwrap();
        let a = select_bandwidths(&inputs(&f, one, 3), &sample, &grid, 3).unwrap();
        let b = select_bandwidths(&inputs(&f, two, 3), &sample, &grid, 3).unwrap();
        assert_eq!(a.psi_raw, b.psi_raw);
        for j in 0..3 {
            for (x, y) in a.psi_traces[j].iter().zip(&b.psi_traces[j]) {
                if x.is_feasible() {
                    assert!(rel(y.total(), x.total() / 4.0) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn equal_proxy_eigenvalues_are_degenerate() {
        let f = standard_fixture(11);
        let sample = random_sample(20, 20, 1);
        let proxy = Proxy::Eigen {
            values: vec![1.0, 1.0],
            functions: vec![vec![1.0; 11]; 2],
        };
        let inp = inputs(&f, proxy, 2);
        assert!(matches!(
            eigenfunction_bound(&inp, &sample, 1, 0.1),
            Err(FpcaError::DegenerateSpectrum { j: 1, k: 2 })
        ));
    }

    #[test]
    fn trace_shapes() {
        let f = standard_fixture(31);
        for seed in 0..4 {
            let sample = random_sample(50, 20 + 10 * seed as usize, seed);
            let inp = inputs(&f, Proxy::Constant, 2);
            let grid = BandwidthGrid::for_sample(&sample, 0.1, 31).unwrap();
            let sel = select_bandwidths(&inp, &sample, &grid, 1).unwrap();
            let tr = &sel.lambda_traces[0];
            let first = tr.iter().position(BoundTerms::is_feasible).unwrap();
            assert!(tr[first..].iter().all(BoundTerms::is_feasible), "feasible set is not an up-set");
            for w in tr[first..].windows(2) {
                assert!(w[1].b1 > w[0].b1);
                assert!(w[1].b3 <= w[0].b3 + 1e-15);
                assert!(w[0].b2 >= 0.0 && w[0].b3 >= 0.0);
            }
        }
    }

    #[test]
    fn inflation() {
        assert!((inflate(0.05, 0.001) - 0.05 * 20f64.ln()).abs() < 1e-15);
        assert!((inflate(0.05, 0.001) - 0.1498).abs() < 1e-4);
        assert_eq!(inflate(1e-9, 0.001), 0.001);
        assert_eq!(inflate(0.2, 0.001), 0.2 * 5f64.ln());
        assert_eq!(inflate(0.3, 0.001), 0.3 * (1.0f64 / 0.3).ln());
        for &h in &[0.001, 0.01, 0.1, 0.3] {
            assert!(inflate(h, 0.0) > h);
        }
    }

    #[test]
    fn grid_endpoints() {
        let sample = random_sample(100, 50, 2);
        let g = BandwidthGrid::for_sample(&sample, 0.1, 61).unwrap();
        let m = sample.mean_observations();
        assert!(rel(g.min(), 100f64.ln() / (m * 10.0)) < 1e-14);
        assert_eq!(g.values()[60], 0.1);
        assert!(g.values().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn coverage() {
        assert!(covers_range(&[0.05, 0.15, 0.25], 0.0, 0.3, 0.051));
        assert!(!covers_range(&[0.05, 0.15, 0.25], 0.0, 0.3, 0.05));
        assert!(!covers_range(&[], 0.0, 1.0, 1.0));
    }
}
