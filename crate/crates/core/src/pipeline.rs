//! The two-run adaptive fit.
//!
//! The first run uses constant eigenfunction proxies, which yields one
//! bandwidth `ĥ*` for every element and, from the covariance at `ĥ*`,
//! preliminary eigen-elements. The second run feeds those back into the
//! bounds to choose a bandwidth per eigenvalue and per eigenfunction; the
//! final estimates come from covariances at the inflated bandwidths.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{select_bandwidths, BandwidthGrid, BandwidthSelection, Proxy, RiskBoundInputs, DEFAULT_GRID_MAX, DEFAULT_GRID_SIZE};
use crate::covariance::{estimate_covariance, DEFAULT_ZETA};
use crate::data::{FunctionalSample, Grid};
use crate::eigen::{eigendecompose, EigenResult};
use crate::error::{FpcaError, Result, Stage, StageExt};
use crate::kernel::Kernel;
use crate::moments::{default_b, estimate_m2_c2, sigma2_on_grid, MomentEstimates};
use crate::presmooth::presmooth_sample;
use crate::regularity::{estimate_regularity_with, RegularityEstimate, RegularityOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Number of eigen-elements estimated (`J`).
    pub n_elements: usize,
    /// Elements entering the eigenfunction bounds (`K0`).
    pub k0: usize,
    pub gamma: f64,
    pub zeta: f64,
    pub subset_size: usize,
    pub grid_size: usize,
    /// Number of candidate bandwidths.
    pub h_grid_size: usize,
    /// Smallest candidate; `None` uses `ln N / (M̄ √N)`.
    pub h_grid_min: Option<f64>,
    pub h_grid_max: f64,
    pub kernel: Kernel,
    pub seed: u64,
    /// Noise bandwidth of the first run; `None` uses the design default.
    pub b: Option<f64>,
    pub h_clip: (f64, f64),
    pub l_min: f64,
    pub n_knots: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let reg = RegularityOptions::default();
        Self {
            n_elements: 9,
            k0: 9,
            gamma: reg.gamma,
            zeta: DEFAULT_ZETA,
            subset_size: 20,
            grid_size: 101,
            h_grid_size: DEFAULT_GRID_SIZE,
            h_grid_min: None,
            h_grid_max: DEFAULT_GRID_MAX,
            kernel: Kernel::default(),
            seed: 0,
            b: None,
            h_clip: reg.h_clip,
            l_min: reg.l_min,
            n_knots: reg.n_knots,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k0 < 2 {
            return Err(FpcaError::InvalidArgument(format!("k0 must be at least 2, got {}", self.k0)));
        }
        if self.n_elements == 0 || self.n_elements > self.k0 {
            return Err(FpcaError::InvalidArgument(format!(
                "n_elements must lie in 1..=k0 ({}), got {}",
                self.k0, self.n_elements
            )));
        }
        if self.grid_size < 2 || self.k0 > self.grid_size {
            return Err(FpcaError::InvalidArgument(format!(
                "grid_size ({}) must be at least 2 and at least k0",
                self.grid_size
            )));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(FpcaError::InvalidArgument(format!("zeta must lie in (0, 1), got {}", self.zeta)));
        }
        if self.subset_size == 0 {
            return Err(FpcaError::InvalidArgument("subset_size must be at least 1".into()));
        }
        Ok(())
    }

    fn regularity_options(&self) -> RegularityOptions {
        RegularityOptions {
            gamma: self.gamma,
            h_clip: self.h_clip,
            l_min: self.l_min,
            n_knots: self.n_knots,
        }
    }

    pub fn bandwidth_grid(&self, sample: &FunctionalSample) -> Result<BandwidthGrid> {
        match self.h_grid_min {
            Some(min) => BandwidthGrid::geometric(min, self.h_grid_max, self.h_grid_size),
            None => BandwidthGrid::for_sample(sample, self.h_grid_max, self.h_grid_size),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub presmoothing: f64,
    pub regularity: f64,
    pub moments: f64,
    pub noise_variance: f64,
    pub first_run_bounds: f64,
    pub preliminary_covariance: f64,
    pub second_run_bounds: f64,
    pub final_covariance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub config: FitConfig,
    pub presmoothing_bandwidth: f64,
    pub presmoothing_subset: Vec<usize>,
    pub regularity: RegularityEstimate,
    pub moments: MomentEstimates,
    pub first_run: BandwidthSelection,
    /// Common first-run bandwidth `ĥ*`.
    pub h_star: f64,
    /// Decomposition of the covariance at `ĥ*` (`K0` elements).
    pub preliminary: EigenResult,
    pub second_run: BandwidthSelection,
    /// Final estimates: eigenvalue `j` from the covariance at
    /// `lambda_bandwidths[j]`, eigenfunction `j` from `psi_bandwidths[j]`.
    pub eigenvalues: Vec<f64>,
    pub raw_eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    pub lambda_bandwidths: Vec<f64>,
    pub psi_bandwidths: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub psi_b: Vec<f64>,
    /// Whether the final eigenvalues are nonincreasing in `j`.
    pub eigenvalues_monotone: bool,
    pub timings: StageTimings,
}

impl FitResult {
    pub fn grid(&self) -> &Grid {
        &self.moments.grid
    }

    /// The result with timings zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: StageTimings::default(),
            ..self.clone()
        }
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

/// Corrected covariances and their decompositions for distinct bandwidths,
/// keyed by the bit pattern of `h`.
fn decompose_all(
    sample: &FunctionalSample,
    grid: &Grid,
    bandwidths: &[f64],
    j_max: usize,
    config: &FitConfig,
) -> Result<BTreeMap<u64, (f64, EigenResult)>> {
    let mut unique: Vec<f64> = bandwidths.to_vec();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let results: Vec<(u64, (f64, EigenResult))> = unique
        .par_iter()
        .map(|&h| {
            let cov = estimate_covariance(sample, grid, h, config.zeta, config.kernel)?;
            let e = eigendecompose(&cov, j_max)?;
            Ok((h.to_bits(), (cov.b_used, e)))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().collect())
}

/// Runs the full adaptive procedure.
pub fn fit(sample: &FunctionalSample, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let mut tm = StageTimings::default();
    let grid = Grid::uniform(config.grid_size, 1.0)?;
    let j_max = config.n_elements;

    let pres = timed(&mut tm.presmoothing, || {
        presmooth_sample(sample, config.subset_size, config.kernel, config.seed)
    })
    .stage(Stage::Presmoothing)?;

    let regularity = timed(&mut tm.regularity, || {
        estimate_regularity_with(&pres.curves, sample.mean_observations(), &grid, &config.regularity_options())
    })
    .stage(Stage::Regularity)?;

    let (m2, c2) = timed(&mut tm.moments, || estimate_m2_c2(&pres.curves, &grid)).stage(Stage::Moments)?;

    let (sigma2, b_used) = timed(&mut tm.noise_variance, || {
        sigma2_on_grid(sample, grid.points(), config.b.unwrap_or_else(|| default_b(sample)))
    })
    .stage(Stage::NoiseVariance)?;
    let moments = MomentEstimates {
        grid: grid.clone(),
        m2,
        c2,
        sigma2,
        b_used,
    };

    let h_grid = config.bandwidth_grid(sample).stage(Stage::FirstRunBounds)?;
    let first_run = timed(&mut tm.first_run_bounds, || {
        let inputs = RiskBoundInputs {
            moments: &moments,
            regularity: &regularity,
            proxy: Proxy::Constant,
            k0: config.k0,
            kernel: config.kernel,
        };
        select_bandwidths(&inputs, sample, &h_grid, 1)
    })
    .stage(Stage::FirstRunBounds)?;
    let h_star = first_run.lambda_raw[0];

    let preliminary = timed(&mut tm.preliminary_covariance, || {
        estimate_covariance(sample, &grid, h_star, config.zeta, config.kernel)
            .and_then(|cov| eigendecompose(&cov, config.k0))
    })
    .stage(Stage::PreliminaryCovariance)?;

    let second_run = timed(&mut tm.second_run_bounds, || {
        let inputs = RiskBoundInputs {
            moments: &moments,
            regularity: &regularity,
            proxy: Proxy::Eigen {
                values: preliminary.raw_eigenvalues.clone(),
                functions: preliminary.eigenfunctions.clone(),
            },
            k0: config.k0,
            kernel: config.kernel,
        };
        select_bandwidths(&inputs, sample, &h_grid, j_max)
    })
    .stage(Stage::SecondRunBounds)?;

    let lambda_bandwidths = second_run.lambda_inflated.clone();
    let psi_bandwidths = second_run.psi_inflated.clone();
    let all: Vec<f64> = lambda_bandwidths.iter().chain(&psi_bandwidths).copied().collect();
    let cache = timed(&mut tm.final_covariance, || decompose_all(sample, &grid, &all, j_max, config))
        .stage(Stage::FinalCovariance)?;

    let mut eigenvalues = Vec::with_capacity(j_max);
    let mut raw_eigenvalues = Vec::with_capacity(j_max);
    let mut eigenfunctions = Vec::with_capacity(j_max);
    let mut lambda_b = Vec::with_capacity(j_max);
    let mut psi_b = Vec::with_capacity(j_max);
    for j in 0..j_max {
        let (b, e) = &cache[&lambda_bandwidths[j].to_bits()];
        eigenvalues.push(e.eigenvalues[j]);
        raw_eigenvalues.push(e.raw_eigenvalues[j]);
        lambda_b.push(*b);
        let (b, e) = &cache[&psi_bandwidths[j].to_bits()];
        eigenfunctions.push(e.eigenfunctions[j].clone());
        psi_b.push(*b);
    }
    let eigenvalues_monotone = eigenvalues.windows(2).all(|w| w[0] >= w[1]);

    Ok(FitResult {
        config: config.clone(),
        presmoothing_bandwidth: pres.bandwidth,
        presmoothing_subset: pres.subset,
        regularity,
        moments,
        first_run,
        h_star,
        preliminary,
        second_run,
        eigenvalues,
        raw_eigenvalues,
        eigenfunctions,
        lambda_bandwidths,
        psi_bandwidths,
        lambda_b,
        psi_b,
        eigenvalues_monotone,
        timings: tm,
    })
}

/// Baseline: one corrected covariance at a fixed bandwidth, decomposed.
pub fn fit_fixed_bandwidth(sample: &FunctionalSample, grid: &Grid, h_fixed: f64, config: &FitConfig) -> Result<EigenResult> {
    config.validate()?;
    let cov = estimate_covariance(sample, grid, h_fixed, config.zeta, config.kernel)?;
    eigendecompose(&cov, config.n_elements)
}
