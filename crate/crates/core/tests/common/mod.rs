#![allow(dead_code)]

use afpca::covariance::CovarianceEstimate;
use afpca::simulator::{simulate, DesignSpec, MfbmSpec};
use afpca::{FitConfig, FunctionalSample};

pub fn noisy_fbm(hurst: f64, sigma0: f64) -> MfbmSpec {
    MfbmSpec {
        sigma0,
        ..MfbmSpec::fbm(hurst)
    }
}

pub fn independent(n_curves: usize, mean_points: f64, seed: u64) -> FunctionalSample {
    simulate(&noisy_fbm(0.5, 0.25), &DesignSpec::Independent { n_curves, mean_points }, seed).unwrap()
}

pub fn small_config() -> FitConfig {
    FitConfig {
        n_elements: 3,
        k0: 4,
        grid_size: 51,
        h_grid_size: 25,
        ..FitConfig::default()
    }
}

/// Asserts `∬ d̂² ≤ 4 h² sup σ̂²` on the unit interval.
pub fn assert_correction_bound(cov: &CovarianceEstimate) {
    let sq: Vec<f64> = cov.correction_matrix.iter().map(|d| d * d).collect();
    let lhs = cov.grid.integrate2(&sq);
    let sup = cov.sigma.iter().map(|s| s * s).fold(0.0, f64::max);
    let rhs = 4.0 * cov.h_used * cov.h_used * sup;
    assert!(lhs <= rhs, "correction too large at h = {}: {lhs} > {rhs}", cov.h_used);
}
