//! Quadrature eigen-decomposition of covariance matrices on a grid.
//!
//! With `D` the diagonal of quadrature weights the integral operator is
//! discretized as `Γ D`; the symmetric form `D^{1/2} Γ D^{1/2}` is solved
//! instead and eigenvectors are mapped back by `D^{-1/2}`, which makes the
//! eigenfunctions orthonormal under the quadrature inner product.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceEstimate;
use crate::data::Grid;
use crate::error::{FpcaError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub grid: Grid,
    /// Nonincreasing, negative values reported as 0.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues as computed.
    pub raw_eigenvalues: Vec<f64>,
    /// Eigenfunctions on `grid`, one per eigenvalue.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Bandwidth of the covariance each element was read from.
    pub h_used: Vec<f64>,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Top `j_max` eigen-elements of a row-major covariance on `grid`, signed so
/// that `∫ψ ≥ 0`.
pub fn eigendecompose_matrix(grid: &Grid, matrix: &[f64], j_max: usize, h: f64) -> Result<EigenResult> {
    let g = grid.len();
    if matrix.len() != g * g {
        return Err(FpcaError::InvalidArgument(format!("matrix has {} entries for a {g}-point grid", matrix.len())));
    }
    if j_max == 0 || j_max > g {
        return Err(FpcaError::InvalidArgument(format!("number of elements must lie in 1..={g}, got {j_max}")));
    }
    let w = grid.quad_weights();
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(FpcaError::InvalidGrid("quadrature weights must be positive".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(FpcaError::IllConditionedCovariance("covariance has non-finite entries".into()));
    }
    let sq: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let a = DMatrix::from_fn(g, g, |r, c| {
        let sym = 0.5 * (matrix[r * g + c] + matrix[c * g + r]);
        sq[r] * sym * sq[c]
    });
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut raw = Vec::with_capacity(j_max);
    let mut funcs = Vec::with_capacity(j_max);
    for &k in order.iter().take(j_max) {
        raw.push(eig.eigenvalues[k]);
        let v = eig.eigenvectors.column(k);
        let psi: Vec<f64> = (0..g).map(|r| v[r] / sq[r]).collect();
        funcs.push(sign_convention(&psi, grid));
    }
    Ok(EigenResult {
        grid: grid.clone(),
        eigenvalues: raw.iter().map(|&l| l.max(0.0)).collect(),
        raw_eigenvalues: raw,
        eigenfunctions: funcs,
        h_used: vec![h; j_max],
    })
}

pub fn eigendecompose(cov: &CovarianceEstimate, j_max: usize) -> Result<EigenResult> {
    eigendecompose_matrix(&cov.grid, &cov.gamma_matrix, j_max, cov.h_used)
}

fn flip_if(psi: &[f64], flip: bool) -> Vec<f64> {
    if flip {
        psi.iter().map(|v| -v).collect()
    } else {
        psi.to_vec()
    }
}

/// Sign without a reference: `∫ψ ≥ 0`; when the integral vanishes,
/// `ψ(t₀) ≥ 0` at the first grid point.
pub fn sign_convention(psi: &[f64], grid: &Grid) -> Vec<f64> {
    let norm = grid.inner(psi, psi).sqrt();
    let integral = grid.integrate(psi);
    if integral.abs() < 1e-12 * norm.max(f64::MIN_POSITIVE) {
        flip_if(psi, psi[0] < 0.0)
    } else {
        flip_if(psi, integral < 0.0)
    }
}

/// `sign(⟨ψ, reference⟩) ψ`; a zero inner product falls back to `ψ(t₀) ≥ 0`.
pub fn sign_align(psi: &[f64], reference: &[f64], grid: &Grid) -> Vec<f64> {
    let ip = grid.inner(psi, reference);
    if ip == 0.0 {
        flip_if(psi, psi[0] < 0.0)
    } else {
        flip_if(psi, ip < 0.0)
    }
}
