//! Least-squares cubic B-splines on `[0, 1]` with equally spaced knots.

use nalgebra::{DMatrix, DVector};

use crate::error::{FpcaError, Result};

const DEGREE: usize = 3;

/// Fitted cubic spline in B-spline form.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    coefficients: Vec<f64>,
}

/// Clamped knot vector with `n_interior` equally spaced interior knots.
fn clamped_knots(n_interior: usize) -> Vec<f64> {
    let mut k = vec![0.0; DEGREE + 1];
    k.extend((1..=n_interior).map(|j| j as f64 / (n_interior + 1) as f64));
    k.extend([1.0; DEGREE + 1]);
    k
}

/// Values of all basis functions at `x` (Cox-de Boor).
fn basis(knots: &[f64], x: f64) -> Vec<f64> {
    let n_basis = knots.len() - DEGREE - 1;
    let x = x.clamp(knots[0], knots[knots.len() - 1]);
    // span index with knots[span] <= x < knots[span + 1]; the right end
    // belongs to the last nonempty span
    let mut span = knots.partition_point(|&k| k <= x) - 1;
    span = span.min(n_basis - 1);
    let mut n = vec![0.0; DEGREE + 1];
    n[0] = 1.0;
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    for j in 1..=DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    let mut out = vec![0.0; n_basis];
    for (r, v) in n.into_iter().enumerate() {
        out[span - DEGREE + r] = v;
    }
    out
}

impl CubicSpline {
    /// Least-squares fit of `(x, y)` with `n_interior` interior knots, solved
    /// through the SVD so that empty knot spans do not break the fit.
    pub fn fit(x: &[f64], y: &[f64], n_interior: usize) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(FpcaError::InvalidArgument("spline data must be nonempty and of equal length".into()));
        }
        let knots = clamped_knots(n_interior);
        let n_basis = knots.len() - DEGREE - 1;
        let mut design = DMatrix::zeros(x.len(), n_basis);
        for (r, &xi) in x.iter().enumerate() {
            for (c, v) in basis(&knots, xi).into_iter().enumerate() {
                design[(r, c)] = v;
            }
        }
        let rhs = DVector::from_column_slice(y);
        let svd = design.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1.0);
        let coef = svd
            .solve(&rhs, tol)
            .map_err(|e| FpcaError::IllConditionedCovariance(format!("spline solve failed: {e}")))?;
        Ok(Self {
            knots,
            coefficients: coef.iter().copied().collect(),
        })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        basis(&self.knots, x)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }
}
