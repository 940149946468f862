//! Containers for discretely observed functional data.

use serde::{Deserialize, Serialize};

use crate::error::{FpcaError, Result};

/// One curve: observation times `T_1 < … < T_M` in `[0, 1]` and the noisy
/// values `Y_m` observed there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    id: u64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(id: u64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(FpcaError::InvalidData(format!("curve {id} has no observations")));
        }
        if times.len() != values.len() {
            return Err(FpcaError::InvalidData(format!(
                "curve {id}: {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(FpcaError::InvalidData(format!(
                "curve {id}: time {t} outside [0, 1]"
            )));
        }
        if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FpcaError::InvalidData(format!(
                "curve {id}: times not strictly increasing at index {}",
                w + 1
            )));
        }
        if let Some(y) = values.iter().find(|y| !y.is_finite()) {
            return Err(FpcaError::InvalidData(format!("curve {id}: non-finite value {y}")));
        }
        Ok(Self { id, times, values })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of observations `M_i`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same curve with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            id: self.id,
            times: self.times.clone(),
            values: self.values.iter().map(|y| c * y).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Random observation times, drawn separately for each curve.
    Independent,
    /// All curves observed at the same times.
    Common,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    curves: Vec<Curve>,
    design: Design,
    domain_length: f64,
}

impl FunctionalSample {
    pub fn new(curves: Vec<Curve>, design: Design) -> Result<Self> {
        Self::with_domain_length(curves, design, 1.0)
    }

    pub fn with_domain_length(curves: Vec<Curve>, design: Design, domain_length: f64) -> Result<Self> {
        if curves.len() < 2 {
            return Err(FpcaError::InvalidData(format!(
                "a sample needs at least 2 curves, got {}",
                curves.len()
            )));
        }
        if !(domain_length > 0.0) {
            return Err(FpcaError::InvalidArgument(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        if design == Design::Common {
            let first = curves[0].times();
            if let Some(c) = curves.iter().find(|c| c.times() != first) {
                return Err(FpcaError::InvalidData(format!(
                    "common design requires identical times; curve {} differs",
                    c.id()
                )));
            }
        }
        Ok(Self {
            curves,
            design,
            domain_length,
        })
    }

    /// Builds a sample, declaring the design common iff every curve shares
    /// the same observation times.
    pub fn infer_design(curves: Vec<Curve>) -> Result<Self> {
        let common = curves
            .first()
            .map(|c0| curves.iter().all(|c| c.times() == c0.times()))
            .unwrap_or(false);
        let design = if common { Design::Common } else { Design::Independent };
        Self::new(curves, design)
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    /// Number of curves `N`.
    pub fn n_curves(&self) -> usize {
        self.curves.len()
    }

    /// `M̄`, the average number of observations per curve; the plug-in for
    /// the expected number of points per curve.
    pub fn mean_observations(&self) -> f64 {
        let total: usize = self.curves.iter().map(Curve::len).sum();
        total as f64 / self.curves.len() as f64
    }

    pub fn map_curves(&self, f: impl Fn(&Curve) -> Curve) -> Result<Self> {
        Self::with_domain_length(self.curves.iter().map(f).collect(), self.design, self.domain_length)
    }
}

/// Free-function form of [`FunctionalSample::mean_observations`].
pub fn mean_observations(sample: &FunctionalSample) -> f64 {
    sample.mean_observations()
}

/// Evaluation grid with trapezoid quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl Grid {
    pub fn uniform(n_points: usize, domain_length: f64) -> Result<Self> {
        make_uniform_grid(n_points, domain_length)
    }

    /// Grid on arbitrary increasing points, with trapezoid weights.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(FpcaError::InvalidGrid("a grid needs at least 2 points".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FpcaError::InvalidGrid("grid points must be strictly increasing".into()));
        }
        let n = points.len();
        let mut w = vec![0.0; n];
        for k in 0..n - 1 {
            let half = 0.5 * (points[k + 1] - points[k]);
            w[k] += half;
            w[k + 1] += half;
        }
        Ok(Self {
            points,
            quad_weights: w,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `∫ f` by quadrature, for `f` sampled on the grid.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.quad_weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Quadrature inner product `⟨f, g⟩`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        self.quad_weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// `∬ F(s,t) ds dt` for a row-major `len × len` matrix.
    pub fn integrate2(&self, f: &[f64]) -> f64 {
        let n = self.len();
        debug_assert_eq!(f.len(), n * n);
        let mut total = 0.0;
        for (s, ws) in self.quad_weights.iter().enumerate() {
            let row = &f[s * n..(s + 1) * n];
            let inner: f64 = self.quad_weights.iter().zip(row).map(|(wt, v)| wt * v).sum();
            total += ws * inner;
        }
        total
    }
}

/// Equally spaced points on `[0, domain_length]` with trapezoid weights.
pub fn make_uniform_grid(n_points: usize, domain_length: f64) -> Result<Grid> {
    if n_points < 2 {
        return Err(FpcaError::InvalidArgument(format!(
            "a uniform grid needs at least 2 points, got {n_points}"
        )));
    }
    if !(domain_length > 0.0) {
        return Err(FpcaError::InvalidArgument(format!(
            "domain length must be positive, got {domain_length}"
        )));
    }
    let step = domain_length / (n_points - 1) as f64;
    let points: Vec<f64> = (0..n_points)
        .map(|k| if k == n_points - 1 { domain_length } else { k as f64 * step })
        .collect();
    let quad_weights = (0..n_points)
        .map(|k| if k == 0 || k == n_points - 1 { 0.5 * step } else { step })
        .collect();
    Ok(Grid {
        points,
        quad_weights,
    })
}
