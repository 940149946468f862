//! Multifractional Brownian motion with time deformation.
//!
//! The covariance is
//! `C_A(s,t) = τ(s)τ(t) D(H_s,H_t) [A(s)^{H_s+H_t} + A(t)^{H_s+H_t} - |A(t)-A(s)|^{H_s+H_t}]`.
//! Without a variance target, `A(t) = A(0) + ∫₀ᵗ L^{1/H}` and `τ ≡ 1`, so the
//! local regularity is `(H_t, L_t)`. With a target `m₂`,
//! `A(t) = A(0) exp(∫₀ᵗ (L/√m₂)^{1/H})` and `τ = √m₂ A^{-H}`, which keeps the
//! same regularity and gives `Var X_t = m₂(t)`.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::data::{Curve, Design, FunctionalSample, Grid};
use crate::eigen::{eigendecompose_matrix, sign_convention, EigenResult};
use crate::error::{FpcaError, Result};
use crate::rng::{substream, TAG_CURVE};
use crate::special::ln_gamma;

/// Panels of the cumulative Simpson table behind `A(t)`.
pub const DEFORMATION_PANELS: usize = 2000;
/// Diagonal jitter levels tried in turn when a Cholesky factorization fails.
pub const JITTER_LEVELS: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Named shapes for scenario functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `sin(2πt)`.
    Sine,
    /// Hurst function rising from 0.4 to 0.7 with a dip around midday.
    PowerH,
    /// Hölder constant with morning and evening peaks.
    PowerL,
    /// Double-humped daily mean.
    PowerMean,
    /// Variance profile with morning and evening peaks.
    PowerM2,
}

impl Preset {
    pub fn evaluate(self, t: f64) -> f64 {
        let bump = |c: f64, w: f64| (-((t - c) / w).powi(2)).exp();
        match self {
            Preset::Sine => (2.0 * PI * t).sin(),
            Preset::PowerH => 0.4 + 0.3 * t - 0.1 * bump(0.5, 0.15),
            Preset::PowerL => 0.8 + 0.8 * bump(0.3, 0.08) + 1.0 * bump(0.8, 0.08),
            Preset::PowerMean => 1.0 + 1.5 * bump(0.3, 0.1) + 2.0 * bump(0.8, 0.08),
            Preset::PowerM2 => 0.5 + 1.0 * bump(0.3, 0.1) + 1.5 * bump(0.8, 0.08),
        }
    }
}

/// A real function on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant(f64),
    /// Piecewise-linear interpolation, constant beyond the end nodes.
    Table { t: Vec<f64>, v: Vec<f64> },
    Preset(Preset),
}

impl FunctionSpec {
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            FunctionSpec::Constant(c) => *c,
            FunctionSpec::Preset(p) => p.evaluate(x),
            FunctionSpec::Table { t, v } => {
                let k = t.partition_point(|&s| s <= x);
                if k == 0 {
                    v[0]
                } else if k == t.len() {
                    v[t.len() - 1]
                } else {
                    v[k - 1] + (v[k] - v[k - 1]) * (x - t[k - 1]) / (t[k] - t[k - 1])
                }
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let FunctionSpec::Table { t, v } = self {
            if t.len() < 2 || t.len() != v.len() {
                return Err(FpcaError::Config(format!("{name}: a table needs at least 2 nodes and equal lengths")));
            }
            if t.windows(2).any(|w| w[1] <= w[0]) || v.iter().any(|x| !x.is_finite()) {
                return Err(FpcaError::Config(format!("{name}: table nodes must increase and values be finite")));
            }
        }
        if let FunctionSpec::Constant(c) = self {
            if !c.is_finite() {
                return Err(FpcaError::Config(format!("{name}: constant must be finite")));
            }
        }
        Ok(())
    }

    fn check_range(&self, name: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
        self.validate(name)?;
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            let v = self.evaluate(x);
            if !ok(v) {
                return Err(FpcaError::Config(format!("{name}({x}) = {v} is not {what}")));
            }
        }
        Ok(())
    }
}

fn default_mu() -> FunctionSpec {
    FunctionSpec::Constant(0.0)
}

fn default_sigma() -> FunctionSpec {
    FunctionSpec::Constant(1.0)
}

/// Process and noise specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfbmSpec {
    #[serde(rename = "H")]
    pub h: FunctionSpec,
    #[serde(rename = "L")]
    pub l: FunctionSpec,
    #[serde(default)]
    pub m2_target: Option<FunctionSpec>,
    #[serde(default = "default_mu")]
    pub mu: FunctionSpec,
    #[serde(default)]
    pub a0: f64,
    /// Noise standard deviation shape.
    #[serde(default = "default_sigma")]
    pub sigma: FunctionSpec,
    /// Multiplier of `sigma`.
    #[serde(default)]
    pub sigma0: f64,
}

impl MfbmSpec {
    /// fBm with constant Hurst index, `L ≡ 1`, no deformation and no noise.
    pub fn fbm(hurst: f64) -> Self {
        Self {
            h: FunctionSpec::Constant(hurst),
            l: FunctionSpec::Constant(1.0),
            m2_target: None,
            mu: default_mu(),
            a0: 0.0,
            sigma: default_sigma(),
            sigma0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.h.check_range("H", |v| v > 0.0 && v < 1.0, "in (0, 1)")?;
        self.l.check_range("L", |v| v > 0.0, "positive")?;
        self.mu.validate("mu")?;
        self.sigma.check_range("sigma", |v| v >= 0.0, "nonnegative")?;
        if let Some(m2) = &self.m2_target {
            m2.check_range("m2_target", |v| v > 0.0, "positive")?;
            if !(self.a0 > 0.0) {
                return Err(FpcaError::Config("a0 must be positive when m2_target is set".into()));
            }
        }
        if !(self.a0 >= 0.0 && self.a0.is_finite()) {
            return Err(FpcaError::Config("a0 must be finite and nonnegative".into()));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(FpcaError::Config("sigma0 must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Sampling design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// Poisson(`mean_points`) points per curve (redrawn below 2), uniform on `[0, 1]`.
    Independent { n_curves: usize, mean_points: f64 },
    /// The same `points` equispaced times for every curve, ends included.
    Common { n_curves: usize, points: usize },
}

impl DesignSpec {
    pub fn n_curves(&self) -> usize {
        match self {
            DesignSpec::Independent { n_curves, .. } | DesignSpec::Common { n_curves, .. } => *n_curves,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_curves() < 2 {
            return Err(FpcaError::Config("at least 2 curves are needed".into()));
        }
        match self {
            DesignSpec::Independent { mean_points, .. } if !(*mean_points >= 2.0 && mean_points.is_finite()) => {
                Err(FpcaError::Config(format!("mean_points must be at least 2, got {mean_points}")))
            }
            DesignSpec::Common { points, .. } if *points < 2 => {
                Err(FpcaError::Config(format!("points must be at least 2, got {points}")))
            }
            _ => Ok(()),
        }
    }
}

/// `D(x,y) = √(Γ(2x+1)Γ(2y+1) sin(πx) sin(πy)) / (2 Γ(x+y+1) sin(π(x+y)/2))`.
pub fn d_factor(x: f64, y: f64) -> f64 {
    if x == y {
        return 0.5;
    }
    let ln_num = 0.5 * (ln_gamma(2.0 * x + 1.0) + ln_gamma(2.0 * y + 1.0) + (PI * x).sin().ln() + (PI * y).sin().ln());
    let ln_den = 2f64.ln() + ln_gamma(x + y + 1.0) + (0.5 * PI * (x + y)).sin().ln();
    (ln_num - ln_den).exp()
}

/// Pointwise ingredients of the covariance at one time.
#[derive(Clone, Copy, Debug)]
struct Local {
    h: f64,
    a: f64,
    tau: f64,
}

fn cov_local(p: Local, q: Local) -> f64 {
    let e = p.h + q.h;
    let bracket = if e == 1.0 {
        // a + b − |a − b|, without cancellation
        2.0 * p.a.min(q.a)
    } else {
        p.a.powf(e) + q.a.powf(e) - (q.a - p.a).abs().powf(e)
    };
    p.tau * q.tau * d_factor(p.h, q.h) * bracket
}

/// A validated specification with the deformation tabulated.
#[derive(Clone, Debug)]
pub struct Mfbm {
    spec: MfbmSpec,
    /// `∫₀^{t_k}` of the deformation integrand at `t_k = k / PANELS`.
    cumulative: Vec<f64>,
    /// The integrand, when it does not depend on time.
    constant_rate: Option<f64>,
}

impl Mfbm {
    pub fn new(spec: MfbmSpec) -> Result<Self> {
        spec.validate()?;
        let constant = |f: &FunctionSpec| matches!(f, FunctionSpec::Constant(_));
        let is_constant = constant(&spec.h) && constant(&spec.l) && spec.m2_target.as_ref().is_none_or(constant);
        let mut m = Self {
            spec,
            cumulative: Vec::new(),
            constant_rate: None,
        };
        if is_constant {
            m.constant_rate = Some(m.integrand(0.0));
        }
        let n = DEFORMATION_PANELS;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for k in 0..n {
            let a = k as f64 / n as f64;
            let b = (k + 1) as f64 / n as f64;
            cum.push(cum[k] + m.simpson(a, b));
        }
        m.cumulative = cum;
        Ok(m)
    }

    pub fn spec(&self) -> &MfbmSpec {
        &self.spec
    }

    fn integrand(&self, s: f64) -> f64 {
        let h = self.spec.h.evaluate(s);
        let l = self.spec.l.evaluate(s);
        match &self.spec.m2_target {
            Some(m2) => (l / m2.evaluate(s).sqrt()).powf(1.0 / h),
            None => l.powf(1.0 / h),
        }
    }

    fn simpson(&self, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (self.integrand(a) + 4.0 * self.integrand(0.5 * (a + b)) + self.integrand(b))
    }

    fn integral(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        if let Some(rate) = self.constant_rate {
            return rate * t;
        }
        let n = DEFORMATION_PANELS;
        let k = ((t * n as f64).floor() as usize).min(n - 1);
        let tk = k as f64 / n as f64;
        self.cumulative[k] + if t > tk { self.simpson(tk, t) } else { 0.0 }
    }

    /// Deformation `A(t)`.
    pub fn deformation(&self, t: f64) -> f64 {
        match self.spec.m2_target {
            Some(_) => self.spec.a0 * self.integral(t).exp(),
            None => self.spec.a0 + self.integral(t),
        }
    }

    /// Scaling `τ(t)`.
    pub fn tau(&self, t: f64) -> f64 {
        match &self.spec.m2_target {
            Some(m2) => m2.evaluate(t).sqrt() * self.deformation(t).powf(-self.spec.h.evaluate(t)),
            None => 1.0,
        }
    }

    fn local(&self, t: f64) -> Local {
        Local {
            h: self.spec.h.evaluate(t),
            a: self.deformation(t),
            tau: self.tau(t),
        }
    }

    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        cov_local(self.local(s), self.local(t))
    }

    /// Row-major covariance matrix at `points`.
    pub fn covariance_matrix(&self, points: &[f64]) -> Vec<f64> {
        let loc: Vec<Local> = points.iter().map(|&t| self.local(t)).collect();
        let n = points.len();
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in r..n {
                let v = cov_local(loc[r], loc[c]);
                out[r * n + c] = v;
                out[c * n + r] = v;
            }
        }
        out
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.spec.mu.evaluate(t)
    }

    /// Noise standard deviation `σ₀ σ(t)`.
    pub fn noise_sd(&self, t: f64) -> f64 {
        self.spec.sigma0 * self.spec.sigma.evaluate(t)
    }
}

/// Lower Cholesky factor of a row-major matrix, escalating the diagonal
/// jitter through [`JITTER_LEVELS`].
pub fn cholesky_with_jitter(matrix: &[f64], n: usize) -> Option<DMatrix<f64>> {
    JITTER_LEVELS.iter().find_map(|&j| {
        let m = DMatrix::from_fn(n, n, |r, c| matrix[r * n + c] + if r == c { j } else { 0.0 });
        Cholesky::new(m).map(|ch| ch.l())
    })
}

fn draw_curve(
    model: &Mfbm,
    id: u64,
    times: Vec<f64>,
    factor: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<Curve> {
    let m = times.len();
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let eps: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let values = (0..m)
        .map(|r| {
            let x: f64 = model.mean(times[r]) + (0..=r).map(|c| factor[(r, c)] * z[c]).sum::<f64>();
            x + model.noise_sd(times[r]) * eps[r]
        })
        .collect();
    Curve::new(id, times, values)
}

fn factor_or_fail(model: &Mfbm, times: &[f64], id: u64) -> Result<DMatrix<f64>> {
    cholesky_with_jitter(&model.covariance_matrix(times), times.len()).ok_or_else(|| {
        FpcaError::IllConditionedCovariance(format!(
            "curve {id}: covariance at {} points not factorizable with jitter up to 1e-8; spec {:?}",
            times.len(),
            model.spec()
        ))
    })
}

/// Draws a sample. Curve `i` uses its own random stream, so the output does
/// not depend on the number of threads.
pub fn simulate(spec: &MfbmSpec, design: &DesignSpec, seed: u64) -> Result<FunctionalSample> {
    design.validate()?;
    let model = Mfbm::new(spec.clone())?;
    let n = design.n_curves();
    let curves: Vec<Curve> = match design {
        DesignSpec::Common { points, .. } => {
            let times: Vec<f64> = (0..*points).map(|k| k as f64 / (*points - 1) as f64).collect();
            let factor = factor_or_fail(&model, &times, 0)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(seed, TAG_CURVE, i as u64);
                    draw_curve(&model, i as u64, times.clone(), &factor, &mut rng)
                })
                .collect::<Result<_>>()?
        }
        DesignSpec::Independent { mean_points, .. } => {
            let poisson = Poisson::new(*mean_points)
                .map_err(|e| FpcaError::Config(format!("invalid Poisson mean {mean_points}: {e}")))?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(seed, TAG_CURVE, i as u64);
                    let m = loop {
                        let m = poisson.sample(&mut rng) as usize;
                        if m >= 2 {
                            break m;
                        }
                    };
                    let times = loop {
                        let mut t: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                        t.sort_by(f64::total_cmp);
                        if t.windows(2).all(|w| w[1] > w[0]) {
                            break t;
                        }
                    };
                    let factor = factor_or_fail(&model, &times, i as u64)?;
                    draw_curve(&model, i as u64, times, &factor, &mut rng)
                })
                .collect::<Result<_>>()?
        }
    };
    let kind = match design {
        DesignSpec::Independent { .. } => Design::Independent,
        DesignSpec::Common { .. } => Design::Common,
    };
    FunctionalSample::new(curves, kind)
}

/// True eigen-elements: decomposition on a uniform grid of `n_fine ≥ 501`
/// points, interpolated onto `grid` by the Nyström formula
/// `ψ(t) = λ⁻¹ ∫ C(t,s) ψ(s) ds`.
pub fn truth_eigen(model: &Mfbm, grid: &Grid, j_max: usize, n_fine: usize) -> Result<EigenResult> {
    if n_fine < 501 {
        return Err(FpcaError::InvalidArgument(format!("the truth needs at least 501 points, got {n_fine}")));
    }
    let fine = Grid::uniform(n_fine, 1.0)?;
    let cov = model.covariance_matrix(fine.points());
    let e = eigendecompose_matrix(&fine, &cov, j_max, 0.0)?;
    let fine_loc: Vec<Local> = fine.points().iter().map(|&s| model.local(s)).collect();
    let w = fine.quad_weights();
    let mut funcs = Vec::with_capacity(j_max);
    for (lam, psi) in e.raw_eigenvalues.iter().zip(&e.eigenfunctions) {
        if !(*lam > 0.0) {
            return Err(FpcaError::IllConditionedCovariance(format!("true eigenvalue {lam} is not positive")));
        }
        let f: Vec<f64> = grid
            .points()
            .par_iter()
            .map(|&t| {
                let lt = model.local(t);
                fine_loc
                    .iter()
                    .zip(w)
                    .zip(psi)
                    .map(|((&ls, &wk), &p)| wk * cov_local(lt, ls) * p)
                    .sum::<f64>()
                    / lam
            })
            .collect();
        funcs.push(sign_convention(&f, grid));
    }
    Ok(EigenResult {
        grid: grid.clone(),
        eigenvalues: e.eigenvalues,
        raw_eigenvalues: e.raw_eigenvalues,
        eigenfunctions: funcs,
        h_used: vec![0.0; j_max],
    })
}
