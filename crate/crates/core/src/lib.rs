//! Adaptive functional principal components analysis.
//!
//! Curves are observed at discrete, noisy time points. The covariance
//! operator is estimated by first smoothing every curve with a
//! Nadaraya-Watson smoother and then averaging over the curves that have
//! data near each pair of points. The bandwidth is chosen separately for
//! every eigenvalue and eigenfunction by minimizing explicit plug-in risk
//! bounds, which depend on the local Hölder regularity of the sample paths,
//! the second moments of the process and the noise level.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`data`]: curves, samples and quadrature grids
//! - [`kernel`]: kernel weights, curve selection and effective counts
//! - [`presmooth`]: leave-one-out CV pilot smoothing
//! - [`regularity`]: local Hölder exponent and constant
//! - [`moments`]: second moments and the nearest-pair noise estimator
//! - [`bounds`]: risk bounds and bandwidth selection
//! - [`covariance`]: corrected covariance estimator
//! - [`eigen`]: quadrature eigen-decomposition
//! - [`pipeline`]: the two-run adaptive fit
//! - [`simulator`]: multifractional Brownian motion with time deformation
//! - [`io`], [`metrics`], [`bench`], [`cli`]: file formats, error measures,
//!   Monte Carlo harness and command-line front end

pub mod bench;
pub mod bounds;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod eigen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod moments;
pub mod pipeline;
pub mod presmooth;
pub mod regularity;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod spline;

pub use data::{Curve, Design, FunctionalSample, Grid};
pub use error::{FpcaError, Result, Stage};
pub use kernel::Kernel;
pub use pipeline::{fit, fit_fixed_bandwidth, FitConfig, FitResult};
