use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FpcaError>;

/// Pipeline stage, used to tag errors raised inside [`crate::fit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Presmoothing,
    Regularity,
    Moments,
    NoiseVariance,
    FirstRunBounds,
    PreliminaryCovariance,
    SecondRunBounds,
    FinalCovariance,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Presmoothing => "presmoothing",
            Stage::Regularity => "regularity",
            Stage::Moments => "moments",
            Stage::NoiseVariance => "noise-variance",
            Stage::FirstRunBounds => "first-run-bounds",
            Stage::PreliminaryCovariance => "preliminary-covariance",
            Stage::SecondRunBounds => "second-run-bounds",
            Stage::FinalCovariance => "final-covariance",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum FpcaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("no curve selected at t = {t} with h = {h}")]
    NoCurvesSelected { t: f64, h: f64 },

    #[error("every candidate bandwidth leaves all leave-one-out windows empty")]
    BandwidthGridTooSmall,

    #[error("no curve has two observations within b = {b} of t = {t}")]
    EmptyWindow { t: f64, b: f64 },

    #[error("bandwidth h = {h} is infeasible: {reason}")]
    InfeasibleBandwidth { h: f64, reason: String },

    #[error("degenerate spectrum: proxy eigenvalues {j} and {k} coincide")]
    DegenerateSpectrum { j: usize, k: usize },

    #[error("design too sparse: every bandwidth in the grid is infeasible")]
    DesignTooSparse,

    #[error("covariance factorization failed after maximal jitter ({0})")]
    IllConditionedCovariance(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("[{stage}] {source}")]
    AtStage {
        stage: Stage,
        #[source]
        source: Box<FpcaError>,
    },
}

/// Broad failure classes, mapped onto process exit codes by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Infeasible,
    Numerical,
    Other,
}

impl FpcaError {
    pub fn at(self, stage: Stage) -> Self {
        FpcaError::AtStage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            FpcaError::AtStage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The innermost error, with stage tags stripped.
    pub fn root(&self) -> &FpcaError {
        match self {
            FpcaError::AtStage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self.root() {
            FpcaError::Parse { .. } | FpcaError::Config(_) | FpcaError::InvalidData(_) => {
                ErrorClass::Parse
            }
            FpcaError::InvalidArgument(_)
            | FpcaError::NoCurvesSelected { .. }
            | FpcaError::BandwidthGridTooSmall
            | FpcaError::EmptyWindow { .. }
            | FpcaError::InfeasibleBandwidth { .. }
            | FpcaError::DesignTooSparse
            | FpcaError::InvalidGrid(_) => ErrorClass::Infeasible,
            FpcaError::DegenerateSpectrum { .. } | FpcaError::IllConditionedCovariance(_) => {
                ErrorClass::Numerical
            }
            FpcaError::Io(_) | FpcaError::AtStage { .. } => ErrorClass::Other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
