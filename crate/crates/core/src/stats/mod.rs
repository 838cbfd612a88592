//! Averaged coefficients, sample distances and the two ensemble studies.

pub mod averaging;
mod convergence;
mod distances;
mod reduction;
mod stationary;

pub use averaging::{
    averaged_diffusion, averaged_drift, phase_average, radial_diffusion_pre_average, radial_drift_pre_average,
};
pub use convergence::{convergence_study, ConvergenceConfig, ConvergenceReport, ConvergenceRow, MAX_STOPPED_FRACTION};
pub use distances::{ks_distance, median, quantile, wasserstein1};
pub use reduction::{
    log_log_slope, path_errors, reduction_diagnostics, PathErrors, ReductionConfig, ReductionReport, ReductionRow,
    QUADRATIC_TOL,
};
pub use stationary::{stationary_check, stationary_w1, StationaryConfig, StationaryReport};

use thiserror::Error;

use crate::polyfield::PolyError;
use crate::sde::SdeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("drift has z-involving quadratic terms (max {0:.3e}); normalize the system first")]
    NonTrivialQuadratic(f64),
    #[error("reduced cubic is not -z|z|^2; the limit comparison does not apply")]
    NotUnitCubic,
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}
