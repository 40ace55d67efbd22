//! Online conformal prediction at many coverage levels at once.
//!
//! Thresholds for a grid of miscoverage levels are tracked jointly so that
//! the resulting prediction sets stay nested. Four updaters are provided
//! behind [`estimators::QuantileEstimator`]: the per-level quantile tracker,
//! the same tracker with its output projected, projected gradient (PAVA),
//! and exponentiated gradient on the quantile gaps.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod error;
pub mod estimators;
pub mod forecast;
pub mod loss;
pub mod metrics;
pub mod projection;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorRegistry, Init, QuantileEstimator};
pub use types::{CoverageGrid, GapWeights, QuantileState, StepRecord};
