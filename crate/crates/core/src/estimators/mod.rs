//! Online threshold updaters.
//!
//! Every method implements [`QuantileEstimator`] and is constructed by name
//! through an [`EstimatorRegistry`]. A step always scores the incoming
//! observation against the thresholds deployed *before* the update.

mod eg;
mod independent;
mod pg;
mod registry;
mod tracker;

pub use eg::ExponentiatedGradient;
pub use independent::IndependentTracker;
pub use pg::ProjectedGradient;
pub use registry::{EstimatorFactory, EstimatorRegistry};
pub use tracker::ProjectedTracker;

use crate::error::{Error, Result};
use crate::types::{miscoverage, CoverageGrid, GapWeights, QuantileState};

/// Initial thresholds.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// Thresholds implied by uniform gap weights: equally spaced in (0, B).
    #[default]
    UniformGaps,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Registered method name, e.g. `eg` or `pg`.
    pub method: String,
    pub eta: f64,
    /// Simplex floor; only read by the EG method.
    pub mu: Option<f64>,
    pub grid: CoverageGrid,
    pub init: Init,
    /// Optional minimum gap enforced by the PAVA projection (0 = plain set).
    pub min_gap: f64,
    /// Projected tracker only: score against the shadow iterate instead of
    /// the deployed thresholds.
    pub err_from_shadow: bool,
}

impl EstimatorConfig {
    pub fn new(method: impl Into<String>, grid: CoverageGrid) -> Self {
        let method = method.into();
        let eta = default_eta(&method, &grid);
        let mu = (method == "eg").then(|| default_mu(grid.len()));
        Self {
            method,
            eta,
            mu,
            grid,
            init: Init::UniformGaps,
            min_gap: 0.0,
            err_from_shadow: false,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub(crate) fn initial_quantiles(&self) -> Vec<f64> {
        match &self.init {
            Init::UniformGaps => self.grid.uniform_gap_quantiles(),
            Init::Explicit(q) => q.clone(),
        }
    }
}

/// Default step size by method: `0.01 * B` in threshold space, `0.0075 / B`
/// for exponentiated gradient (whose gradient scales with `B`).
pub fn default_eta(method: &str, grid: &CoverageGrid) -> f64 {
    match method {
        "eg" => 0.0075 / grid.bound(),
        _ => 0.01 * grid.bound(),
    }
}

/// Default simplex floor `1 / (50 (K + 1))`.
pub fn default_mu(k: usize) -> f64 {
    1.0 / (50.0 * (k + 1) as f64)
}

/// Method-specific internal state.
#[derive(Debug, Clone, PartialEq)]
pub enum InternalState {
    None,
    /// Un-projected iterate carried by the projected tracker.
    Shadow(Vec<f64>),
    Gaps(GapWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSnapshot {
    pub q_deployed: QuantileState,
    pub internal: InternalState,
}

/// Result of feeding one score to an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Thresholds that were deployed when the score arrived.
    pub q: Vec<f64>,
    pub err: Vec<bool>,
}

pub trait QuantileEstimator: Send {
    fn name(&self) -> &str;

    fn grid(&self) -> &CoverageGrid;

    /// Thresholds defining the current prediction sets.
    fn deployed(&self) -> &QuantileState;

    fn snapshot(&self) -> EstimatorSnapshot;

    /// Miscoverage indicators the update is driven by. Defaults to scoring
    /// against the deployed thresholds.
    fn indicators(&self, score: f64) -> Vec<bool> {
        miscoverage(score, &self.deployed().q)
    }

    /// Advance one step given the indicators for this score.
    fn update(&mut self, score: f64, err: &[bool]) -> Result<()>;

    /// Score against the deployed thresholds, then update.
    fn observe(&mut self, score: f64) -> Result<Observation> {
        if !score.is_finite() {
            return Err(Error::InvalidInput(format!(
                "score must be finite, got {score}"
            )));
        }
        let q = self.deployed().q.clone();
        let err = miscoverage(score, &q);
        let drive = self.indicators(score);
        self.update(score, &drive)?;
        Ok(Observation { q, err })
    }
}

/// `alpha_i - err_i`
pub(crate) fn level_gradient(alphas: &[f64], err: &[bool]) -> Vec<f64> {
    alphas
        .iter()
        .zip(err)
        .map(|(&a, &e)| if e { a - 1.0 } else { a })
        .collect()
}

pub(crate) fn check_eta(cfg: &EstimatorConfig, out: &mut Vec<String>) {
    if !(cfg.eta.is_finite() && cfg.eta >= 0.0) {
        out.push(format!(
            "eta must be a non-negative finite number, got {}",
            cfg.eta
        ));
    }
}

pub(crate) fn check_nested_init(cfg: &EstimatorConfig, out: &mut Vec<String>) {
    if let Init::Explicit(q) = &cfg.init {
        if q.len() != cfg.grid.len() {
            out.push(format!(
                "init has {} thresholds but the grid has {} levels",
                q.len(),
                cfg.grid.len()
            ));
        } else if !QuantileState::new(q.clone()).is_nested_within(cfg.grid.bound()) {
            out.push("init thresholds must be non-increasing within [0, B]".to_string());
        }
    }
    if !(cfg.min_gap >= 0.0) {
        out.push(format!("min_gap must be non-negative, got {}", cfg.min_gap));
    } else if cfg.min_gap * (cfg.grid.len().saturating_sub(1)) as f64 > cfg.grid.bound() {
        out.push("min_gap * (K - 1) exceeds the score bound".to_string());
    }
}

pub(crate) fn config_error(name: &str, violations: Vec<String>) -> Error {
    Error::Config(format!("{name}: {}", violations.join("; ")))
}
