use super::{
    check_eta, check_nested_init, config_error, level_gradient, EstimatorConfig, EstimatorSnapshot,
    InternalState, QuantileEstimator,
};
use crate::error::Result;
use crate::projection::pava_project_decreasing_with_gap;
use crate::types::{miscoverage, CoverageGrid, QuantileState};

/// Quantile tracker with lazy projection: the un-projected shadow iterate
/// takes the independent update and persists across steps; only the deployed
/// thresholds are projected onto the nested set.
#[derive(Debug, Clone)]
pub struct ProjectedTracker {
    grid: CoverageGrid,
    eta: f64,
    min_gap: f64,
    err_from_shadow: bool,
    shadow: Vec<f64>,
    deployed: QuantileState,
}

impl ProjectedTracker {
    pub fn validate(cfg: &EstimatorConfig) -> Vec<String> {
        let mut out = Vec::new();
        check_eta(cfg, &mut out);
        check_nested_init(cfg, &mut out);
        out
    }

    pub fn new(cfg: &EstimatorConfig) -> Result<Self> {
        let violations = Self::validate(cfg);
        if !violations.is_empty() {
            return Err(config_error("projected_tracker", violations));
        }
        let shadow = cfg.initial_quantiles();
        let q = pava_project_decreasing_with_gap(&shadow, cfg.grid.bound(), cfg.min_gap);
        Ok(Self {
            grid: cfg.grid.clone(),
            eta: cfg.eta,
            min_gap: cfg.min_gap,
            err_from_shadow: cfg.err_from_shadow,
            shadow,
            deployed: QuantileState::new(q),
        })
    }

    pub fn shadow(&self) -> &[f64] {
        &self.shadow
    }

    #[cfg(test)]
    pub(crate) fn with_shadow(cfg: &EstimatorConfig, shadow: Vec<f64>) -> Self {
        let mut t = Self::new(cfg).unwrap();
        t.deployed.q = pava_project_decreasing_with_gap(&shadow, cfg.grid.bound(), cfg.min_gap);
        t.shadow = shadow;
        t
    }
}

impl QuantileEstimator for ProjectedTracker {
    fn name(&self) -> &str {
        "projected_tracker"
    }

    fn grid(&self) -> &CoverageGrid {
        &self.grid
    }

    fn deployed(&self) -> &QuantileState {
        &self.deployed
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot {
            q_deployed: self.deployed.clone(),
            internal: InternalState::Shadow(self.shadow.clone()),
        }
    }

    fn indicators(&self, score: f64) -> Vec<bool> {
        if self.err_from_shadow {
            miscoverage(score, &self.shadow)
        } else {
            miscoverage(score, &self.deployed.q)
        }
    }

    fn update(&mut self, _score: f64, err: &[bool]) -> Result<()> {
        let g = level_gradient(self.grid.alphas(), err);
        for (q, gi) in self.shadow.iter_mut().zip(g) {
            *q -= self.eta * gi;
        }
        self.deployed.q =
            pava_project_decreasing_with_gap(&self.shadow, self.grid.bound(), self.min_gap);
        self.deployed.t += 1;
        Ok(())
    }
}
