use super::{
    check_eta, config_error, level_gradient, EstimatorConfig, EstimatorSnapshot, InternalState,
    QuantileEstimator,
};
use crate::error::Result;
use crate::types::{CoverageGrid, QuantileState};

/// Per-level quantile tracker: `q_i <- q_i - eta * (alpha_i - err_i)`, no
/// coupling between levels and no projection.
#[derive(Debug, Clone)]
pub struct IndependentTracker {
    grid: CoverageGrid,
    eta: f64,
    state: QuantileState,
}

impl IndependentTracker {
    pub fn validate(cfg: &EstimatorConfig) -> Vec<String> {
        let mut out = Vec::new();
        check_eta(cfg, &mut out);
        if let super::Init::Explicit(q) = &cfg.init {
            if q.len() != cfg.grid.len() {
                out.push(format!(
                    "init has {} thresholds but the grid has {} levels",
                    q.len(),
                    cfg.grid.len()
                ));
            }
        }
        out
    }

    pub fn new(cfg: &EstimatorConfig) -> Result<Self> {
        let violations = Self::validate(cfg);
        if !violations.is_empty() {
            return Err(config_error("independent", violations));
        }
        Ok(Self {
            grid: cfg.grid.clone(),
            eta: cfg.eta,
            state: QuantileState::new(cfg.initial_quantiles()),
        })
    }
}

impl QuantileEstimator for IndependentTracker {
    fn name(&self) -> &str {
        "independent"
    }

    fn grid(&self) -> &CoverageGrid {
        &self.grid
    }

    fn deployed(&self) -> &QuantileState {
        &self.state
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot {
            q_deployed: self.state.clone(),
            internal: InternalState::None,
        }
    }

    fn update(&mut self, _score: f64, err: &[bool]) -> Result<()> {
        let g = level_gradient(self.grid.alphas(), err);
        for (q, gi) in self.state.q.iter_mut().zip(g) {
            *q -= self.eta * gi;
        }
        self.state.t += 1;
        Ok(())
    }
}
