use super::{
    check_eta, check_nested_init, config_error, level_gradient, EstimatorConfig, EstimatorSnapshot,
    InternalState, QuantileEstimator,
};
use crate::error::Result;
use crate::projection::pava_project_decreasing_with_gap;
use crate::types::{CoverageGrid, QuantileState};

/// Projected gradient: step from the projected iterate, then project onto
/// `{B >= q_1 >= ... >= q_K >= 0}` with PAVA.
#[derive(Debug, Clone)]
pub struct ProjectedGradient {
    grid: CoverageGrid,
    eta: f64,
    min_gap: f64,
    state: QuantileState,
}

impl ProjectedGradient {
    pub fn validate(cfg: &EstimatorConfig) -> Vec<String> {
        let mut out = Vec::new();
        check_eta(cfg, &mut out);
        check_nested_init(cfg, &mut out);
        out
    }

    pub fn new(cfg: &EstimatorConfig) -> Result<Self> {
        let violations = Self::validate(cfg);
        if !violations.is_empty() {
            return Err(config_error("pg", violations));
        }
        let q = pava_project_decreasing_with_gap(
            &cfg.initial_quantiles(),
            cfg.grid.bound(),
            cfg.min_gap,
        );
        Ok(Self {
            grid: cfg.grid.clone(),
            eta: cfg.eta,
            min_gap: cfg.min_gap,
            state: QuantileState::new(q),
        })
    }
}

impl QuantileEstimator for ProjectedGradient {
    fn name(&self) -> &str {
        "pg"
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
        let stepped: Vec<f64> = self
            .state
            .q
            .iter()
            .zip(g)
            .map(|(&q, gi)| q - self.eta * gi)
            .collect();
        self.state.q = pava_project_decreasing_with_gap(&stepped, self.grid.bound(), self.min_gap);
        self.state.t += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{IndependentTracker, Init};
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_init_is_uniform_gaps() {
        let g = CoverageGrid::new(vec![0.1, 0.2, 0.3], 1.0).unwrap();
        let pg = ProjectedGradient::new(&EstimatorConfig::new("pg", g)).unwrap();
        assert_eq!(pg.deployed().q, vec![0.75, 0.5, 0.25]);
    }

    #[test]
    fn explicit_init_passthrough_and_rejection() {
        let g = CoverageGrid::new(vec![0.1, 0.2], 1.0).unwrap();
        let ok = EstimatorConfig::new("pg", g.clone()).with_init(Init::Explicit(vec![0.9, 0.1]));
        assert_eq!(
            ProjectedGradient::new(&ok).unwrap().deployed().q,
            vec![0.9, 0.1]
        );
        let bad = EstimatorConfig::new("pg", g.clone()).with_init(Init::Explicit(vec![0.1, 0.9]));
        assert!(ProjectedGradient::new(&bad).is_err());
        let out = EstimatorConfig::new("pg", g).with_init(Init::Explicit(vec![1.5, 0.1]));
        assert!(ProjectedGradient::new(&out).is_err());
    }

    #[test]
    fn crossing_step_is_pooled() {
        // q = (0.50, 0.49), s in between: err = (0, 1)
        // stepped = (0.49, 0.57) -> pooled (0.53, 0.53)
        let g = CoverageGrid::new(vec![0.1, 0.2], 1.0).unwrap();
        let cfg = EstimatorConfig::new("pg", g)
            .with_eta(0.1)
            .with_init(Init::Explicit(vec![0.50, 0.49]));
        let mut pg = ProjectedGradient::new(&cfg).unwrap();
        let obs = pg.observe(0.495).unwrap();
        assert_eq!(obs.err, vec![false, true]);
        assert_abs_diff_eq!(pg.deployed().q[0], 0.53, epsilon = 1e-12);
        assert_abs_diff_eq!(pg.deployed().q[1], 0.53, epsilon = 1e-12);
    }

    #[test]
    fn order_preserving_step_needs_no_projection() {
        let g = CoverageGrid::new(vec![0.1, 0.2], 1.0).unwrap();
        let cfg = EstimatorConfig::new("pg", g)
            .with_eta(0.01)
            .with_init(Init::Explicit(vec![0.8, 0.2]));
        let mut pg = ProjectedGradient::new(&cfg).unwrap();
        pg.observe(0.5).unwrap();
        assert_abs_diff_eq!(pg.deployed().q[0], 0.799, epsilon = 1e-15);
        assert_abs_diff_eq!(pg.deployed().q[1], 0.208, epsilon = 1e-15);
    }

    #[test]
    fn single_level_matches_tracker_inside_box() {
        let g = CoverageGrid::new(vec![0.2], 1.0).unwrap();
        let init = Init::Explicit(vec![0.5]);
        let mut pg = ProjectedGradient::new(
            &EstimatorConfig::new("pg", g.clone())
                .with_eta(0.05)
                .with_init(init.clone()),
        )
        .unwrap();
        let mut ind = IndependentTracker::new(
            &EstimatorConfig::new("independent", g)
                .with_eta(0.05)
                .with_init(init),
        )
        .unwrap();
        for s in [0.95, 0.99, 0.1, 0.97, 0.0, 0.3, 0.6, 0.52] {
            assert_eq!(pg.observe(s).unwrap(), ind.observe(s).unwrap());
            assert_eq!(pg.deployed().q, ind.deployed().q);
        }
    }

    #[test]
    fn single_level_is_clipped_to_box() {
        let g = CoverageGrid::new(vec![0.2], 1.0).unwrap();
        let cfg = EstimatorConfig::new("pg", g)
            .with_eta(0.3)
            .with_init(Init::Explicit(vec![0.9]));
        let mut pg = ProjectedGradient::new(&cfg).unwrap();
        pg.observe(5.0).unwrap();
        assert_eq!(pg.deployed().q, vec![1.0]);
        for _ in 0..20 {
            pg.observe(0.0).unwrap();
        }
        assert_eq!(pg.deployed().q, vec![0.0]);
    }
}
