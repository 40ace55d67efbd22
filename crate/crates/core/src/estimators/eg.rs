use super::{
    check_eta, config_error, level_gradient, EstimatorConfig, EstimatorSnapshot, Init,
    InternalState, QuantileEstimator,
};
use crate::error::Result;
use crate::loss::{gap_gradient, LevelGradient};
use crate::projection::{kl_project_truncated_simplex, WEIGHT_FLOOR};
use crate::types::{
    gaps_from_quantiles, quantiles_from_gaps, CoverageGrid, GapWeights, QuantileState,
};

/// Exponentiated gradient on the gap weights, KL-projected onto the
/// truncated simplex. Every consecutive gap stays at least `B * mu`.
#[derive(Debug, Clone)]
pub struct ExponentiatedGradient {
    grid: CoverageGrid,
    eta: f64,
    gaps: GapWeights,
    deployed: QuantileState,
}

impl ExponentiatedGradient {
    pub fn validate(cfg: &EstimatorConfig) -> Vec<String> {
        let mut out = Vec::new();
        check_eta(cfg, &mut out);
        let n = cfg.grid.len() + 1;
        match cfg.mu {
            None => out.push("eg requires mu".to_string()),
            Some(mu) if !(mu > 0.0 && mu < 1.0 / n as f64) => out.push(format!(
                "mu must be < 1/(K+1) = {} and > 0, got {mu}",
                1.0 / n as f64
            )),
            Some(mu) => {
                if let Init::Explicit(q) = &cfg.init {
                    let qs = QuantileState::new(q.clone());
                    if let Err(e) = gaps_from_quantiles(&qs, &cfg.grid, mu) {
                        out.push(format!("init is not representable as gap weights: {e}"));
                    }
                }
            }
        }
        out
    }

    pub fn new(cfg: &EstimatorConfig) -> Result<Self> {
        let violations = Self::validate(cfg);
        if !violations.is_empty() {
            return Err(config_error("eg", violations));
        }
        let mu = cfg.mu.expect("validated");
        let gaps = match &cfg.init {
            Init::UniformGaps => GapWeights::uniform(cfg.grid.len(), mu)?,
            Init::Explicit(q) => {
                gaps_from_quantiles(&QuantileState::new(q.clone()), &cfg.grid, mu)?
            }
        };
        let deployed = quantiles_from_gaps(&gaps, &cfg.grid)?;
        Ok(Self {
            grid: cfg.grid.clone(),
            eta: cfg.eta,
            gaps,
            deployed,
        })
    }

    pub fn gaps(&self) -> &GapWeights {
        &self.gaps
    }

    /// Multiplicative step with a gap-space gradient, then KL projection.
    pub(crate) fn step_with_gradient(&mut self, grad: &[f64]) -> Result<()> {
        let exps: Vec<f64> = grad.iter().map(|&g| -self.eta * g).collect();
        let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w_tilde: Vec<f64> = self
            .gaps
            .weights()
            .iter()
            .zip(&exps)
            .map(|(&w, &x)| (w * (x - top).exp()).max(WEIGHT_FLOOR))
            .collect();
        let projected = kl_project_truncated_simplex(&w_tilde, self.gaps.mu())?;
        self.gaps = GapWeights::from_parts_unchecked(projected.w, self.gaps.mu());
        let t = self.deployed.t;
        self.deployed = quantiles_from_gaps(&self.gaps, &self.grid)?;
        self.deployed.t = t + 1;
        Ok(())
    }
}

impl QuantileEstimator for ExponentiatedGradient {
    fn name(&self) -> &str {
        "eg"
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
            internal: InternalState::Gaps(self.gaps.clone()),
        }
    }

    fn update(&mut self, _score: f64, err: &[bool]) -> Result<()> {
        let lg = LevelGradient {
            g: level_gradient(self.grid.alphas(), err),
        };
        let grad = gap_gradient(&lg, &self.grid)?;
        self.step_with_gradient(&grad)
    }
}
