//! Pinball loss and its subgradients, in threshold space and in gap space.

use crate::error::{check_len, invalid, Result};
use crate::types::{quantiles_from_gaps, CoverageGrid, GapWeights, QuantileState};

/// Per-level subgradients `alpha_i - err_i` of the joint loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGradient {
    pub g: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha = {alpha} is outside (0, 1)")))
    }
}

/// `(s - q) * (1{s > q} - alpha)`, the loss of threshold `q` as a
/// `(1 - alpha)`-quantile estimate.
pub fn pinball_loss(q: f64, s: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(pinball_unchecked(q, s, alpha))
}

#[inline]
pub(crate) fn pinball_unchecked(q: f64, s: f64, alpha: f64) -> f64 {
    let ind = if s > q { 1.0 } else { 0.0 };
    (s - q) * (ind - alpha)
}

/// Subgradient in `q`: `alpha - 1{s > q}`. At the kink the covered branch
/// (`alpha`) is returned.
pub fn pinball_subgradient(q: f64, s: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(if s > q { alpha - 1.0 } else { alpha })
}

/// `f_t(q) = sum_i rho(q_i, 1 - alpha_i)`.
pub fn joint_loss(qs: &QuantileState, s: f64, grid: &CoverageGrid) -> Result<f64> {
    check_len(grid.len(), qs.len())?;
    Ok(joint_loss_slice(&qs.q, s, grid.alphas()))
}

pub(crate) fn joint_loss_slice(q: &[f64], s: f64, alphas: &[f64]) -> f64 {
    q.iter()
        .zip(alphas)
        .map(|(&qi, &a)| pinball_unchecked(qi, s, a))
        .sum()
}

pub fn joint_gradient(qs: &QuantileState, s: f64, grid: &CoverageGrid) -> Result<LevelGradient> {
    check_len(grid.len(), qs.len())?;
    let g =
        qs.q.iter()
            .zip(grid.alphas())
            .map(|(&qi, &a)| if s > qi { a - 1.0 } else { a })
            .collect();
    Ok(LevelGradient { g })
}

/// Gradient of `g_t(w) = f_t(J w)` with respect to the `K + 1` gap weights.
///
/// Weight `w_i` (i >= 1) enters every threshold `q_j` with `j <= i`, so
/// `(J^T grad f)_i = B * sum_{j=1}^{i} (alpha_j - err_j)`. Weight `w_0` enters
/// no threshold and its entry is zero.
pub fn gap_gradient(lg: &LevelGradient, grid: &CoverageGrid) -> Result<Vec<f64>> {
    check_len(grid.len(), lg.g.len())?;
    let b = grid.bound();
    let mut out = Vec::with_capacity(lg.g.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for &gi in &lg.g {
        acc += gi;
        out.push(b * acc);
    }
    Ok(out)
}

/// `g_t(w) = f_t(J w)`.
pub fn gap_loss(gw: &GapWeights, s: f64, grid: &CoverageGrid) -> Result<f64> {
    let qs = quantiles_from_gaps(gw, grid)?;
    joint_loss(&qs, s, grid)
}
