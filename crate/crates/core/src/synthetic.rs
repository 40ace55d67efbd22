//! Uniform scores around a reflected Gaussian random walk.
//!
//! The latent center `z_t` moves by `sigma * N(0, 1)` per step and is
//! reflected back into `[a, b]`; the score is uniform on
//! `[z_t - w/2, z_t + w/2]`, so every conditional quantile is known in closed
//! form.
//!
//! Randomness comes from ChaCha12 seeded with the run seed: stream 0 drives the
//! walk increments, stream 1 the uniform score draws. Gaussian variates use
//! the ziggurat sampler of `rand_distr`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::estimators::QuantileEstimator;
use crate::types::{CoverageGrid, StepRecord};

/// Score bound used for the synthetic setting.
pub const SYNTHETIC_BOUND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub a: f64,
    pub b: f64,
    pub z1: f64,
    pub sigma: f64,
    /// Width of the uniform score distribution.
    pub width: f64,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 9.5,
            z1: 5.0,
            sigma: 0.025,
            width: 1.0,
            horizon: 50_000,
            seed: 0,
        }
    }
}

impl WalkConfig {
    /// Every violated constraint; `bound` is the score bound the stream must
    /// stay inside.
    pub fn violations(&self, bound: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.a < self.b) {
            out.push(format!("a = {} must be below b = {}", self.a, self.b));
        }
        if !(self.z1 >= self.a && self.z1 <= self.b) {
            out.push(format!("z1 = {} must lie in [a, b]", self.z1));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            out.push(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.width > 0.0) {
            out.push(format!("width must be positive, got {}", self.width));
        }
        if self.a - self.width / 2.0 < 0.0 || self.b + self.width / 2.0 > bound {
            out.push(format!(
                "score support [a - width/2, b + width/2] = [{}, {}] must lie inside [0, {bound}]",
                self.a - self.width / 2.0,
                self.b + self.width / 2.0
            ));
        }
        if self.horizon == 0 {
            out.push("horizon must be at least 1".to_string());
        }
        out
    }
}

/// Reflect `z` into `[a, b]`, repeating until it lands inside.
///
/// One reflection is applied directly; larger excursions are folded through
/// the triangular wave of period `2 (b - a)`, which is the fixed point of
/// repeated reflection.
pub fn reflect(z: f64, a: f64, b: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(invalid(format!("cannot reflect non-finite value {z}")));
    }
    if !(a < b) {
        return Err(invalid(format!("reflection interval [{a}, {b}] is empty")));
    }
    Ok(reflect_unchecked(z, a, b))
}

fn reflect_unchecked(z: f64, a: f64, b: f64) -> f64 {
    if (a..=b).contains(&z) {
        return z;
    }
    let once = if z < a { 2.0 * a - z } else { 2.0 * b - z };
    if (a..=b).contains(&once) {
        return once;
    }
    let len = b - a;
    let mut y = (z - a).rem_euclid(2.0 * len);
    if y > len {
        y = 2.0 * len - y;
    }
    (a + y).clamp(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkStep {
    pub z: f64,
    pub s: f64,
}

/// Draw `horizon` steps of latent center and score. Deterministic in the seed.
pub fn generate_walk(cfg: &WalkConfig) -> Vec<WalkStep> {
    let mut walk_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut score_rng = walk_rng.clone();
    walk_rng.set_stream(0);
    score_rng.set_stream(1);

    let mut out = Vec::with_capacity(cfg.horizon);
    let mut z = cfg.z1;
    for t in 0..cfg.horizon {
        let u: f64 = score_rng.random();
        out.push(WalkStep {
            z,
            s: z + cfg.width * (u - 0.5),
        });
        if t + 1 < cfg.horizon {
            let eps: f64 = walk_rng.sample(StandardNormal);
            z = reflect_unchecked(z + cfg.sigma * eps, cfg.a, cfg.b);
        }
    }
    out
}

/// `q*_i = z + w/2 - alpha_i w`
pub fn true_quantiles(z: f64, cfg: &WalkConfig, grid: &CoverageGrid) -> Vec<f64> {
    grid.alphas()
        .iter()
        .map(|&a| z + cfg.width / 2.0 - a * cfg.width)
        .collect()
}

/// Feed a generated stream to an estimator; records carry the oracle
/// thresholds.
pub fn run_walk(
    walk: &[WalkStep],
    cfg: &WalkConfig,
    est: &mut dyn QuantileEstimator,
) -> Result<Vec<StepRecord>> {
    let grid = est.grid().clone();
    walk.iter()
        .enumerate()
        .map(|(t, st)| {
            let obs = est.observe(st.s)?;
            Ok(StepRecord {
                t,
                score: st.s,
                q: obs.q,
                err: obs.err,
                q_star: Some(true_quantiles(st.z, cfg, &grid)),
            })
        })
        .collect()
}
