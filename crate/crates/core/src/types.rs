//! Shared domain types: the level grid, threshold vectors, gap weights and
//! per-step records.
//!
//! Orientation: index 0 of every K-vector is the smallest miscoverage level
//! (the widest prediction set), so thresholds are stored non-increasing.

use crate::error::{check_len, invalid, Result};

/// Absolute tolerance for invariant checks on floating-point state.
pub const TOL: f64 = 1e-9;

/// Strictly increasing miscoverage levels `alpha_1 < ... < alpha_K` in (0, 1)
/// together with the score bound `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    alphas: Vec<f64>,
    bound: f64,
}

impl CoverageGrid {
    pub fn new(alphas: Vec<f64>, bound: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(invalid("coverage grid needs at least one level"));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(invalid(format!(
                "score bound must be positive, got {bound}"
            )));
        }
        for (i, &a) in alphas.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid(format!("alpha[{i}] = {a} is outside (0, 1)")));
            }
        }
        if let Some(i) = alphas.windows(2).position(|p| p[0] >= p[1]) {
            return Err(invalid(format!(
                "alphas must be strictly increasing (alpha[{}] = {} >= alpha[{}] = {})",
                i,
                alphas[i],
                i + 1,
                alphas[i + 1]
            )));
        }
        Ok(Self { alphas, bound })
    }

    /// Evenly spaced levels `start, start + step, ..., end` (inclusive).
    ///
    /// Levels are rounded to 12 decimals so that `0.1:0.9:0.1` yields the
    /// literal values 0.1, 0.2, ... rather than accumulated binary error.
    pub fn from_range(start: f64, end: f64, step: f64, bound: f64) -> Result<Self> {
        if !(step > 0.0) || !(end >= start) {
            return Err(invalid(format!("bad level range {start}:{end}:{step}")));
        }
        let count = ((end - start) / step).round() as usize + 1;
        let alphas = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Self::new(alphas, bound)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Same levels, different score bound.
    pub fn with_bound(&self, bound: f64) -> Result<Self> {
        Self::new(self.alphas.clone(), bound)
    }

    /// Thresholds implied by uniform gap weights: equally spaced in (0, B).
    pub fn uniform_gap_quantiles(&self) -> Vec<f64> {
        let k = self.len();
        (1..=k)
            .map(|i| self.bound * (k + 1 - i) as f64 / (k + 1) as f64)
            .collect()
    }
}

/// Current threshold vector and step index.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileState {
    pub q: Vec<f64>,
    pub t: usize,
}

impl QuantileState {
    pub fn new(q: Vec<f64>) -> Self {
        Self { q, t: 0 }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `B >= q_1 >= ... >= q_K >= 0` within [`TOL`].
    pub fn is_nested_within(&self, bound: f64) -> bool {
        is_non_increasing(&self.q, TOL) && self.q.iter().all(|&x| x >= -TOL && x <= bound + TOL)
    }
}

pub(crate) fn is_non_increasing(q: &[f64], tol: f64) -> bool {
    q.windows(2).all(|p| p[0] >= p[1] - tol)
}

/// Point on the truncated simplex: `K + 1` weights, each at least `mu`,
/// summing to one. Weight `i` is the normalized gap `(q_i - q_{i+1}) / B`
/// with `q_0 = B` and `q_{K+1} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapWeights {
    w: Vec<f64>,
    mu: f64,
}

impl GapWeights {
    pub fn new(w: Vec<f64>, mu: f64) -> Result<Self> {
        let n = w.len();
        if n < 2 {
            return Err(invalid("gap weights need at least two entries"));
        }
        if !(mu > 0.0 && mu < 1.0 / n as f64) {
            return Err(invalid(format!(
                "mu = {mu} must lie in (0, 1/{n}) for {n} gap weights"
            )));
        }
        if let Some(i) = w.iter().position(|&x| !x.is_finite() || x < mu - TOL) {
            return Err(invalid(format!(
                "w[{i}] = {} is below the floor mu = {mu}",
                w[i]
            )));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > TOL {
            return Err(invalid(format!("gap weights sum to {total}, not 1")));
        }
        Ok(Self { w, mu })
    }

    /// Uniform weights `1 / (K + 1)`.
    pub fn uniform(k: usize, mu: f64) -> Result<Self> {
        Self::new(vec![1.0 / (k + 1) as f64; k + 1], mu)
    }

    pub(crate) fn from_parts_unchecked(w: Vec<f64>, mu: f64) -> Self {
        Self { w, mu }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// One observation of an online run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub score: f64,
    /// Thresholds deployed before the score was revealed.
    pub q: Vec<f64>,
    /// `err[i]` is true when `score > q[i]`.
    pub err: Vec<bool>,
    pub q_star: Option<Vec<f64>>,
}

impl StepRecord {
    pub fn new(t: usize, score: f64, q: Vec<f64>, q_star: Option<Vec<f64>>) -> Self {
        let err = miscoverage(score, &q);
        Self {
            t,
            score,
            q,
            err,
            q_star,
        }
    }
}

/// Miscoverage indicators `1{s > q_i}`; a score exactly at the threshold is
/// covered.
pub fn miscoverage(score: f64, q: &[f64]) -> Vec<bool> {
    q.iter().map(|&qi| score > qi).collect()
}

/// `q_i = B * sum_{j >= i} w_j` for `i = 1..K`.
pub fn quantiles_from_gaps(gw: &GapWeights, grid: &CoverageGrid) -> Result<QuantileState> {
    check_len(grid.len() + 1, gw.len())?;
    let b = grid.bound();
    let mut q = vec![0.0; grid.len()];
    let mut tail = 0.0;
    for i in (1..gw.len()).rev() {
        tail += gw.w[i];
        q[i - 1] = b * tail;
    }
    Ok(QuantileState::new(q))
}

/// Inverse of [`quantiles_from_gaps`]: `w_i = (q_i - q_{i+1}) / B`.
///
/// The floor of the returned weights is `mu`; every gap must respect it.
pub fn gaps_from_quantiles(qs: &QuantileState, grid: &CoverageGrid, mu: f64) -> Result<GapWeights> {
    check_len(grid.len(), qs.len())?;
    let b = grid.bound();
    let q = &qs.q;
    if let Some(i) = q.iter().position(|&x| !(x > 0.0 && x < b)) {
        return Err(invalid(format!("q[{i}] = {} is outside (0, {b})", q[i])));
    }
    if let Some(i) = q.windows(2).position(|p| p[0] <= p[1]) {
        return Err(invalid(format!(
            "thresholds must be strictly decreasing (q[{}] = {} <= q[{}] = {})",
            i,
            q[i],
            i + 1,
            q[i + 1]
        )));
    }
    let k = q.len();
    let mut w = Vec::with_capacity(k + 1);
    w.push((b - q[0]) / b);
    for i in 0..k {
        let next = if i + 1 < k { q[i + 1] } else { 0.0 };
        w.push((q[i] - next) / b);
    }
    GapWeights::new(w, mu)
}

/// Closed interval `[lo, hi]` in score units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// Symmetric absolute-error prediction set `{y : |y - center| <= q}`.
pub fn prediction_interval(center: f64, q: f64) -> Result<Interval> {
    if !(q >= 0.0) {
        return Err(invalid(format!("threshold must be non-negative, got {q}")));
    }
    Ok(Interval {
        lo: center - q,
        hi: center + q,
    })
}

/// Clamp a score into `[0, B]`; the flag reports whether clamping happened.
pub fn clamp_score(score: f64, bound: f64) -> (f64, bool) {
    if score < 0.0 {
        (0.0, true)
    } else if score > bound {
        (bound, true)
    } else {
        (score, false)
    }
}
