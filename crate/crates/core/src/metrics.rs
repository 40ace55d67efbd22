//! Evaluation of completed runs: calibration, oracle tracking error, set
//! size, nestedness, and the empirical dynamic-regret bounds.

use crate::error::{check_len, Error, Result};
use crate::loss::joint_loss_slice;
use crate::types::{CoverageGrid, StepRecord};

/// A gap below this counts as a nestedness violation.
pub const VIOLATION_TOL: f64 = 1e-12;

/// Mean of `xs[max(0, t + 1 - window) ..= t]` for every `t`; shorter
/// prefixes average over what is available.
pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (t, &x) in xs.iter().enumerate() {
        sum += x;
        if t >= window {
            sum -= xs[t - window];
        }
        out.push(sum / (t + 1).min(window) as f64);
    }
    out
}

fn check_records(records: &[StepRecord], grid: &CoverageGrid) -> Result<()> {
    for r in records {
        check_len(grid.len(), r.q.len())?;
        check_len(grid.len(), r.err.len())?;
    }
    Ok(())
}

/// `CE_i = |mean_t err_{t,i} - alpha_i|`
pub fn calibration_error(records: &[StepRecord], grid: &CoverageGrid) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::InvalidInput(
            "calibration error needs at least one step".into(),
        ));
    }
    check_records(records, grid)?;
    Ok(miscoverage_rates(records, grid.len())
        .iter()
        .zip(grid.alphas())
        .map(|(r, a)| (r - a).abs())
        .collect())
}

/// Empirical miscoverage frequency per level.
pub fn miscoverage_rates(records: &[StepRecord], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for r in records {
        for (c, &e) in counts.iter_mut().zip(&r.err) {
            *c += usize::from(e);
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 / records.len() as f64)
        .collect()
}

/// `sum_i CE_i` evaluated on every prefix `1..=t` of the run.
pub fn cumulative_ce_sum(records: &[StepRecord], grid: &CoverageGrid) -> Result<Vec<f64>> {
    check_records(records, grid)?;
    let mut counts = vec![0usize; grid.len()];
    let mut out = Vec::with_capacity(records.len());
    for (t, r) in records.iter().enumerate() {
        for (c, &e) in counts.iter_mut().zip(&r.err) {
            *c += usize::from(e);
        }
        let n = (t + 1) as f64;
        out.push(
            counts
                .iter()
                .zip(grid.alphas())
                .map(|(&c, a)| (c as f64 / n - a).abs())
                .sum(),
        );
    }
    Ok(out)
}

/// Per-step `||q_t - q*_t||_1`.
pub fn l1_distances(records: &[StepRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let qs = r.q_star.as_ref().ok_or_else(|| {
                Error::UnsupportedMetric(format!(
                    "tracking error needs oracle thresholds (missing at step {})",
                    r.t
                ))
            })?;
            check_len(r.q.len(), qs.len())?;
            Ok(r.q.iter().zip(qs).map(|(a, b)| (a - b).abs()).sum())
        })
        .collect()
}

/// Rolling mean of the L1 oracle distance over a trailing window of `dt`.
pub fn l1_tracking_error(records: &[StepRecord], dt: usize) -> Result<Vec<f64>> {
    Ok(rolling_mean(&l1_distances(records)?, dt))
}

/// Rolling mean width `2 q_{t,i}` per level; indexed `[t][i]`.
pub fn set_size(records: &[StepRecord], window: usize) -> Vec<Vec<f64>> {
    let k = records.first().map_or(0, |r| r.q.len());
    let per_level: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let widths: Vec<f64> = records.iter().map(|r| 2.0 * r.q[i]).collect();
            rolling_mean(&widths, window)
        })
        .collect();
    (0..records.len())
        .map(|t| per_level.iter().map(|l| l[t]).collect())
        .collect()
}

/// Smallest consecutive gap `q_i - q_{i+1}` at every step, and the number of
/// `(t, i)` pairs whose gap is below `-1e-12`.
pub fn nestedness_gaps(records: &[StepRecord]) -> Result<(Vec<f64>, usize)> {
    let mut min_gap = Vec::with_capacity(records.len());
    let mut violations = 0;
    for r in records {
        if r.q.len() < 2 {
            return Err(Error::InvalidInput(
                "nestedness needs at least two levels".into(),
            ));
        }
        let mut m = f64::INFINITY;
        for p in r.q.windows(2) {
            let gap = p[0] - p[1];
            if gap < -VIOLATION_TOL {
                violations += 1;
            }
            m = m.min(gap);
        }
        min_gap.push(m);
    }
    Ok((min_gap, violations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub ce: Vec<f64>,
    pub ce_sum_cumulative: Vec<f64>,
    /// Empty when the run has no oracle.
    pub l1_rolling: Vec<f64>,
    pub set_size_rolling: Vec<Vec<f64>>,
    /// Empty for a single-level grid.
    pub min_gap: Vec<f64>,
    pub violations: usize,
}

impl RunMetrics {
    pub fn compute(records: &[StepRecord], grid: &CoverageGrid, dt: usize) -> Result<Self> {
        let ce = calibration_error(records, grid)?;
        let ce_sum_cumulative = cumulative_ce_sum(records, grid)?;
        let l1_rolling = if records.iter().all(|r| r.q_star.is_some()) {
            l1_tracking_error(records, dt)?
        } else {
            Vec::new()
        };
        let set_size_rolling = set_size(records, dt);
        let (min_gap, violations) = if grid.len() >= 2 {
            nestedness_gaps(records)?
        } else {
            (Vec::new(), 0)
        };
        Ok(Self {
            ce,
            ce_sum_cumulative,
            l1_rolling,
            set_size_rolling,
            min_gap,
            violations,
        })
    }

    /// Mean rolling L1 error over the last `window` steps.
    pub fn final_window_l1(&self, window: usize) -> Option<f64> {
        if self.l1_rolling.is_empty() {
            return None;
        }
        let n = self.l1_rolling.len();
        let tail = &self.l1_rolling[n.saturating_sub(window)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Which regret bound applies to a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegretForm {
    /// Mirror descent on gap weights with simplex floor `mu`.
    GapSpace { mu: f64 },
    /// Projected online gradient in threshold space.
    ThresholdSpace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretSettings {
    pub eta: f64,
    pub form: RegretForm,
    /// Lower bound `p` on the score density used by the quantile-error form.
    pub density_floor: f64,
    /// Steps where some `|q_{t,i} - q*_{t,i}|` exceeds this are counted; the
    /// density floor only holds inside the score support.
    pub support_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub horizon: usize,
    /// `sum_t f_t(q_t) - f_t(q*_t)`; equal to the gap-space regret because
    /// `g_t(w) = f_t(J w)`.
    pub loss_regret: f64,
    /// `sum_t (p/2) ||q_t - q*_t||_2^2`
    pub quantile_error: f64,
    pub path_q: f64,
    /// Path length of the oracle gap weights (gap-space form only).
    pub path_w: Option<f64>,
    /// Whether every oracle gap weight respects the simplex floor.
    pub comparator_feasible: bool,
    pub outside_support_steps: usize,
    /// Deterministic loss-regret bound; holds for any bounded score sequence.
    pub loss_bound: BoundCheck,
    /// Averaged quantile-error bound; stated in expectation, informational.
    pub quantile_bound: BoundCheck,
}

/// Oracle gap weights `(q*_{i} - q*_{i+1}) / B` with `q*_0 = B`, `q*_{K+1} = 0`.
fn oracle_gaps(q_star: &[f64], bound: f64) -> Vec<f64> {
    let k = q_star.len();
    let mut w = Vec::with_capacity(k + 1);
    w.push((bound - q_star[0]) / bound);
    for i in 0..k {
        let next = if i + 1 < k { q_star[i + 1] } else { 0.0 };
        w.push((q_star[i] - next) / bound);
    }
    w
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Empirical regret against the oracle path together with the matching
/// dynamic-regret bounds.
///
/// Constants: `G_inf = B K` bounds the gap-space gradient, `G_2 = sqrt(K)`
/// the threshold-space gradient, `D = B sqrt(K)` the diameter of the nested
/// threshold set.
pub fn regret_and_bounds(
    records: &[StepRecord],
    grid: &CoverageGrid,
    settings: &RegretSettings,
) -> Result<RegretReport> {
    check_records(records, grid)?;
    let oracle: Vec<&Vec<f64>> = records
        .iter()
        .map(|r| {
            r.q_star.as_ref().ok_or_else(|| {
                Error::UnsupportedMetric("regret bounds need oracle thresholds".into())
            })
        })
        .collect::<Result<_>>()?;
    for q in &oracle {
        check_len(grid.len(), q.len())?;
    }
    let t_len = records.len();
    if t_len == 0 {
        return Err(Error::InvalidInput("regret needs at least one step".into()));
    }
    let b = grid.bound();
    let k = grid.len() as f64;
    let alphas = grid.alphas();
    let eta = settings.eta;
    let p = settings.density_floor;

    let mut loss_regret = 0.0;
    let mut quantile_error = 0.0;
    let mut outside_support_steps = 0;
    for (r, qs) in records.iter().zip(&oracle) {
        loss_regret +=
            joint_loss_slice(&r.q, r.score, alphas) - joint_loss_slice(qs, r.score, alphas);
        quantile_error += 0.5
            * p
            * r.q
                .iter()
                .zip(qs.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        if let Some(h) = settings.support_halfwidth {
            if r.q.iter().zip(qs.iter()).any(|(a, b)| (a - b).abs() > h) {
                outside_support_steps += 1;
            }
        }
    }
    let path_q: f64 = oracle.windows(2).map(|p| l1(p[1], p[0])).sum();
    let tf = t_len as f64;

    let (path_w, comparator_feasible, loss_bound, quantile_bound) = match settings.form {
        RegretForm::GapSpace { mu } => {
            let gaps: Vec<Vec<f64>> = oracle.iter().map(|q| oracle_gaps(q, b)).collect();
            let feasible = gaps.iter().flatten().all(|&w| w >= mu - 1e-12);
            let path_w: f64 = gaps.windows(2).map(|p| l1(&p[1], &p[0])).sum();
            let lip = 1.0 + (1.0 / mu).ln();
            let g_inf = b * k;
            let loss_rhs = lip / eta * (1.0 + path_w) + eta * g_inf * g_inf * tf;
            let q_rhs = lip * (1.0 + path_w) / (eta * tf) + g_inf * g_inf * eta / 2.0;
            (
                Some(path_w),
                feasible,
                check("loss-regret (gap space)", loss_regret, loss_rhs),
                check("quantile error (gap space)", quantile_error / tf, q_rhs),
            )
        }
        RegretForm::ThresholdSpace => {
            let d2 = b * b * k;
            let g2 = k;
            let feasible = oracle.iter().all(|q| {
                q.windows(2).all(|p| p[0] >= p[1] - 1e-12)
                    && q.iter().all(|&x| x >= -1e-12 && x <= b + 1e-12)
            });
            let loss_rhs = 3.0 * d2 / eta * (1.0 + path_q) + eta * g2 * tf;
            let q_rhs = 3.0 * b * b * k * (1.0 + path_q) / (eta * tf) + eta * k;
            (
                None,
                feasible,
                check("loss-regret (threshold space)", loss_regret, loss_rhs),
                check(
                    "quantile error (threshold space)",
                    quantile_error / tf,
                    q_rhs,
                ),
            )
        }
    };

    Ok(RegretReport {
        horizon: t_len,
        loss_regret,
        quantile_error,
        path_q,
        path_w,
        comparator_feasible,
        outside_support_steps,
        loss_bound,
        quantile_bound,
    })
}

fn check(name: &'static str, lhs: f64, rhs: f64) -> BoundCheck {
    BoundCheck {
        name,
        lhs,
        rhs,
        pass: lhs <= rhs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rec(t: usize, score: f64, q: Vec<f64>, q_star: Option<Vec<f64>>) -> StepRecord {
        StepRecord::new(t, score, q, q_star)
    }

    #[test]
    fn calibration_examples() {
        let g = CoverageGrid::new(vec![0.1], 1.0).unwrap();
        let never: Vec<_> = (0..10).map(|t| rec(t, 0.0, vec![0.5], None)).collect();
        assert_abs_diff_eq!(
            calibration_error(&never, &g).unwrap()[0],
            0.1,
            epsilon = 1e-15
        );

        let mut once = never.clone();
        once[3] = rec(3, 0.9, vec![0.5], None);
        assert_abs_diff_eq!(
            calibration_error(&once, &g).unwrap()[0],
            0.0,
            epsilon = 1e-15
        );

        assert!(calibration_error(&[], &g).is_err());
    }

    #[test]
    fn cumulative_ce_final_matches_total() {
        let g = CoverageGrid::new(vec![0.2, 0.6], 1.0).unwrap();
        let rs: Vec<_> = (0..25)
            .map(|t| rec(t, (t % 5) as f64 / 5.0, vec![0.7, 0.3], None))
            .collect();
        let cum = cumulative_ce_sum(&rs, &g).unwrap();
        let total: f64 = calibration_error(&rs, &g).unwrap().iter().sum();
        assert_abs_diff_eq!(*cum.last().unwrap(), total, epsilon = 1e-15);
        assert_eq!(cum.len(), 25);
    }

    #[test]
    fn l1_examples() {
        let same: Vec<_> = (0..5)
            .map(|t| rec(t, 0.0, vec![0.5, 0.2], Some(vec![0.5, 0.2])))
            .collect();
        assert!(l1_tracking_error(&same, 3)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));

        let off: Vec<_> = (0..5)
            .map(|t| rec(t, 0.0, vec![0.5, 0.25], Some(vec![0.5, 0.2])))
            .collect();
        for x in l1_tracking_error(&off, 3).unwrap() {
            assert_abs_diff_eq!(x, 0.05, epsilon = 1e-15);
        }

        let no_oracle = vec![rec(0, 0.0, vec![0.5], None)];
        assert!(matches!(
            l1_tracking_error(&no_oracle, 3),
            Err(Error::UnsupportedMetric(_))
        ));
    }

    #[test]
    fn rolling_window_prefix_convention() {
        assert_eq!(
            rolling_mean(&[1.0, 2.0, 3.0, 4.0], 10),
            vec![1.0, 1.5, 2.0, 2.5]
        );
        assert_eq!(
            rolling_mean(&[1.0, 2.0, 3.0, 4.0], 2),
            vec![1.0, 1.5, 2.5, 3.5]
        );
    }

    #[test]
    fn set_size_examples() {
        let rs: Vec<_> = (0..4).map(|t| rec(t, 0.0, vec![0.5, 0.0], None)).collect();
        let s = set_size(&rs, 2);
        for row in &s {
            assert_eq!(row, &vec![1.0, 0.0]);
        }
        let nested: Vec<_> = (0..4)
            .map(|t| rec(t, 0.0, vec![0.9 - 0.1 * t as f64, 0.3], None))
            .collect();
        assert!(set_size(&nested, 3).iter().all(|row| row[0] >= row[1]));
    }

    #[test]
    fn nestedness_examples() {
        let sorted = vec![
            rec(0, 0.0, vec![0.5, 0.3], None),
            rec(1, 0.0, vec![0.4, 0.4], None),
        ];
        let (gaps, v) = nestedness_gaps(&sorted).unwrap();
        assert_eq!(v, 0);
        assert_abs_diff_eq!(gaps[0], 0.2, epsilon = 1e-15);
        assert_eq!(gaps[1], 0.0);

        let crossed = vec![rec(0, 0.0, vec![0.3, 0.5], None)];
        assert_eq!(nestedness_gaps(&crossed).unwrap().1, 1);
        assert!(nestedness_gaps(&[rec(0, 0.0, vec![0.3], None)]).is_err());
    }

    #[test]
    fn regret_zero_variation_reduces_bound() {
        let g = CoverageGrid::new(vec![0.1, 0.5], 1.0).unwrap();
        let qs = vec![0.7, 0.4];
        let rs: Vec<_> = (0..100)
            .map(|t| rec(t, 0.5, vec![0.6, 0.3], Some(qs.clone())))
            .collect();
        let mu = 0.05;
        let eta = 0.1;
        let rep = regret_and_bounds(
            &rs,
            &g,
            &RegretSettings {
                eta,
                form: RegretForm::GapSpace { mu },
                density_floor: 1.0,
                support_halfwidth: None,
            },
        )
        .unwrap();
        assert_eq!(rep.path_q, 0.0);
        assert_eq!(rep.path_w, Some(0.0));
        let expected = (1.0 + (1.0 / mu).ln()) / (eta * 100.0) + (1.0 * 2.0f64).powi(2) * eta / 2.0;
        assert_abs_diff_eq!(rep.quantile_bound.rhs, expected, epsilon = 1e-12);
        assert!(rep.comparator_feasible);
    }

    #[test]
    fn regret_against_itself_is_zero() {
        let g = CoverageGrid::new(vec![0.1, 0.5], 1.0).unwrap();
        let rs: Vec<_> = (0..50)
            .map(|t| {
                let q = vec![0.8 - 0.001 * t as f64, 0.4];
                rec(t, (t % 10) as f64 / 10.0, q.clone(), Some(q))
            })
            .collect();
        for form in [
            RegretForm::GapSpace { mu: 0.05 },
            RegretForm::ThresholdSpace,
        ] {
            let rep = regret_and_bounds(
                &rs,
                &g,
                &RegretSettings {
                    eta: 0.1,
                    form,
                    density_floor: 1.0,
                    support_halfwidth: Some(0.5),
                },
            )
            .unwrap();
            assert_eq!(rep.loss_regret, 0.0);
            assert!(rep.loss_bound.pass && rep.quantile_bound.pass);
            assert_eq!(rep.outside_support_steps, 0);
        }
    }

    #[test]
    fn regret_requires_oracle() {
        let g = CoverageGrid::new(vec![0.1], 1.0).unwrap();
        let rs = vec![rec(0, 0.5, vec![0.5], None)];
        let s = RegretSettings {
            eta: 0.1,
            form: RegretForm::ThresholdSpace,
            density_floor: 1.0,
            support_halfwidth: None,
        };
        assert!(matches!(
            regret_and_bounds(&rs, &g, &s),
            Err(Error::UnsupportedMetric(_))
        ));
    }
}
