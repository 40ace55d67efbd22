//! Feasibility projections: KL onto the truncated simplex, Euclidean onto
//! the bounded set of non-increasing threshold vectors.

use crate::error::{invalid, Result};

/// Entries of a pre-projection weight vector are floored here so that a
/// heavily down-weighted coordinate never underflows to zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Residual the simplex projection must certify for `|sum w - 1|`.
pub const SIMPLEX_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexProjectionResult {
    pub w: Vec<f64>,
    /// Scale applied to every coordinate above the floor.
    pub c: f64,
    /// Indices clamped to the floor `mu`.
    pub active_floor: Vec<usize>,
}

/// KL projection of a positive vector onto `{w : w_i >= mu, sum w_i = 1}`.
///
/// The minimizer has the form `w_i = max(mu, c * w_tilde_i)` for the unique
/// `c > 0` making the weights sum to one. `c` is found exactly by sorting and
/// scanning the candidate sets of unclamped coordinates; bisection is used as
/// a fallback when rounding leaves a residual above [`SIMPLEX_RESIDUAL`].
pub fn kl_project_truncated_simplex(w_tilde: &[f64], mu: f64) -> Result<SimplexProjectionResult> {
    let n = w_tilde.len();
    if n == 0 {
        return Err(invalid("cannot project an empty vector"));
    }
    if !(mu > 0.0 && mu < 1.0 / n as f64) {
        return Err(invalid(format!("mu = {mu} must lie in (0, 1/{n})")));
    }
    if let Some(i) = w_tilde.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(invalid(format!(
            "w_tilde[{i}] = {} is not positive",
            w_tilde[i]
        )));
    }
    let wt: Vec<f64> = w_tilde.iter().map(|&x| x.max(WEIGHT_FLOOR)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| wt[b].total_cmp(&wt[a]));

    // prefix[k] = sum of the k largest entries
    let mut prefix = vec![0.0; n + 1];
    for (k, &i) in order.iter().enumerate() {
        prefix[k + 1] = prefix[k] + wt[i];
    }

    let mut c = f64::NAN;
    for k in (1..=n).rev() {
        let cand = (1.0 - (n - k) as f64 * mu) / prefix[k];
        let smallest_in = cand * wt[order[k - 1]] >= mu;
        let largest_out = k == n || cand * wt[order[k]] < mu;
        if smallest_in && largest_out {
            c = cand;
            break;
        }
    }

    let mut w: Vec<f64> = if c.is_finite() {
        wt.iter().map(|&x| mu.max(c * x)).collect()
    } else {
        Vec::new()
    };
    let residual = (w.iter().sum::<f64>() - 1.0).abs();
    if !c.is_finite() || residual > SIMPLEX_RESIDUAL {
        c = bisect_scale(&wt, mu);
        w = wt.iter().map(|&x| mu.max(c * x)).collect();
    }

    let active_floor = (0..n).filter(|&i| c * wt[i] < mu).collect();
    Ok(SimplexProjectionResult { w, c, active_floor })
}

fn bisect_scale(wt: &[f64], mu: f64) -> f64 {
    let total = |c: f64| wt.iter().map(|&x| mu.max(c * x)).sum::<f64>();
    let mut lo = 0.0;
    let mut hi = 1.0 / wt.iter().cloned().fold(f64::INFINITY, f64::min);
    while total(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (total(lo) - 1.0).abs() < (total(hi) - 1.0).abs() {
        lo
    } else {
        hi
    }
}

/// Euclidean projection onto `{q : B >= q_1 >= ... >= q_K >= 0}`.
pub fn pava_project_decreasing(v: &[f64], bound: f64) -> Vec<f64> {
    pava_project_decreasing_with_gap(v, bound, 0.0)
}

/// Euclidean projection onto `{q : B >= q_1, q_i - q_{i+1} >= min_gap, q_K >= 0}`.
///
/// Shifting `u_i = q_i - (K - 1 - i) * min_gap` turns the gap constraint into
/// plain monotonicity with box `[0, B - (K - 1) * min_gap]`, so the same
/// pool-then-clip routine applies. `min_gap = 0` is the plain projection.
pub fn pava_project_decreasing_with_gap(v: &[f64], bound: f64, min_gap: f64) -> Vec<f64> {
    let k = v.len();
    if k == 0 {
        return Vec::new();
    }
    let offset = |i: usize| (k - 1 - i) as f64 * min_gap;
    let upper = (bound - offset(0)).max(0.0);
    let shifted: Vec<f64> = if min_gap == 0.0 {
        v.to_vec()
    } else {
        v.iter().enumerate().map(|(i, &x)| x - offset(i)).collect()
    };
    let mut out = isotonic_decreasing(&shifted);
    for (i, x) in out.iter_mut().enumerate() {
        *x = x.clamp(0.0, upper);
        if min_gap != 0.0 {
            *x += offset(i);
        }
    }
    out
}

/// Least-squares non-increasing fit (unit weights), pool-adjacent-violators.
pub fn isotonic_decreasing(v: &[f64]) -> Vec<f64> {
    // (sum, count) per block
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 >= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("at least one block");
            *last = (s0 + s1, n0 + n1);
        }
    }
    let mut out = Vec::with_capacity(v.len());
    for (s, n) in blocks {
        out.extend(std::iter::repeat_n(s / n as f64, n));
    }
    out
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn feasible_point_is_fixed() {
        let r = kl_project_truncated_simplex(&[1.0 / 3.0; 3], 0.1).unwrap();
        for &x in &r.w {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(r.c, 1.0, epsilon = 1e-15);
        assert!(r.active_floor.is_empty());
    }

    #[test]
    fn symmetric_input_normalizes() {
        let r = kl_project_truncated_simplex(&[2.0, 2.0], 0.1).unwrap();
        assert_eq!(r.w, vec![0.5, 0.5]);
    }

    #[test]
    fn floor_activates() {
        // max(0.2, 0.9c) + max(0.2, 0.1c) = 1 with the second clamped: c = 0.8/0.9
        let r = kl_project_truncated_simplex(&[0.9, 0.1], 0.2).unwrap();
        assert_abs_diff_eq!(r.w[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(r.w[1], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(r.c, 8.0 / 9.0, epsilon = 1e-15);
        assert_eq!(r.active_floor, vec![1]);
    }

    #[test]
    fn projection_rejects_bad_input() {
        assert!(kl_project_truncated_simplex(&[0.5, 0.0], 0.1).is_err());
        assert!(kl_project_truncated_simplex(&[0.5, -1.0], 0.1).is_err());
        assert!(kl_project_truncated_simplex(&[0.5, 0.5], 0.5).is_err());
        assert!(kl_project_truncated_simplex(&[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn tiny_weights_survive() {
        let r = kl_project_truncated_simplex(&[1.0, 1e-320, 1e-310], 0.01).unwrap();
        assert_abs_diff_eq!(r.w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(r.w[1], 0.01);
        assert_eq!(r.w[2], 0.01);
    }

    #[test]
    fn pava_examples() {
        assert_eq!(pava_project_decreasing(&[0.5, 0.3], 1.0), vec![0.5, 0.3]);
        assert_eq!(pava_project_decreasing(&[0.3, 0.5], 1.0), vec![0.4, 0.4]);
        assert_eq!(pava_project_decreasing(&[1.2, -0.1], 1.0), vec![1.0, 0.0]);
        let pooled = pava_project_decreasing(&[0.1, 0.2, 0.9, 0.0], 1.0);
        for &x in &pooled[..3] {
            assert_abs_diff_eq!(x, 0.4, epsilon = 1e-15);
        }
        assert_eq!(pooled[3], 0.0);
    }

    #[test]
    fn pava_with_min_gap() {
        let q = pava_project_decreasing_with_gap(&[0.5, 0.5, 0.5], 1.0, 0.1);
        assert_abs_diff_eq!(q[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 0.4, epsilon = 1e-15);
        let q = pava_project_decreasing_with_gap(&[2.0, 1.5, -1.0], 1.0, 0.1);
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 0.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn pava_idempotent(v in proptest::collection::vec(-0.5f64..1.5, 1..10)) {
            let once = pava_project_decreasing(&v, 1.0);
            let twice = pava_project_decreasing(&once, 1.0);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn pava_is_nonexpansive_toward_feasible_points(
            v in proptest::collection::vec(-0.5f64..1.5, 1..10),
            raw in proptest::collection::vec(0.0f64..1.0, 10),
        ) {
            let mut q: Vec<f64> = raw[..v.len()].to_vec();
            q.sort_by(|a, b| b.total_cmp(a));
            let p = pava_project_decreasing(&v, 1.0);
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            prop_assert!(d(&p, &q) <= d(&v, &q) + 1e-12);
        }

        #[test]
        fn kl_projection_idempotent(raw in proptest::collection::vec(0.01f64..1.0, 2..9)) {
            let n = raw.len() as f64;
            let mu = 0.3 / n;
            let first = kl_project_truncated_simplex(&raw, mu).unwrap();
            let second = kl_project_truncated_simplex(&first.w, mu).unwrap();
            for (a, b) in first.w.iter().zip(&second.w) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn kl_scale_map_is_increasing(
            raw in proptest::collection::vec(0.01f64..1.0, 2..9),
            c1 in 0.01f64..10.0, dc in 0.001f64..1.0,
        ) {
            let mu = 0.3 / raw.len() as f64;
            let total = |c: f64| raw.iter().map(|&x| mu.max(c * x)).sum::<f64>();
            // strictly increasing once the largest coordinate leaves the floor
            let start = mu / raw.iter().cloned().fold(0.0, f64::max) + c1;
            prop_assert!(total(start + dc) > total(start));
        }
    }
}
