use nested_conformal::estimators::{default_mu, Init};
use nested_conformal::metrics::nestedness_gaps;
use nested_conformal::synthetic::{generate_walk, run_walk, WalkConfig, SYNTHETIC_BOUND};
use nested_conformal::{CoverageGrid, EstimatorConfig, EstimatorRegistry, StepRecord};
use proptest::prelude::*;

const CONSTRAINED: [&str; 3] = ["projected_tracker", "pg", "eg"];

fn build(
    method: &str,
    grid: &CoverageGrid,
    eta: f64,
) -> Box<dyn nested_conformal::QuantileEstimator> {
    let mut cfg = EstimatorConfig::new(method, grid.clone()).with_eta(eta);
    if method == "eg" {
        cfg.mu = Some(default_mu(grid.len()));
    }
    EstimatorRegistry::with_builtin().build(&cfg).unwrap()
}

fn feed(method: &str, grid: &CoverageGrid, eta: f64, scores: &[f64]) -> Vec<StepRecord> {
    let mut est = build(method, grid, eta);
    scores
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let o = est.observe(s).unwrap();
            StepRecord {
                t,
                score: s,
                q: o.q,
                err: o.err,
                q_star: None,
            }
        })
        .collect()
}

fn grid_strategy() -> impl Strategy<Value = CoverageGrid> {
    (prop::collection::btree_set(1u32..99, 1..8), 0.5f64..20.0).prop_map(|(set, b)| {
        CoverageGrid::new(set.into_iter().map(|i| i as f64 / 100.0).collect(), b).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constrained_methods_stay_nested_and_bounded(
        grid in grid_strategy(),
        raw in prop::collection::vec(0.0f64..1.0, 1..300),
        eta_frac in 0.0f64..0.5,
    ) {
        let b = grid.bound();
        let scores: Vec<f64> = raw.iter().map(|u| u * b).collect();
        for m in CONSTRAINED {
            let eta = if m == "eg" { eta_frac / b } else { eta_frac * b };
            let recs = feed(m, &grid, eta, &scores);
            for r in &recs {
                prop_assert!(r.q.iter().all(|&q| (-1e-12..=b + 1e-12).contains(&q)), "{m}: {:?}", r.q);
            }
            if grid.len() >= 2 {
                prop_assert_eq!(nestedness_gaps(&recs).unwrap().1, 0, "{}", m);
            }
        }
    }

    #[test]
    fn eg_gaps_respect_floor(
        grid in grid_strategy(),
        raw in prop::collection::vec(0.0f64..1.0, 1..300),
    ) {
        let b = grid.bound();
        let mu = default_mu(grid.len());
        let scores: Vec<f64> = raw.iter().map(|u| u * b).collect();
        let mut est = build("eg", &grid, 0.5 / b);
        for s in scores {
            est.observe(s).unwrap();
            let q = &est.deployed().q;
            prop_assert!(b - q[0] >= b * mu - 1e-12);
            prop_assert!(*q.last().unwrap() >= b * mu - 1e-12);
            for p in q.windows(2) {
                prop_assert!(p[0] - p[1] >= b * mu - 1e-12);
            }
        }
    }

    #[test]
    fn runs_are_deterministic(
        grid in grid_strategy(),
        raw in prop::collection::vec(0.0f64..1.0, 1..100),
    ) {
        let scores: Vec<f64> = raw.iter().map(|u| u * grid.bound()).collect();
        for m in ["independent", "projected_tracker", "pg", "eg"] {
            let a = feed(m, &grid, 0.01, &scores);
            let b = feed(m, &grid, 0.01, &scores);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn errors_use_pre_update_thresholds(
        grid in grid_strategy(),
        raw in prop::collection::vec(0.0f64..1.0, 1..50),
    ) {
        let scores: Vec<f64> = raw.iter().map(|u| u * grid.bound()).collect();
        for m in ["independent", "pg", "eg"] {
            let mut est = build(m, &grid, 0.01);
            for &s in &scores {
                let before = est.deployed().q.clone();
                let o = est.observe(s).unwrap();
                prop_assert_eq!(&o.q, &before);
                let expect: Vec<bool> = before.iter().map(|&q| s > q).collect();
                prop_assert_eq!(o.err, expect);
            }
        }
    }
}

#[test]
fn single_level_grid_runs_every_method() {
    let grid = CoverageGrid::new(vec![0.1], 1.0).unwrap();
    for m in ["independent", "projected_tracker", "pg", "eg"] {
        let mut cfg = EstimatorConfig::new(m, grid.clone());
        if m == "eg" {
            cfg.mu = Some(0.1);
        }
        let mut est = EstimatorRegistry::with_builtin().build(&cfg).unwrap();
        for s in [0.9, 0.1, 0.5] {
            est.observe(s).unwrap();
        }
        assert_eq!(est.deployed().t, 3);
    }
}

#[test]
fn explicit_init_is_deployed_first() {
    let grid = CoverageGrid::new(vec![0.1, 0.5, 0.9], 2.0).unwrap();
    let init = vec![1.5, 1.0, 0.2];
    for m in ["independent", "projected_tracker", "pg", "eg"] {
        let mut cfg = EstimatorConfig::new(m, grid.clone()).with_init(Init::Explicit(init.clone()));
        if m == "eg" {
            cfg.mu = Some(0.05);
        }
        let est = EstimatorRegistry::with_builtin().build(&cfg).unwrap();
        for (a, b) in est.deployed().q.iter().zip(&init) {
            assert!((a - b).abs() < 1e-12, "{m}: {a} vs {b}");
        }
    }
}

#[test]
fn short_synthetic_run_tracks_oracle_for_constrained_methods() {
    let grid = CoverageGrid::from_range(0.1, 0.9, 0.1, SYNTHETIC_BOUND).unwrap();
    let walk_cfg = WalkConfig {
        horizon: 5000,
        seed: 11,
        ..Default::default()
    };
    let walk = generate_walk(&walk_cfg);
    for m in CONSTRAINED {
        let mut est = build(m, &grid, EstimatorConfig::new(m, grid.clone()).eta);
        let recs = run_walk(&walk, &walk_cfg, est.as_mut()).unwrap();
        let last = recs.last().unwrap();
        let l1: f64 = last
            .q
            .iter()
            .zip(last.q_star.as_ref().unwrap())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(l1 < 3.0, "{m}: final L1 {l1}");
        assert_eq!(nestedness_gaps(&recs).unwrap().1, 0);
    }
}
