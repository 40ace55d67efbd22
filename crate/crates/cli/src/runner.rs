//! Experiment execution. Each (method, seed) run is sequential and writes its
//! own directory; runs are spread over a rayon pool and summaries are
//! collected in config order, so outputs do not depend on scheduling.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nested_conformal::forecast::{read_fred_csv, run_inflation_experiment, InflationRun};
use nested_conformal::metrics::{
    regret_and_bounds, RegretForm, RegretReport, RegretSettings, RunMetrics,
};
use nested_conformal::synthetic::{generate_walk, run_walk, WalkConfig};
use nested_conformal::{CoverageGrid, EstimatorConfig, EstimatorRegistry, StepRecord};
use rayon::prelude::*;

use crate::config::{MethodPlan, Plan};
use crate::error::{io_err, CliError, CliResult};
use crate::output::{ensure_dir, fmt_bool, fmt_f64, header, write_csv};

pub const THREADS_ENV: &str = "NESTED_CONFORMAL_THREADS";

/// Pool sized by `NESTED_CONFORMAL_THREADS` when set, else by rayon.
pub fn worker_pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got '{raw}'"
            ))
        })?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| CliError::Other(format!("cannot start worker pool: {e}")))
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: &'static str,
    pub method: String,
    pub seed: Option<u64>,
    pub eta: f64,
    pub mu: Option<f64>,
    pub steps: usize,
    pub ce_mean: f64,
    pub ce_max: f64,
    pub ce_sum: f64,
    pub final_l1: Option<f64>,
    pub violations: usize,
    pub min_gap: Option<f64>,
    pub clamped: usize,
    pub ridge_steps: usize,
    pub regret: Option<RegretReport>,
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "experiment",
    "method",
    "seed",
    "eta",
    "mu",
    "steps",
    "ce_mean",
    "ce_max",
    "ce_sum",
    "final_l1",
    "violations",
    "min_gap",
    "clamped",
    "ridge_steps",
    "regret_lhs",
    "regret_rhs",
    "regret_pass",
];

impl SummaryRow {
    fn fields(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        vec![
            self.experiment.to_string(),
            self.method.clone(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f64(self.eta),
            opt(self.mu),
            self.steps.to_string(),
            fmt_f64(self.ce_mean),
            fmt_f64(self.ce_max),
            fmt_f64(self.ce_sum),
            opt(self.final_l1),
            self.violations.to_string(),
            opt(self.min_gap),
            self.clamped.to_string(),
            self.ridge_steps.to_string(),
            opt(self.regret.as_ref().map(|r| r.loss_bound.lhs)),
            opt(self.regret.as_ref().map(|r| r.loss_bound.rhs)),
            self.regret
                .as_ref()
                .map(|r| fmt_bool(r.loss_bound.pass).to_string())
                .unwrap_or_default(),
        ]
    }

    fn new(
        experiment: &'static str,
        m: &MethodPlan,
        seed: Option<u64>,
        metrics: &RunMetrics,
        dt: usize,
    ) -> Self {
        let ce_sum: f64 = metrics.ce.iter().sum();
        Self {
            experiment,
            method: m.label.clone(),
            seed,
            eta: m.config.eta,
            mu: (m.config.method == "eg").then_some(m.config.mu).flatten(),
            steps: metrics.ce_sum_cumulative.len(),
            ce_mean: ce_sum / metrics.ce.len() as f64,
            ce_max: metrics.ce.iter().cloned().fold(0.0, f64::max),
            ce_sum,
            final_l1: metrics.final_window_l1(dt),
            violations: metrics.violations,
            min_gap: metrics.min_gap.iter().cloned().reduce(f64::min),
            clamped: 0,
            ridge_steps: 0,
            regret: None,
        }
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    write_csv(
        path,
        &header(SUMMARY_COLUMNS),
        rows.iter().map(SummaryRow::fields),
    )
}

/// Regret settings for a synthetic run: gap-space bound for `eg`, threshold
/// space otherwise, density floor `1 / width`.
pub fn regret_settings(cfg: &EstimatorConfig, walk: &WalkConfig) -> RegretSettings {
    let form = match (cfg.method.as_str(), cfg.mu) {
        ("eg", Some(mu)) => RegretForm::GapSpace { mu },
        _ => RegretForm::ThresholdSpace,
    };
    RegretSettings {
        eta: cfg.eta,
        form,
        density_floor: 1.0 / walk.width,
        support_halfwidth: Some(walk.width / 2.0),
    }
}

/// Records for one synthetic (method, seed) run.
pub fn simulate_one(cfg: &EstimatorConfig, walk: &WalkConfig) -> CliResult<Vec<StepRecord>> {
    let mut est = EstimatorRegistry::with_builtin().build(cfg)?;
    let stream = generate_walk(walk);
    Ok(run_walk(&stream, walk, est.as_mut())?)
}

fn run_dir(out: &Path, label: &str, seed: Option<u64>) -> PathBuf {
    match seed {
        Some(s) => out.join("runs").join(format!("{label}_seed{s}")),
        None => out.join("runs").join(label),
    }
}

fn alpha_cols(prefix: &str, grid: &CoverageGrid) -> Vec<String> {
    grid.alphas()
        .iter()
        .map(|a| format!("{prefix}@{}", fmt_f64(*a)))
        .collect()
}

fn keep(t: usize, n: usize, stride: usize) -> bool {
    t.is_multiple_of(stride) || t + 1 == n
}

/// Extra per-step columns written ahead of the score.
pub struct Context<'a> {
    pub dates: Option<&'a [NaiveDate]>,
    pub extra: Vec<(&'static str, &'a [f64])>,
}

pub fn write_records(
    path: &Path,
    records: &[StepRecord],
    grid: &CoverageGrid,
    stride: usize,
    ctx: &Context,
) -> CliResult<()> {
    let with_oracle = records.first().is_some_and(|r| r.q_star.is_some());
    let mut cols = vec!["t".to_string()];
    if ctx.dates.is_some() {
        cols.push("date".into());
    }
    cols.extend(ctx.extra.iter().map(|(n, _)| n.to_string()));
    cols.push("score".into());
    cols.extend(alpha_cols("q", grid));
    cols.extend(alpha_cols("err", grid));
    if with_oracle {
        cols.extend(alpha_cols("qstar", grid));
    }
    let n = records.len();
    let rows = records
        .iter()
        .enumerate()
        .filter(|(t, _)| keep(*t, n, stride))
        .map(|(t, r)| {
            let mut row = vec![r.t.to_string()];
            if let Some(d) = ctx.dates {
                row.push(d[t].format("%Y-%m-%d").to_string());
            }
            row.extend(ctx.extra.iter().map(|(_, v)| fmt_f64(v[t])));
            row.push(fmt_f64(r.score));
            row.extend(r.q.iter().map(|&x| fmt_f64(x)));
            row.extend(r.err.iter().map(|&e| fmt_bool(e).to_string()));
            if let Some(qs) = &r.q_star {
                row.extend(qs.iter().map(|&x| fmt_f64(x)));
            }
            row
        });
    write_csv(path, &cols, rows)
}

/// The tidy metric files of one run.
pub fn write_metrics(
    dir: &Path,
    metrics: &RunMetrics,
    grid: &CoverageGrid,
    stride: usize,
) -> CliResult<()> {
    let alphas: Vec<String> = grid.alphas().iter().map(|a| fmt_f64(*a)).collect();
    write_csv(
        &dir.join("ce.csv"),
        &header(&["level", "value"]),
        alphas
            .iter()
            .zip(&metrics.ce)
            .map(|(a, v)| vec![a.clone(), fmt_f64(*v)]),
    )?;
    let series = |name: &str, level: &str, xs: &[f64]| {
        let n = xs.len();
        write_csv(
            &dir.join(name),
            &header(&["t", "level", "value"]),
            xs.iter()
                .enumerate()
                .filter(|(t, _)| keep(*t, n, stride))
                .map(|(t, v)| vec![t.to_string(), level.to_string(), fmt_f64(*v)]),
        )
    };
    series("ce_sum.csv", "all", &metrics.ce_sum_cumulative)?;
    if !metrics.l1_rolling.is_empty() {
        series("l1.csv", "all", &metrics.l1_rolling)?;
    }
    if !metrics.min_gap.is_empty() {
        series("min_gap.csv", "min", &metrics.min_gap)?;
    }
    let n = metrics.set_size_rolling.len();
    write_csv(
        &dir.join("set_size.csv"),
        &header(&["t", "level", "value"]),
        metrics
            .set_size_rolling
            .iter()
            .enumerate()
            .filter(|(t, _)| keep(*t, n, stride))
            .flat_map(|(t, row)| {
                row.iter()
                    .zip(&alphas)
                    .map(move |(v, a)| vec![t.to_string(), a.clone(), fmt_f64(*v)])
            }),
    )
}

pub fn write_regret(path: &Path, rep: &RegretReport) -> CliResult<()> {
    let cols = header(&[
        "check",
        "lhs",
        "rhs",
        "pass",
        "path_q",
        "path_w",
        "comparator_feasible",
        "outside_support_steps",
    ]);
    let rows = [&rep.loss_bound, &rep.quantile_bound].map(|b| {
        vec![
            b.name.to_string(),
            fmt_f64(b.lhs),
            fmt_f64(b.rhs),
            fmt_bool(b.pass).to_string(),
            fmt_f64(rep.path_q),
            rep.path_w.map(fmt_f64).unwrap_or_default(),
            fmt_bool(rep.comparator_feasible).to_string(),
            rep.outside_support_steps.to_string(),
        ]
    });
    write_csv(path, &cols, rows)
}

fn synthetic_job(plan: &Plan, m: &MethodPlan, seed: u64) -> CliResult<SummaryRow> {
    let walk = WalkConfig {
        seed,
        ..plan.walk.clone()
    };
    let records = simulate_one(&m.config, &walk)?;
    let metrics = RunMetrics::compute(&records, &plan.grid, plan.dt)?;
    let regret = regret_and_bounds(&records, &plan.grid, &regret_settings(&m.config, &walk))?;

    let dir = run_dir(&plan.out_dir, &m.label, Some(seed));
    ensure_dir(&dir)?;
    let z: Vec<f64> = generate_walk(&walk).iter().map(|s| s.z).collect();
    let ctx = Context {
        dates: None,
        extra: vec![("z", &z)],
    };
    write_records(
        &dir.join("records.csv"),
        &records,
        &plan.grid,
        plan.stride,
        &ctx,
    )?;
    write_metrics(&dir, &metrics, &plan.grid, plan.stride)?;
    write_regret(&dir.join("regret.csv"), &regret)?;

    let mut row = SummaryRow::new("synthetic", m, Some(seed), &metrics, plan.dt);
    row.regret = Some(regret);
    Ok(row)
}

/// Every (method, seed) pair of a synthetic plan; writes `summary.csv`.
pub fn run_simulation(plan: &Plan) -> CliResult<Vec<SummaryRow>> {
    ensure_dir(&plan.out_dir)?;
    let jobs: Vec<(&MethodPlan, u64)> = plan
        .methods
        .iter()
        .flat_map(|m| plan.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = worker_pool()?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|(m, s)| synthetic_job(plan, m, *s))
            .collect::<CliResult<Vec<_>>>()
    })?;
    write_summary(&plan.out_dir.join("summary.csv"), &rows)?;
    Ok(rows)
}

fn data_error(e: nested_conformal::Error) -> CliError {
    use nested_conformal::Error as E;
    match e {
        E::InvalidInput(m) => CliError::Data(m),
        other => other.into(),
    }
}

/// `date,method,alpha,yhat,lo,hi,err` for every month, method and level.
pub fn write_fan_chart(
    path: &Path,
    runs: &[(String, InflationRun)],
    grid: &CoverageGrid,
) -> CliResult<()> {
    let alphas: Vec<String> = grid.alphas().iter().map(|a| fmt_f64(*a)).collect();
    let mut rows = Vec::new();
    for t in 0..runs.first().map_or(0, |(_, r)| r.records.len()) {
        for (label, run) in runs {
            let bands = run.bands(t)?;
            let date = run.dates[t].format("%Y-%m-%d").to_string();
            for ((band, a), e) in bands.iter().zip(&alphas).zip(&run.records[t].err) {
                rows.push(vec![
                    date.clone(),
                    label.clone(),
                    a.clone(),
                    fmt_f64(run.yhat[t]),
                    fmt_f64(band.lo),
                    fmt_f64(band.hi),
                    fmt_bool(*e).to_string(),
                ]);
            }
        }
    }
    write_csv(
        path,
        &header(&["date", "method", "alpha", "yhat", "lo", "hi", "err"]),
        rows,
    )
}

/// Run every method of an inflation plan over the CPI file.
pub fn run_inflation(plan: &Plan) -> CliResult<Vec<SummaryRow>> {
    let ip = plan
        .inflation
        .as_ref()
        .ok_or_else(|| CliError::Config("no inflation section".into()))?;
    let cpi = read_fred_csv(&ip.data, &ip.value_column).map_err(data_error)?;
    ensure_dir(&plan.out_dir)?;
    let pool = worker_pool()?;
    let runs = pool.install(|| {
        plan.methods
            .par_iter()
            .map(|m| -> CliResult<(String, InflationRun)> {
                let mut est = EstimatorRegistry::with_builtin().build(&m.config)?;
                let run = run_inflation_experiment(&cpi, est.as_mut(), &ip.forecast)
                    .map_err(data_error)?;
                Ok((m.label.clone(), run))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    for (m, (_, run)) in plan.methods.iter().zip(&runs) {
        let metrics = RunMetrics::compute(&run.records, &plan.grid, plan.dt)?;
        let dir = run_dir(&plan.out_dir, &m.label, None);
        ensure_dir(&dir)?;
        let ctx = Context {
            dates: Some(&run.dates),
            extra: vec![("y", &run.y), ("yhat", &run.yhat)],
        };
        write_records(&dir.join("records.csv"), &run.records, &plan.grid, 1, &ctx)?;
        write_metrics(&dir, &metrics, &plan.grid, 1)?;
        let mut row = SummaryRow::new("inflation", m, None, &metrics, plan.dt);
        row.clamped = run.clamped;
        row.ridge_steps = run.ridge_steps;
        if run.clamped > 0 {
            eprintln!(
                "warning: {}: {} scores clamped to [0, {}]",
                m.label,
                run.clamped,
                plan.grid.bound()
            );
        }
        rows.push(row);
    }
    write_fan_chart(&plan.out_dir.join("fan_chart.csv"), &runs, &plan.grid)?;
    write_summary(&plan.out_dir.join("summary.csv"), &rows)?;
    Ok(rows)
}

/// Records parsed back from a `records.csv`.
pub fn read_records(path: &Path) -> CliResult<(CoverageGrid, Vec<StepRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let head = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let find = |name: &str| head.iter().position(|h| h == name);
    let level_cols = |prefix: &str| -> Vec<(usize, &str)> {
        head.iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(prefix).map(|a| (i, a)))
            .collect()
    };
    let q_cols = level_cols("q@");
    let err_cols = level_cols("err@");
    let qs_cols = level_cols("qstar@");
    let (Some(t_col), Some(s_col)) = (find("t"), find("score")) else {
        return Err(bad("missing t or score column".into()));
    };
    if q_cols.is_empty() || err_cols.len() != q_cols.len() {
        return Err(bad("q@ and err@ columns must match".into()));
    }
    let alphas = q_cols
        .iter()
        .map(|(_, a)| {
            a.parse::<f64>()
                .map_err(|_| bad(format!("bad level '{a}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    // The records file does not carry the score bound; metrics do not use it.
    let grid = CoverageGrid::new(alphas, 1.0).map_err(|e| bad(e.to_string()))?;

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
        let num = |i: usize| -> CliResult<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                bad(format!(
                    "line {line}: bad number in column {}",
                    head.get(i).unwrap_or("?")
                ))
            })
        };
        let t: usize = rec
            .get(t_col)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {line}: bad t")))?;
        let q = q_cols
            .iter()
            .map(|(i, _)| num(*i))
            .collect::<CliResult<Vec<_>>>()?;
        let err = err_cols
            .iter()
            .map(|(i, _)| match rec.get(*i) {
                Some("0") => Ok(false),
                Some("1") => Ok(true),
                _ => Err(bad(format!("line {line}: err columns must be 0 or 1"))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        let q_star = if qs_cols.len() == q_cols.len() {
            Some(
                qs_cols
                    .iter()
                    .map(|(i, _)| num(*i))
                    .collect::<CliResult<Vec<_>>>()?,
            )
        } else {
            None
        };
        out.push(StepRecord {
            t,
            score: num(s_col)?,
            q,
            err,
            q_star,
        });
    }
    if out.is_empty() {
        return Err(bad("no records".into()));
    }
    Ok((grid, out))
}

/// Recompute the metric files of a run from its `records.csv`.
pub fn recompute_metrics(records: &Path, out_dir: &Path, dt: usize) -> CliResult<RunMetrics> {
    if dt == 0 {
        return Err(CliError::Config("dt must be at least 1".into()));
    }
    let (grid, recs) = read_records(records)?;
    let metrics = RunMetrics::compute(&recs, &grid, dt)?;
    ensure_dir(out_dir)?;
    write_metrics(out_dir, &metrics, &grid, 1)?;
    Ok(metrics)
}
