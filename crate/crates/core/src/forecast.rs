//! CPI inflation pipeline: monthly index ingestion, year-over-year rates,
//! rolling AR(3) one-step forecasts, absolute-error scores and bands.

use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};

use crate::error::{Error, Result};
use crate::estimators::QuantileEstimator;
use crate::types::{clamp_score, prediction_interval, Interval, StepRecord};

/// Score bound for absolute inflation-rate errors (25 percentage points).
pub const INFLATION_BOUND: f64 = 0.25;

/// Default rolling window: five years of monthly regression targets.
pub const DEFAULT_WINDOW: usize = 60;

/// Relative pivot size below which the normal equations count as singular.
const PIVOT_TOL: f64 = 1e-12;

/// Ridge penalty used when the design is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Consecutive monthly observations stamped with the first of each month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl MonthlySeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: values.len(),
            });
        }
        for (i, d) in dates.iter().enumerate() {
            if d.day() != 1 {
                return Err(Error::DataIntegrity(format!(
                    "date {d} at row {i} is not the first of a month"
                )));
            }
        }
        for p in dates.windows(2) {
            let expected = next_month(p[0]);
            if p[1] != expected {
                return Err(if p[1] > expected {
                    Error::DataIntegrity(format!("missing month {}", expected.format("%Y-%m")))
                } else {
                    Error::DataIntegrity(format!(
                        "dates out of order: {} follows {}",
                        p[1].format("%Y-%m"),
                        p[0].format("%Y-%m")
                    ))
                });
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!(
                "non-finite value at {}",
                dates[i].format("%Y-%m")
            )));
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn next_month(d: NaiveDate) -> NaiveDate {
    d.checked_add_months(Months::new(1)).expect("date in range")
}

/// Read a FRED-style CSV: first column an ISO date, `value_column` the index
/// level. Missing values (FRED writes `.`) are a data-integrity error.
pub fn read_fred_csv(path: &Path, value_column: &str) -> Result<MonthlySeries> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))?;
    parse_fred_csv(file, value_column)
}

pub fn parse_fred_csv<R: std::io::Read>(reader: R, value_column: &str) -> Result<MonthlySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::DataIntegrity(format!("unreadable header: {e}")))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == value_column)
        .ok_or_else(|| {
            Error::DataIntegrity(format!(
                "value column '{value_column}' not found in header {:?}",
                headers.iter().collect::<Vec<_>>()
            ))
        })?;
    if col == 0 {
        return Err(Error::DataIntegrity(
            "first column must hold the dates".to_string(),
        ));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::DataIntegrity(format!("line {line}: {e}")))?;
        let raw_date = rec.get(0).unwrap_or_default();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| {
            Error::DataIntegrity(format!("line {line}: bad date '{raw_date}': {e}"))
        })?;
        let raw = rec.get(col).unwrap_or_default();
        let value: f64 = raw.parse().map_err(|_| {
            Error::DataIntegrity(format!(
                "missing or invalid value '{raw}' for month {}",
                date.format("%Y-%m")
            ))
        })?;
        dates.push(date);
        values.push(value);
    }
    MonthlySeries::new(dates, values)
}

/// `y_t = (CPI_t - CPI_{t-12}) / CPI_{t-12}`, dated at `t`.
pub fn yearly_inflation(series: &MonthlySeries) -> Result<MonthlySeries> {
    if series.len() < 13 {
        return Err(Error::InvalidInput(format!(
            "need at least 13 months of index data, got {}",
            series.len()
        )));
    }
    if let Some(i) = series.values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DataIntegrity(format!(
            "index level must be positive, got {} at {}",
            series.values[i],
            series.dates[i].format("%Y-%m")
        )));
    }
    let v = &series.values;
    let rates = (12..v.len())
        .map(|t| (v[t] - v[t - 12]) / v[t - 12])
        .collect();
    MonthlySeries::new(series.dates[12..].to_vec(), rates)
}

/// `y_t = beta_0 + beta_1 y_{t-1} + beta_2 y_{t-2} + beta_3 y_{t-3}`
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub beta: [f64; 4],
    /// Regression targets used in the fit.
    pub window: usize,
    /// True when the normal equations were singular and the ridge fallback
    /// was used.
    pub ridge: bool,
}

/// Ordinary least squares AR(3) fit on `data`; the first three values serve
/// only as lags, every later value is a target.
pub fn fit_ar3(data: &[f64]) -> Result<ArModel> {
    if data.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "AR(3) fit needs at least 4 observations, got {}",
            data.len()
        )));
    }
    let mut xtx = [[0.0; 4]; 4];
    let mut xty = [0.0; 4];
    for t in 3..data.len() {
        let x = [1.0, data[t - 1], data[t - 2], data[t - 3]];
        for i in 0..4 {
            xty[i] += x[i] * data[t];
            for j in 0..4 {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    let window = data.len() - 3;
    if let Some(beta) = solve4(xtx, xty) {
        return Ok(ArModel {
            beta,
            window,
            ridge: false,
        });
    }
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += RIDGE_LAMBDA;
    }
    let beta = solve4(xtx, xty).ok_or_else(|| {
        Error::InvalidInput("AR(3) normal equations singular even with ridge".to_string())
    })?;
    Ok(ArModel {
        beta,
        window,
        ridge: true,
    })
}

/// Gaussian elimination with partial pivoting. `None` when a pivot is
/// negligible relative to the matrix scale.
#[allow(clippy::needless_range_loop)]
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()));
    if !(scale > 0.0) {
        return None;
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= PIVOT_TOL * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let tail: f64 = (i + 1..4).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - tail) / a[i][i];
    }
    Some(x)
}

/// `last3 = (y_{t-1}, y_{t-2}, y_{t-3})`
pub fn one_step_forecast(model: &ArModel, last3: [f64; 3]) -> f64 {
    let b = &model.beta;
    b[0] + b[1] * last3[0] + b[2] * last3[1] + b[3] * last3[2]
}

/// How the rolling window length is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// `window` regression targets (span `window + 3` months).
    #[default]
    Targets,
    /// `window` months in total, lags included.
    Observations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastOptions {
    pub window: usize,
    pub mode: WindowMode,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            mode: WindowMode::Targets,
        }
    }
}

impl ForecastOptions {
    /// Months of inflation history consumed by one fit.
    pub fn span(&self) -> usize {
        match self.mode {
            WindowMode::Targets => self.window + 3,
            WindowMode::Observations => self.window,
        }
    }
}

/// One-step-ahead forecasts for every month with a full trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecasts {
    /// Index into the inflation series of the first forecast month.
    pub start: usize,
    pub yhat: Vec<f64>,
    /// Months whose fit fell back to ridge.
    pub ridge_steps: usize,
}

/// Rolling AR(3) forecasts: the value at month `t` is predicted from a fit on
/// the `span` months strictly before `t`.
pub fn rolling_forecasts(y: &[f64], opts: &ForecastOptions) -> Result<Forecasts> {
    let span = opts.span();
    if span < 4 {
        return Err(Error::Config(format!(
            "window span {span} leaves no regression target"
        )));
    }
    if y.len() <= span {
        return Err(Error::InvalidInput(format!(
            "need more than {span} months of inflation history, got {}",
            y.len()
        )));
    }
    let mut yhat = Vec::with_capacity(y.len() - span);
    let mut ridge_steps = 0;
    for t in span..y.len() {
        let model = fit_ar3(&y[t - span..t])?;
        ridge_steps += usize::from(model.ridge);
        yhat.push(one_step_forecast(&model, [y[t - 1], y[t - 2], y[t - 3]]));
    }
    Ok(Forecasts {
        start: span,
        yhat,
        ridge_steps,
    })
}

/// Outcome of running one estimator over the inflation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct InflationRun {
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    pub yhat: Vec<f64>,
    /// Scores are `|y - yhat|` clamped to `[0, B]`; thresholds are those
    /// deployed before the score was revealed.
    pub records: Vec<StepRecord>,
    pub clamped: usize,
    pub ridge_steps: usize,
}

impl InflationRun {
    /// Bands `yhat_t +- q_{t,i}` for step `t`, widest first. A negative
    /// threshold (only the unconstrained tracker produces one) is drawn as a
    /// point band.
    pub fn bands(&self, t: usize) -> Result<Vec<Interval>> {
        self.records[t]
            .q
            .iter()
            .map(|&q| prediction_interval(self.yhat[t], q.max(0.0)))
            .collect()
    }
}

/// Feed forecast errors to an estimator, month by month.
pub fn calibrate(
    dates: &[NaiveDate],
    y: &[f64],
    yhat: &[f64],
    est: &mut dyn QuantileEstimator,
) -> Result<InflationRun> {
    if dates.len() != y.len() || y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    let bound = est.grid().bound();
    let mut records = Vec::with_capacity(y.len());
    let mut clamped = 0;
    for t in 0..y.len() {
        let (score, was_clamped) = clamp_score((y[t] - yhat[t]).abs(), bound);
        clamped += usize::from(was_clamped);
        let obs = est.observe(score)?;
        records.push(StepRecord {
            t,
            score,
            q: obs.q,
            err: obs.err,
            q_star: None,
        });
    }
    Ok(InflationRun {
        dates: dates.to_vec(),
        y: y.to_vec(),
        yhat: yhat.to_vec(),
        records,
        clamped,
        ridge_steps: 0,
    })
}

/// Full pipeline from monthly index levels to calibrated bands.
pub fn run_inflation_experiment(
    cpi: &MonthlySeries,
    est: &mut dyn QuantileEstimator,
    opts: &ForecastOptions,
) -> Result<InflationRun> {
    let infl = yearly_inflation(cpi)?;
    let fc = rolling_forecasts(infl.values(), opts)?;
    let dates = &infl.dates()[fc.start..];
    let y = &infl.values()[fc.start..];
    let mut run = calibrate(dates, y, &fc.yhat, est)?;
    run.ridge_steps = fc.ridge_steps;
    Ok(run)
}
