//! Synthetic monthly price index in FRED CSV layout.
//!
//! The monthly log change is a piecewise-linear annual inflation path
//! (shaped loosely after post-war US history: 1950s calm, 1970s and early
//! 1980s peaks, 2009 dip, 2022 spike) plus AR(1) noise. It is test data, not
//! official statistics.

use std::path::Path;

use chrono::{Months, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::CliResult;
use crate::output::write_atomic;

pub const DEFAULT_SEED: u64 = 1950;

/// (decimal year, annual inflation rate)
const ANCHORS: &[(f64, f64)] = &[
    (1950.0, 0.01),
    (1951.2, 0.08),
    (1953.0, 0.01),
    (1957.5, 0.035),
    (1961.0, 0.01),
    (1966.0, 0.03),
    (1970.0, 0.058),
    (1972.0, 0.033),
    (1974.9, 0.12),
    (1976.9, 0.055),
    (1980.2, 0.145),
    (1983.0, 0.03),
    (1987.0, 0.04),
    (1990.8, 0.062),
    (1998.5, 0.016),
    (2005.5, 0.035),
    (2008.6, 0.05),
    (2009.5, -0.015),
    (2011.8, 0.038),
    (2015.3, 0.0),
    (2018.5, 0.028),
    (2020.4, 0.003),
    (2022.5, 0.09),
    (2025.5, 0.027),
];

fn trend(year: f64) -> f64 {
    let i = ANCHORS.partition_point(|(y, _)| *y <= year);
    if i == 0 {
        return ANCHORS[0].1;
    }
    if i == ANCHORS.len() {
        return ANCHORS[i - 1].1;
    }
    let (y0, r0) = ANCHORS[i - 1];
    let (y1, r1) = ANCHORS[i];
    r0 + (r1 - r0) * (year - y0) / (y1 - y0)
}

/// Monthly observations from January 1950 for `months` months, starting at
/// index level 23.51 and rounded to three decimals.
pub fn generate(seed: u64, months: usize) -> Vec<(NaiveDate, f64)> {
    let start = NaiveDate::from_ymd_opt(1950, 1, 1).expect("valid date");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut level = 23.51f64;
    let mut noise = 0.0;
    let mut out = Vec::with_capacity(months);
    for m in 0..months {
        let date = start + Months::new(m as u32);
        out.push((date, (level * 1000.0).round() / 1000.0));
        let year = 1950.0 + m as f64 / 12.0;
        let eps: f64 = StandardNormal.sample(&mut rng);
        noise = 0.3 * noise + 0.0015 * eps;
        level *= ((1.0 + trend(year)).ln() / 12.0 + noise).exp();
    }
    out
}

/// Months from January 1950 through June 2025.
pub const SAMPLE_MONTHS: usize = 75 * 12 + 6;

pub fn write_sample(path: &Path, seed: u64, months: usize) -> CliResult<()> {
    let rows = generate(seed, months);
    write_atomic(path, |w| {
        writeln!(w, "DATE,CPIAUCSL")?;
        for (d, v) in &rows {
            writeln!(w, "{},{v:.3}", d.format("%Y-%m-%d"))?;
        }
        Ok(())
    })
}
