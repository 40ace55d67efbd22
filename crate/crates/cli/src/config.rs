//! Experiment configuration: a TOML file plus command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nested_conformal::estimators::{default_mu, Init};
use nested_conformal::forecast::{ForecastOptions, WindowMode, DEFAULT_WINDOW, INFLATION_BOUND};
use nested_conformal::synthetic::{WalkConfig, SYNTHETIC_BOUND};
use nested_conformal::{CoverageGrid, EstimatorConfig, EstimatorRegistry};
use serde::Deserialize;

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    /// Rolling-metric window in steps.
    pub dt: Option<usize>,
    /// Write every `stride`-th step to time-series outputs.
    pub stride: Option<usize>,
    /// `"start:end:step"` or a comma-separated list.
    pub levels: Option<String>,
    pub alphas: Option<Vec<f64>>,
    pub score_bound: Option<f64>,
    #[serde(default)]
    pub walk: WalkSection,
    pub methods: Option<Vec<MethodSection>>,
    #[serde(default)]
    pub inflation: InflationSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub z1: Option<f64>,
    pub sigma: Option<f64>,
    pub width: Option<f64>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub method: String,
    /// Output name; defaults to the canonical method name.
    pub label: Option<String>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub min_gap: Option<f64>,
    pub err_from_shadow: Option<bool>,
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflationSection {
    pub data: Option<PathBuf>,
    pub value_column: Option<String>,
    pub window: Option<usize>,
    /// `"targets"` or `"observations"`.
    pub window_counts: Option<String>,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub methods: Option<Vec<String>>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub levels: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Synthetic,
    Inflation,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Synthetic => "synthetic",
            Experiment::Inflation => "inflation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodPlan {
    pub label: String,
    pub config: EstimatorConfig,
}

#[derive(Debug, Clone)]
pub struct InflationPlan {
    pub data: PathBuf,
    pub value_column: String,
    pub forecast: ForecastOptions,
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone)]
pub struct Plan {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub dt: usize,
    pub stride: usize,
    pub grid: CoverageGrid,
    pub methods: Vec<MethodPlan>,
    pub walk: WalkConfig,
    pub inflation: Option<InflationPlan>,
}

/// Parse TOML text; syntax and type errors carry line and column.
pub fn parse_config(text: &str, origin: &Path) -> CliResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        CliError::Config(format!(
            "{}:{line}:{col}: {}",
            origin.display(),
            e.message().trim_end()
        ))
    })
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_config(&text, path)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, col)
}

/// `"0.1:0.9:0.1"` (inclusive range) or `"0.05,0.1,0.5"`.
pub fn parse_levels(spec: &str, bound: f64) -> Result<CoverageGrid, String> {
    let spec = spec.trim();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("'{}' is not a number", s.trim()))
    };
    let grid = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range '{spec}' must be start:end:step"));
        }
        CoverageGrid::from_range(num(parts[0])?, num(parts[1])?, num(parts[2])?, bound)
    } else {
        let alphas = spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
        CoverageGrid::new(alphas, bound)
    };
    grid.map_err(|e| e.to_string())
}

impl ExperimentConfig {
    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.seeds = Some(vec![s]);
        }
        if let Some(o) = &ov.out {
            self.out_dir = Some(o.clone());
        }
        if let Some(d) = &ov.data {
            self.inflation.data = Some(d.clone());
        }
        if let Some(l) = &ov.levels {
            self.levels = Some(l.clone());
            self.alphas = None;
        }
        if let Some(names) = &ov.methods {
            let registry = EstimatorRegistry::with_builtin();
            let existing = self.methods.take().unwrap_or_default();
            let canon = |n: &str| registry.resolve(n).unwrap_or(n).to_string();
            self.methods = Some(
                names
                    .iter()
                    .map(|n| {
                        existing
                            .iter()
                            .find(|m| canon(&m.method) == canon(n))
                            .cloned()
                            .unwrap_or_else(|| MethodSection {
                                method: n.clone(),
                                ..Default::default()
                            })
                    })
                    .collect(),
            );
        }
        if let Some(methods) = self.methods.as_mut() {
            for m in methods {
                if ov.eta.is_some() {
                    m.eta = ov.eta;
                }
                if ov.mu.is_some() {
                    m.mu = ov.mu;
                }
            }
        }
    }

    /// Resolve defaults and check every constraint. `Err` lists each
    /// violation prefixed by its path in the config.
    pub fn resolve(&self, expected: Option<Experiment>) -> Result<Plan, Vec<String>> {
        let mut v = Vec::new();
        let experiment = match (self.experiment.as_deref(), expected) {
            (None, Some(e)) => e,
            (None, None) => Experiment::Synthetic,
            (Some(s), _) => match s {
                "synthetic" => Experiment::Synthetic,
                "inflation" => Experiment::Inflation,
                other => {
                    v.push(format!(
                        "experiment: unknown experiment '{other}' (synthetic, inflation)"
                    ));
                    expected.unwrap_or(Experiment::Synthetic)
                }
            },
        };
        if let Some(e) = expected {
            if e != experiment {
                v.push(format!(
                    "experiment: config declares '{}' but the command runs '{}'",
                    experiment.as_str(),
                    e.as_str()
                ));
            }
        }

        let bound = self.score_bound.unwrap_or(match experiment {
            Experiment::Synthetic => SYNTHETIC_BOUND,
            Experiment::Inflation => INFLATION_BOUND,
        });
        if !(bound.is_finite() && bound > 0.0) {
            v.push(format!("score_bound: must be positive, got {bound}"));
        }
        let default_levels = match experiment {
            Experiment::Synthetic => "0.1:0.9:0.1",
            Experiment::Inflation => "0.01:0.99:0.01",
        };
        let safe_bound = if bound.is_finite() && bound > 0.0 {
            bound
        } else {
            1.0
        };
        let grid = match (&self.levels, &self.alphas) {
            (Some(_), Some(_)) => {
                v.push("levels: give either levels or alphas, not both".into());
                None
            }
            (_, Some(a)) => CoverageGrid::new(a.clone(), safe_bound)
                .map_err(|e| v.push(format!("alphas: {e}")))
                .ok(),
            (l, None) => parse_levels(l.as_deref().unwrap_or(default_levels), safe_bound)
                .map_err(|e| v.push(format!("levels: {e}")))
                .ok(),
        };

        let seeds = self.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            v.push("seeds: at least one seed is required".into());
        }
        let dup_seeds = seeds.len() - seeds.iter().collect::<BTreeSet<_>>().len();
        if dup_seeds > 0 {
            v.push("seeds: duplicate seeds".into());
        }
        let dt = self.dt.unwrap_or(match experiment {
            Experiment::Synthetic => 10_000,
            Experiment::Inflation => 12,
        });
        if dt == 0 {
            v.push("dt: must be at least 1".into());
        }
        let stride = self.stride.unwrap_or(1);
        if stride == 0 {
            v.push("stride: must be at least 1".into());
        }

        let d = WalkConfig::default();
        let w = &self.walk;
        let walk = WalkConfig {
            a: w.a.unwrap_or(d.a),
            b: w.b.unwrap_or(d.b),
            z1: w.z1.unwrap_or(d.z1),
            sigma: w.sigma.unwrap_or(d.sigma),
            width: w.width.unwrap_or(d.width),
            horizon: w.horizon.unwrap_or(d.horizon),
            seed: 0,
        };
        if experiment == Experiment::Synthetic {
            for msg in walk.violations(bound) {
                v.push(format!("walk: {msg}"));
            }
        }

        let inflation = if experiment == Experiment::Inflation {
            let i = &self.inflation;
            let mode = match i.window_counts.as_deref().unwrap_or("targets") {
                "targets" => WindowMode::Targets,
                "observations" => WindowMode::Observations,
                other => {
                    v.push(format!(
                        "inflation.window_counts: '{other}' is not 'targets' or 'observations'"
                    ));
                    WindowMode::Targets
                }
            };
            let forecast = ForecastOptions {
                window: i.window.unwrap_or(DEFAULT_WINDOW),
                mode,
            };
            if forecast.span() < 4 {
                v.push(format!(
                    "inflation.window: span of {} months leaves no regression target",
                    forecast.span()
                ));
            }
            match &i.data {
                Some(data) => Some(InflationPlan {
                    data: data.clone(),
                    value_column: i.value_column.clone().unwrap_or_else(|| "CPIAUCSL".into()),
                    forecast,
                }),
                None => {
                    v.push("inflation.data: a data file is required (or pass --data)".into());
                    None
                }
            }
        } else {
            None
        };

        let registry = EstimatorRegistry::with_builtin();
        let mut methods = Vec::new();
        match &self.methods {
            None => v.push("methods: at least one method is required".into()),
            Some(list) if list.is_empty() => {
                v.push("methods: at least one method is required".into())
            }
            Some(list) => {
                let mut labels = BTreeSet::new();
                for (idx, m) in list.iter().enumerate() {
                    let path = format!("methods[{idx}]");
                    let Some(canonical) = registry.resolve(&m.method) else {
                        v.push(format!(
                            "{path}.method: unknown method '{}' (known: {})",
                            m.method,
                            registry.names().join(", ")
                        ));
                        continue;
                    };
                    let label = m.label.clone().unwrap_or_else(|| canonical.to_string());
                    if label.is_empty()
                        || !label
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                    {
                        v.push(format!(
                            "{path}.label: '{label}' must be non-empty [A-Za-z0-9._-]"
                        ));
                    }
                    if !labels.insert(label.clone()) {
                        v.push(format!(
                            "{path}: duplicate method label '{label}' (set label)"
                        ));
                    }
                    let Some(grid) = &grid else { continue };
                    let mut cfg = EstimatorConfig::new(canonical, grid.clone());
                    if let Some(eta) = m.eta {
                        cfg.eta = eta;
                    }
                    if canonical == "eg" {
                        cfg.mu = Some(m.mu.unwrap_or_else(|| default_mu(grid.len())));
                    } else if m.mu.is_some() {
                        cfg.mu = m.mu;
                    }
                    cfg.min_gap = m.min_gap.unwrap_or(0.0);
                    cfg.err_from_shadow = m.err_from_shadow.unwrap_or(false);
                    if let Some(q) = &m.init {
                        cfg.init = Init::Explicit(q.clone());
                    }
                    for msg in registry.validate(&cfg) {
                        v.push(format!("{path}: {msg}"));
                    }
                    methods.push(MethodPlan { label, config: cfg });
                }
            }
        }

        if !v.is_empty() {
            return Err(v);
        }
        Ok(Plan {
            experiment,
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            seeds,
            dt,
            stride,
            grid: grid.expect("no violations"),
            methods,
            walk,
            inflation,
        })
    }
}

/// Load, override and resolve; violations become one config error.
pub fn plan_from_file(path: &Path, ov: &Overrides, expected: Experiment) -> CliResult<Plan> {
    let mut cfg = load_config(path)?;
    cfg.apply(ov);
    cfg.resolve(Some(expected))
        .map_err(|v| CliError::Config(v.join("\n")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        parse_config(text, Path::new("test.toml")).unwrap()
    }

    const MINIMAL: &str = "[[methods]]\nmethod = \"eg\"\n";

    #[test]
    fn minimal_config_is_valid() {
        let plan = parse(MINIMAL).resolve(None).unwrap();
        assert_eq!(plan.experiment, Experiment::Synthetic);
        assert_eq!(plan.grid.len(), 9);
        assert_eq!(plan.seeds, vec![0]);
        assert_eq!(plan.methods[0].config.mu, Some(default_mu(9)));
    }

    #[test]
    fn mu_violation_is_reported_with_path() {
        let cfg = parse("[[methods]]\nmethod = \"eg\"\nmu = 0.5\n");
        let v = cfg.resolve(None).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("methods[0]: "));
        assert!(v[0].contains("mu must be < 1/(K+1)"));
    }

    #[test]
    fn unsorted_alphas_are_named() {
        let cfg = parse("alphas = [0.5, 0.1]\n[[methods]]\nmethod = \"pg\"\n");
        let v = cfg.resolve(None).unwrap_err();
        assert!(v
            .iter()
            .any(|m| m.starts_with("alphas:") && m.contains("strictly increasing")));
    }

    #[test]
    fn empty_methods_rejected() {
        let v = parse("methods = []\n").resolve(None).unwrap_err();
        assert!(v[0].starts_with("methods:"));
    }

    #[test]
    fn every_violation_is_collected() {
        let cfg = parse(
            "dt = 0\nseeds = []\n[walk]\nsigma = -1.0\n[[methods]]\nmethod = \"sgd\"\n[[methods]]\nmethod = \"pg\"\neta = -1.0\n",
        );
        let v = cfg.resolve(None).unwrap_err();
        for prefix in [
            "dt:",
            "seeds:",
            "walk:",
            "methods[0].method:",
            "methods[1]:",
        ] {
            assert!(
                v.iter().any(|m| m.starts_with(prefix)),
                "missing {prefix} in {v:?}"
            );
        }
    }

    #[test]
    fn parse_error_has_line_and_column() {
        let err = parse_config("dt = 10\nseeds = [1, \n", Path::new("bad.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml:"), "{msg}");
        assert!(matches!(err, CliError::Config(_)));

        let err = parse_config("dt = 1\nbogus = 3\n", Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("x.toml:2:1"), "{err}");
    }

    #[test]
    fn levels_grammar() {
        let g = parse_levels("0.1:0.9:0.1", 1.0).unwrap();
        assert_eq!(g.alphas(), &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(
            parse_levels("0.05, 0.5", 1.0).unwrap().alphas(),
            &[0.05, 0.5]
        );
        assert_eq!(parse_levels("0.01:0.99:0.01", 1.0).unwrap().len(), 99);
        assert!(parse_levels("0.1:0.9", 1.0).is_err());
        assert!(parse_levels("a,b", 1.0).is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = parse(
            "seeds = [1, 2]\n[[methods]]\nmethod = \"pg\"\neta = 0.3\n[[methods]]\nmethod = \"eg\"\n",
        );
        cfg.apply(&Overrides {
            seed: Some(9),
            methods: Some(vec!["pg".into(), "tracker-proj".into()]),
            levels: Some("0.2,0.4".into()),
            ..Default::default()
        });
        let plan = cfg.resolve(None).unwrap();
        assert_eq!(plan.seeds, vec![9]);
        assert_eq!(plan.grid.alphas(), &[0.2, 0.4]);
        let labels: Vec<_> = plan.methods.iter().map(|m| m.label.as_str()).collect();
        assert_eq!(labels, vec!["pg", "projected_tracker"]);
        assert_eq!(plan.methods[0].config.eta, 0.3);
    }

    #[test]
    fn inflation_requires_data() {
        let v = parse(MINIMAL)
            .resolve(Some(Experiment::Inflation))
            .unwrap_err();
        assert!(v.iter().any(|m| m.starts_with("inflation.data")));
        let mut cfg = parse(MINIMAL);
        cfg.apply(&Overrides {
            data: Some("x.csv".into()),
            ..Default::default()
        });
        let plan = cfg.resolve(Some(Experiment::Inflation)).unwrap();
        assert_eq!(plan.grid.len(), 99);
        assert_eq!(plan.grid.bound(), INFLATION_BOUND);
    }

    #[test]
    fn experiment_mismatch_is_a_violation() {
        let cfg = parse("experiment = \"inflation\"\n[inflation]\ndata = \"x.csv\"\n[[methods]]\nmethod = \"pg\"\n");
        assert!(cfg.resolve(Some(Experiment::Synthetic)).is_err());
        assert!(cfg.resolve(Some(Experiment::Inflation)).is_ok());
    }
}
