use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    config_error, EstimatorConfig, ExponentiatedGradient, IndependentTracker, ProjectedGradient,
    ProjectedTracker, QuantileEstimator,
};
use crate::error::{Error, Result};

/// Builds one kind of estimator from a config.
pub trait EstimatorFactory: Send + Sync {
    /// Canonical method name.
    fn name(&self) -> &'static str;

    /// Alternative names accepted on the command line.
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    /// Every violated constraint on `cfg`, empty when valid.
    fn validate(&self, cfg: &EstimatorConfig) -> Vec<String>;

    fn create(&self, cfg: &EstimatorConfig) -> Result<Box<dyn QuantileEstimator>>;
}

/// Name-keyed collection of estimator factories.
#[derive(Clone, Default)]
pub struct EstimatorRegistry {
    factories: BTreeMap<String, Arc<dyn EstimatorFactory>>,
    aliases: BTreeMap<String, String>,
}

impl EstimatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `independent`, `projected_tracker`, `pg` and `eg`.
    pub fn with_builtin() -> Self {
        let mut reg = Self::new();
        reg.register(Arc::new(IndependentFactory));
        reg.register(Arc::new(TrackerFactory));
        reg.register(Arc::new(PgFactory));
        reg.register(Arc::new(EgFactory));
        reg
    }

    pub fn register(&mut self, factory: Arc<dyn EstimatorFactory>) {
        let name = factory.name().to_string();
        for alias in factory.aliases() {
            self.aliases.insert(alias.to_string(), name.clone());
        }
        self.factories.insert(name, factory);
    }

    /// Canonical name for `name` or one of its aliases.
    pub fn resolve(&self, name: &str) -> Option<&str> {
        if let Some((k, _)) = self.factories.get_key_value(name) {
            return Some(k.as_str());
        }
        self.aliases.get(name).map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn EstimatorFactory>> {
        let canonical = self.resolve(name)?;
        self.factories.get(canonical).cloned()
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn validate(&self, cfg: &EstimatorConfig) -> Vec<String> {
        match self.get(&cfg.method) {
            Some(f) => f.validate(cfg),
            None => vec![format!(
                "unknown method '{}' (known: {})",
                cfg.method,
                self.names().join(", ")
            )],
        }
    }

    pub fn build(&self, cfg: &EstimatorConfig) -> Result<Box<dyn QuantileEstimator>> {
        let factory = self.get(&cfg.method).ok_or_else(|| {
            Error::Config(format!(
                "unknown method '{}' (known: {})",
                cfg.method,
                self.names().join(", ")
            ))
        })?;
        let violations = factory.validate(cfg);
        if !violations.is_empty() {
            return Err(config_error(factory.name(), violations));
        }
        factory.create(cfg)
    }
}

struct IndependentFactory;

impl EstimatorFactory for IndependentFactory {
    fn name(&self) -> &'static str {
        "independent"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["tracker"]
    }
    fn validate(&self, cfg: &EstimatorConfig) -> Vec<String> {
        IndependentTracker::validate(cfg)
    }
    fn create(&self, cfg: &EstimatorConfig) -> Result<Box<dyn QuantileEstimator>> {
        Ok(Box::new(IndependentTracker::new(cfg)?))
    }
}

struct TrackerFactory;

impl EstimatorFactory for TrackerFactory {
    fn name(&self) -> &'static str {
        "projected_tracker"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["tracker-proj", "tracker_proj"]
    }
    fn validate(&self, cfg: &EstimatorConfig) -> Vec<String> {
        ProjectedTracker::validate(cfg)
    }
    fn create(&self, cfg: &EstimatorConfig) -> Result<Box<dyn QuantileEstimator>> {
        Ok(Box::new(ProjectedTracker::new(cfg)?))
    }
}

struct PgFactory;

impl EstimatorFactory for PgFactory {
    fn name(&self) -> &'static str {
        "pg"
    }
    fn validate(&self, cfg: &EstimatorConfig) -> Vec<String> {
        ProjectedGradient::validate(cfg)
    }
    fn create(&self, cfg: &EstimatorConfig) -> Result<Box<dyn QuantileEstimator>> {
        Ok(Box::new(ProjectedGradient::new(cfg)?))
    }
}

struct EgFactory;

impl EstimatorFactory for EgFactory {
    fn name(&self) -> &'static str {
        "eg"
    }
    fn validate(&self, cfg: &EstimatorConfig) -> Vec<String> {
        ExponentiatedGradient::validate(cfg)
    }
    fn create(&self, cfg: &EstimatorConfig) -> Result<Box<dyn QuantileEstimator>> {
        Ok(Box::new(ExponentiatedGradient::new(cfg)?))
    }
}
