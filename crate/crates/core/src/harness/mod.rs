//! Desk-scale instrumented training.
//!
//! Gaussian-blob datasets stand in for image benchmarks and a two-layer
//! perceptron stands in for a convolutional backbone. Every run is metered
//! and produces a [`RegimeRecord`](crate::cost_model::RegimeRecord).

mod dataset;
mod encoder;
mod grid;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost_model::{LabelingCostModel, Method};
use crate::error::{Error, Result};
use crate::power_meter::{Component, SourceSpec};

pub use dataset::{augment, make_dataset, make_test_set, subsample_regime, DatasetParams, Regime, SyntheticDataset};
pub use encoder::{
    normalize_backward, normalize_rows, Encoder, EncoderCache, EncoderGrad, EncoderShape, HeadLoss, LinearHead,
    Momentum,
};
pub use grid::{
    aggregate, run_grid, write_aggregate_csv, write_failures_jsonl, Aggregate, CellFailure, GridOutput,
    AGGREGATE_HEADER,
};
pub use train::{train_encoder, Benchmark, Meter, TrainOutcome};

/// How the meter's clock advances during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Each optimizer step advances session time by a fixed amount.
    /// Deterministic; energy is linear in the number of steps.
    Virtual { seconds_per_step: f64 },
    /// A background sampler on the wall clock.
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeterConfig {
    pub sources: Vec<SourceSpec>,
    pub interval_s: f64,
    pub clock: Clock,
}

impl Default for MeterConfig {
    fn default() -> Self {
        Self {
            sources: vec![
                SourceSpec::Synthetic { component: Component::Cpu, watts: 65.0 },
                SourceSpec::Synthetic { component: Component::Gpu, watts: 250.0 },
                SourceSpec::Memory(16.0),
            ],
            interval_s: 0.1,
            clock: Clock::Virtual { seconds_per_step: 0.05 },
        }
    }
}

/// Per-method softmax temperatures. Baseline has none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    pub simclr: f64,
    pub supcon: f64,
    pub semi_supervised: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self { simclr: 0.1, supcon: 0.5, semi_supervised: 0.1 }
    }
}

impl Temperatures {
    pub fn for_method(&self, method: Method) -> Option<f64> {
        match method {
            Method::Baseline => None,
            Method::SimCLR => Some(self.simclr),
            Method::SupCon => Some(self.supcon),
            Method::SemiSupervised => Some(self.semi_supervised),
        }
    }
}

/// Everything about a run except the method and the data regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fractions of `epochs` at which the learning rate is multiplied by
    /// `decay_factor`.
    pub decay_milestones: Vec<f64>,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub temperatures: Temperatures,
    pub pseudo_label_threshold: f64,
    pub seeds: Vec<u64>,
    pub meter: MeterConfig,
    pub labeling: LabelingCostModel,
    pub dataset: DatasetParams,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub augment_sigma: f64,
    pub test_per_class: usize,
    pub knn_k: usize,
    pub knn_tau: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            momentum: 0.9,
            decay_milestones: vec![0.7, 0.8, 0.9],
            decay_factor: 0.1,
            batch_size: 32,
            temperatures: Temperatures::default(),
            pseudo_label_threshold: 0.9,
            seeds: vec![1, 2, 3, 4, 5],
            meter: MeterConfig::default(),
            labeling: LabelingCostModel::default(),
            dataset: DatasetParams::default(),
            hidden_dim: 32,
            embedding_dim: 8,
            augment_sigma: 0.05,
            test_per_class: 50,
            knn_k: crate::knn::DEFAULT_K,
            knn_tau: crate::knn::DEFAULT_TAU,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be > 0, got {v}")))
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        positive("learning_rate", self.learning_rate)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.decay_milestones.iter().any(|m| !(*m > 0.0 && *m < 1.0)) {
            return Err(Error::invalid("decay milestones must lie strictly inside (0, 1)"));
        }
        if self.decay_milestones.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("decay milestones must be sorted"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::invalid(format!("decay_factor must lie in (0, 1], got {}", self.decay_factor)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        let t = &self.temperatures;
        positive("temperatures.simclr", t.simclr)?;
        positive("temperatures.supcon", t.supcon)?;
        positive("temperatures.semi_supervised", t.semi_supervised)?;
        if !(0.0..=1.0).contains(&self.pseudo_label_threshold) {
            return Err(Error::invalid("pseudo_label_threshold must lie in [0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.meter.sources.is_empty() {
            return Err(Error::invalid("the meter needs at least one source"));
        }
        if let Clock::Virtual { seconds_per_step } = self.meter.clock {
            positive("meter.clock.seconds_per_step", seconds_per_step)?;
        }
        self.labeling.validate()?;
        self.dataset.validate()?;
        if self.hidden_dim == 0 || self.embedding_dim == 0 {
            return Err(Error::invalid("encoder dimensions must be positive"));
        }
        if !(self.augment_sigma.is_finite() && self.augment_sigma >= 0.0) {
            return Err(Error::invalid("augment_sigma must be >= 0"));
        }
        if self.test_per_class == 0 || self.knn_k == 0 {
            return Err(Error::invalid("test_per_class and knn_k must be positive"));
        }
        positive("knn_tau", self.knn_tau)
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        EncoderShape { input: self.dataset.dim, hidden: self.hidden_dim, output: self.embedding_dim }
    }

    /// Rewrites relative trace paths so they are relative to `dir`.
    fn resolve_paths(&mut self, dir: &Path) {
        for s in &mut self.meter.sources {
            if let SourceSpec::Trace(p) = s {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
    }
}

/// One cell of an experiment grid, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub data_fraction: f64,
    /// Defaults to 1 for Baseline and SupCon, 0 for SimCLR and 0.5 for
    /// the semi-supervised mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_fraction: Option<f64>,
    #[serde(flatten)]
    pub settings: Settings,
}

pub const DEFAULT_SEMI_LABEL_FRACTION: f64 = 0.5;

impl ExperimentConfig {
    pub fn new(method: Method, data_fraction: f64, settings: Settings) -> Self {
        Self { method, data_fraction, label_fraction: None, settings }
    }

    pub fn label_fraction(&self) -> f64 {
        self.label_fraction
            .or(self.method.fixed_label_fraction())
            .unwrap_or(DEFAULT_SEMI_LABEL_FRACTION)
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::invalid(format!("data_fraction must lie in (0, 1], got {}", self.data_fraction)));
        }
        let lf = self.label_fraction();
        if let (Some(fixed), Some(given)) = (self.method.fixed_label_fraction(), self.label_fraction) {
            if fixed != given {
                return Err(Error::invalid(format!("{} always uses label_fraction {fixed}", self.method)));
            }
        }
        if self.method == Method::SemiSupervised && !(lf > 0.0 && lf <= 1.0) {
            return Err(Error::invalid(format!("semi-supervised label_fraction must lie in (0, 1], got {lf}")));
        }
        Ok(())
    }

    pub fn temperature(&self) -> Option<f64> {
        self.settings.temperatures.for_method(self.method)
    }
}

/// A methods × data-fractions grid sharing one set of [`Settings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub methods: Vec<Method>,
    pub data_fractions: Vec<f64>,
    #[serde(default = "default_semi_label_fraction")]
    pub semi_label_fraction: f64,
    #[serde(flatten)]
    pub settings: Settings,
}

fn default_semi_label_fraction() -> f64 {
    DEFAULT_SEMI_LABEL_FRACTION
}

impl Default for ExperimentPlan {
    /// All four methods at 20%, 50% and 100% of the data.
    fn default() -> Self {
        Self {
            methods: vec![Method::Baseline, Method::SimCLR, Method::SupCon, Method::SemiSupervised],
            data_fractions: vec![0.2, 0.5, 1.0],
            semi_label_fraction: DEFAULT_SEMI_LABEL_FRACTION,
            settings: Settings::default(),
        }
    }
}

impl ExperimentPlan {
    /// Reads a JSON plan. Relative trace paths are taken relative to the
    /// file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut plan: Self = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            plan.settings.resolve_paths(dir);
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.data_fractions.is_empty() {
            return Err(Error::invalid("a plan needs at least one method and one data fraction"));
        }
        self.configs().iter().try_for_each(ExperimentConfig::validate)
    }

    /// Method-major expansion into grid cells.
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &df in &self.data_fractions {
                let mut c = ExperimentConfig::new(method, df, self.settings.clone());
                if method == Method::SemiSupervised {
                    c.label_fraction = Some(self.semi_label_fraction);
                }
                out.push(c);
            }
        }
        out
    }
}
