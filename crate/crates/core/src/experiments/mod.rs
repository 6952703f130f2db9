//! Experiment drivers behind the `grokedge` subcommands.
//!
//! Each driver reads a strict JSON config, fans its cells out over a rayon pool, and writes
//! `<out>/<experiment>/<cell-id>/trajectory.csv`, `<out>/<experiment>/summary.csv` and a few
//! SVG panels. CSV is the source of truth; the SVGs are previews.

mod common;
mod dynamics;
mod extensions;
mod heatmap;
mod lambda_sweep;
mod projection;
pub mod svg;
mod toy;
mod wendel;

pub use common::{
    dip_rise, late_log_slope, mean_stderr, stream_seed, train_loss_monotone, OptimizerSpec, Overrides, RunReport,
    Stream,
};
pub use dynamics::DynamicsConfig;
pub use extensions::{DistributionVariant, DistributionsGroup, ExtensionsConfig, QuantileGroup, TwoGaussiansGroup};
pub use heatmap::GrokHeatmapConfig;
pub use lambda_sweep::LambdaSweepConfig;
pub use projection::ProjectionConfig;
pub use toy::{ToyExperimentConfig, ToyRegression};
pub use wendel::WendelConfig;

use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Dynamics,
    LambdaSweep,
    GrokHeatmap,
    Wendel,
    Toy,
    ProjectionHist,
    Extensions,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Dynamics,
        Experiment::LambdaSweep,
        Experiment::GrokHeatmap,
        Experiment::Wendel,
        Experiment::Toy,
        Experiment::ProjectionHist,
        Experiment::Extensions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Dynamics => "dynamics",
            Experiment::LambdaSweep => "lambda-sweep",
            Experiment::GrokHeatmap => "grok-heatmap",
            Experiment::Wendel => "wendel",
            Experiment::Toy => "toy",
            Experiment::ProjectionHist => "projection-hist",
            Experiment::Extensions => "extensions",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    /// Pretty-printed default config.
    pub fn default_config(self) -> String {
        fn show<T: Serialize + Default>() -> String {
            serde_json::to_string_pretty(&T::default()).expect("configs serialize")
        }
        match self {
            Experiment::Dynamics => show::<DynamicsConfig>(),
            Experiment::LambdaSweep => show::<LambdaSweepConfig>(),
            Experiment::GrokHeatmap => show::<GrokHeatmapConfig>(),
            Experiment::Wendel => show::<WendelConfig>(),
            Experiment::Toy => show::<ToyExperimentConfig>(),
            Experiment::ProjectionHist => show::<ProjectionConfig>(),
            Experiment::Extensions => show::<ExtensionsConfig>(),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse a config document; unknown keys and type errors become [`Error::Config`] with the
/// offending line and column.
pub fn parse_config<T: DeserializeOwned>(json: &str) -> Result<T> {
    serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
}

/// Run `experiment` with the given config document (`None` for defaults) and write its
/// artifacts under `out/<experiment>/`.
pub fn run_experiment(experiment: Experiment, config: Option<&str>, out: &Path, overrides: &Overrides) -> Result<RunReport> {
    let dir = out.join(experiment.name());
    match experiment {
        Experiment::Dynamics => dynamics::run(load(config)?, &dir, overrides),
        Experiment::LambdaSweep => lambda_sweep::run(load(config)?, &dir, overrides),
        Experiment::GrokHeatmap => heatmap::run(load(config)?, &dir, overrides),
        Experiment::Wendel => wendel::run(load(config)?, &dir, overrides),
        Experiment::Toy => toy::run(load(config)?, &dir, overrides),
        Experiment::ProjectionHist => projection::run(load(config)?, &dir, overrides),
        Experiment::Extensions => extensions::run(load(config)?, &dir, overrides),
    }
}

fn load<T: DeserializeOwned + Default>(config: Option<&str>) -> Result<T> {
    config.map_or_else(|| Ok(T::default()), parse_config)
}
