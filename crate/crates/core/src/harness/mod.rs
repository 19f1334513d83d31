//! Replication studies: configuration, seeded loops, aggregation, presets
//! and result files.

mod config;
mod output;
mod presets;
mod run;
mod seeds;

use std::path::PathBuf;

use thiserror::Error;

use crate::design::DesignError;
use crate::dynamics::DynamicsError;
use crate::estimators::EstimatorError;
use crate::exposure::ExposureError;
use crate::graph::GraphError;

pub use config::{
    load_configs, parse_configs, ClusteringSpec, DesignSpec, EstimatorSpec, ExperimentConfig, GraphSpec, InstanceSpec,
};
pub use output::{emit_results, loglog_slope, results_csv, sidecar_json, CSV_HEADER};
pub use presets::{
    default_sizes, named_preset, preset_multi_unit, preset_mse_vs_m, preset_single_unit, scaling_dims,
    single_unit_lengths, LogBase, PresetOptions, Scaling, SingleScenario, SingleUnitLengths, DESK_SCALE,
    PRESET_NAMES,
};
pub use run::{run_experiment, run_experiments, ReplicationReport, ReplicationRow};
pub use seeds::{draw_rng, instance_rng, seed_key, splitmix64};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Exposure(#[from] ExposureError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("log-log fit: {0}")]
    Fit(String),
}

impl HarnessError {
    /// True when the failure means an estimator is undefined for the design
    /// (as opposed to a malformed request).
    pub fn is_estimator_undefined(&self) -> bool {
        matches!(self, HarnessError::Estimator(_))
    }
}
