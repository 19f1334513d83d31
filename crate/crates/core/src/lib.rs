//! Clustered switchback experiments under spatio-temporal interference.
//!
//! The crate covers the full pipeline: interference graphs and clusterings,
//! switchback designs, Markovian outcome simulation with an exact oracle for
//! the global average treatment effect, truncated Horvitz-Thompson and
//! difference-in-means estimators, closed-form bound calculators with
//! numerical checks, and a seeded replication harness.

pub mod bounds;
pub mod design;
pub mod exposure;
pub mod dynamics;
pub mod estimators;
pub mod fne;
pub mod graph;
pub mod harness;

pub use exposure::{ExposureProbabilities, ExposureSpec};
pub use bounds::{bias_bound, mse_bound, variance_bound, BoundError, BoundReport};
pub use design::{position_in_block, sample_switchback, DesignError, TimeBlocks, TreatmentMatrix};
pub use dynamics::{
    gate_oracle, simulate_panel, DynamicsError, Instance, KernelFamily, ObservedPanel, OutcomeModel,
    TabularKernel,
};
pub use estimators::{dim, dimbi, ht_truncated, DimbiOutput, EstimatorError, HtOutput};
pub use fne::FneThreshold;
pub use graph::{Clustering, DependenceEdges, GraphError, InterferenceGraph};
pub use harness::{run_experiment, ExperimentConfig, HarnessError, ReplicationReport, ReplicationRow};
