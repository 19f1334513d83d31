//! JSON experiment configurations.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::design::TimeBlocks;
use crate::dynamics::{
    multi_unit_instance, nonstationary_single_instance, stationary_instance, ClippedWalkFamily, Instance,
    KernelFamily, OutcomeModel,
};
use crate::exposure::ExposureSpec;
use crate::fne::FneThreshold;
use crate::graph::{Clustering, InterferenceGraph};

/// One design and a list of estimators evaluated on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub instance: InstanceSpec,
    pub design: DesignSpec,
    pub estimators: Vec<EstimatorSpec>,
    pub n_instances: usize,
    pub n_draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// `α ≡ 0`, `β = 1 + 0.2 U(0,1)`, no interference.
    Stationary {
        n_units: usize,
        horizon: usize,
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// Single unit with drift and periodically zeroed `β`.
    Nonstationary {
        horizon: usize,
        m: usize,
        ell_opt: usize,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// Line graph with `h`-hop interference.
    MultiUnit {
        n_units: usize,
        horizon: usize,
        m: usize,
        #[serde(default = "default_h")]
        h: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// Deterministic clipped walk with constant `α`, `β`.
    Walk {
        graph: GraphSpec,
        horizon: usize,
        m: usize,
        #[serde(default = "default_p_control")]
        p_control: f64,
        #[serde(default = "default_p_treated")]
        p_treated: f64,
        alpha: f64,
        beta: f64,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        clamp: bool,
    },
}

fn default_rho() -> f64 {
    0.25
}

fn default_h() -> usize {
    2
}

fn default_p_control() -> f64 {
    0.1
}

fn default_p_treated() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    Empty { n_units: usize },
    Complete { n_units: usize },
    Line { n_units: usize, h: usize },
    Lattice { side: usize, h: usize },
}

impl GraphSpec {
    pub fn n_units(&self) -> usize {
        match *self {
            GraphSpec::Empty { n_units } | GraphSpec::Complete { n_units } | GraphSpec::Line { n_units, .. } => n_units,
            GraphSpec::Lattice { side, .. } => side * side,
        }
    }

    pub fn build(&self) -> InterferenceGraph {
        match *self {
            GraphSpec::Empty { n_units } => InterferenceGraph::empty(n_units),
            GraphSpec::Complete { n_units } => InterferenceGraph::complete(n_units),
            GraphSpec::Line { n_units, h } => InterferenceGraph::line(n_units, h),
            GraphSpec::Lattice { side, h } => InterferenceGraph::lattice(side, h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClusteringSpec {
    Singleton,
    Whole,
    /// Contiguous runs of `width` units.
    Segments { width: usize },
    /// `s x s` squares on a square lattice.
    Lattice { s: usize },
    /// Random 1-hop-max clustering with its own seed.
    OneHopMax { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub clustering: ClusteringSpec,
    pub block_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    Ht {
        r: usize,
        #[serde(default)]
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Dim {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Dimbi {
        b: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Ht { label: Some(l), .. }
            | EstimatorSpec::Dim { label: Some(l) }
            | EstimatorSpec::Dimbi { label: Some(l), .. } => l.clone(),
            EstimatorSpec::Ht { r, .. } => format!("HT(r={r})"),
            EstimatorSpec::Dim { .. } => "DIM".into(),
            EstimatorSpec::Dimbi { b, .. } => format!("DIMBI(b={b})"),
        }
    }

    pub fn radius(&self) -> Option<usize> {
        match self {
            EstimatorSpec::Ht { r, .. } => Some(*r),
            _ => None,
        }
    }

    pub fn burn_in(&self) -> Option<usize> {
        match self {
            EstimatorSpec::Dim { .. } => Some(0),
            EstimatorSpec::Dimbi { b, .. } => Some(*b),
            EstimatorSpec::Ht { .. } => None,
        }
    }
}

impl InstanceSpec {
    pub fn n_units(&self) -> usize {
        match self {
            InstanceSpec::Stationary { n_units, .. } | InstanceSpec::MultiUnit { n_units, .. } => *n_units,
            InstanceSpec::Nonstationary { .. } => 1,
            InstanceSpec::Walk { graph, .. } => graph.n_units(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            InstanceSpec::Stationary { horizon, .. }
            | InstanceSpec::Nonstationary { horizon, .. }
            | InstanceSpec::MultiUnit { horizon, .. }
            | InstanceSpec::Walk { horizon, .. } => *horizon,
        }
    }

    pub fn graph(&self) -> InterferenceGraph {
        match self {
            InstanceSpec::Stationary { n_units, .. } => InterferenceGraph::empty(*n_units),
            InstanceSpec::Nonstationary { .. } => InterferenceGraph::empty(1),
            InstanceSpec::MultiUnit { n_units, h, .. } => InterferenceGraph::line(*n_units, *h),
            InstanceSpec::Walk { graph, .. } => graph.build(),
        }
    }

    /// Generates one instance, consuming `rng` in the generator's documented
    /// order. The deterministic `walk` generator draws nothing.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Instance, HarnessError> {
        let with_sigma = |inst: Instance, sigma: Option<f64>| -> Result<Instance, HarnessError> {
            match sigma {
                Some(s) => {
                    let outcomes = inst.outcomes().clone().with_noise(s);
                    Ok(inst.with_outcomes(outcomes)?)
                }
                None => Ok(inst),
            }
        };
        match *self {
            InstanceSpec::Stationary {
                n_units,
                horizon,
                m,
                sigma,
            } => with_sigma(stationary_instance(n_units, horizon, m, rng)?, sigma),
            InstanceSpec::Nonstationary {
                horizon,
                m,
                ell_opt,
                rho,
                sigma,
            } => with_sigma(nonstationary_single_instance(horizon, m, ell_opt, rho, rng)?, sigma),
            InstanceSpec::MultiUnit {
                n_units,
                horizon,
                m,
                h,
                sigma,
            } => with_sigma(multi_unit_instance(n_units, horizon, m, h, rng)?, sigma),
            InstanceSpec::Walk {
                ref graph,
                horizon,
                m,
                p_control,
                p_treated,
                alpha,
                beta,
                sigma,
                clamp,
            } => Ok(Instance::new(
                graph.build(),
                KernelFamily::ClippedWalk(ClippedWalkFamily::new(m, p_control, p_treated)?),
                OutcomeModel::constant(graph.n_units(), horizon, m, alpha, beta)
                    .with_noise(sigma)
                    .with_clamp(clamp),
            )?),
        }
    }
}

impl ExperimentConfig {
    pub fn n_units(&self) -> usize {
        self.instance.n_units()
    }

    pub fn horizon(&self) -> usize {
        self.instance.horizon()
    }

    pub fn block_length(&self) -> usize {
        self.design.block_length
    }

    pub fn time_blocks(&self) -> Result<TimeBlocks, HarnessError> {
        Ok(TimeBlocks::new(self.horizon(), self.design.block_length)?)
    }

    pub fn clustering(&self) -> Result<Clustering, HarnessError> {
        let n = self.n_units();
        let c = match self.design.clustering {
            ClusteringSpec::Singleton => Clustering::singleton(n),
            ClusteringSpec::Whole => Clustering::whole(n),
            ClusteringSpec::Segments { width } => Clustering::line_segments(n, width)?,
            ClusteringSpec::Lattice { s } => {
                let side = n.isqrt();
                if side * side != n {
                    return Err(HarnessError::Config(format!(
                        "lattice clustering needs a square number of units, got {n}"
                    )));
                }
                Clustering::lattice_uniform(side, s)?
            }
            ClusteringSpec::OneHopMax { seed } => {
                Clustering::one_hop_max(&self.instance.graph(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
            }
        };
        Ok(c)
    }

    pub fn exposure_spec(&self, estimator: &EstimatorSpec) -> Result<Option<ExposureSpec>, HarnessError> {
        match *estimator {
            EstimatorSpec::Ht { r, delta, .. } => {
                let delta = FneThreshold::new(delta).map_err(|e| HarnessError::Config(e.to_string()))?;
                Ok(Some(ExposureSpec::new(r, delta, self.design.block_length, self.clustering()?)?))
            }
            _ => Ok(None),
        }
    }

    /// Checks every invariant that can be checked without generating an
    /// instance.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.n_instances == 0 || self.n_draws == 0 {
            return bad("n_instances and n_draws must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required".into());
        }
        if self.n_units() == 0 || self.horizon() == 0 {
            return bad("n_units and horizon must be at least 1".into());
        }
        if self.design.block_length == 0 {
            return bad("block_length must be at least 1".into());
        }
        if let InstanceSpec::Nonstationary { ell_opt: 0, .. } = self.instance {
            return bad("ell_opt must be at least 1".into());
        }
        if let InstanceSpec::Walk { graph: GraphSpec::Lattice { h: 0, .. } | GraphSpec::Line { h: 0, .. }, .. } =
            self.instance
        {
            return bad("graph hop radius must be at least 1".into());
        }
        let clustering = self.clustering()?;
        clustering.check_compatible(&self.instance.graph())?;
        for est in &self.estimators {
            match *est {
                EstimatorSpec::Ht { .. } => {
                    self.exposure_spec(est)?;
                }
                EstimatorSpec::Dim { .. } | EstimatorSpec::Dimbi { .. } => {
                    if self.n_units() != 1 {
                        return bad(format!("{} needs a single-unit instance", est.label()));
                    }
                    let b = est.burn_in().unwrap_or(0);
                    if b >= self.design.block_length {
                        return bad(format!(
                            "burn-in {b} must be smaller than the block length {}",
                            self.design.block_length
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<ExperimentConfig>),
    One(Box<ExperimentConfig>),
}

/// Parses a single config object or an array of them, and validates each.
pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let configs = match serde_json::from_str::<OneOrMany>(text) {
        Ok(OneOrMany::Many(v)) => v,
        Ok(OneOrMany::One(c)) => vec![*c],
        // Untagged errors are uninformative; retry as a single object.
        Err(_) => vec![serde_json::from_str::<ExperimentConfig>(text)?],
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

pub fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_configs(&text)
}
