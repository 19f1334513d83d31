//! Seeded replication loop and aggregation.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{EstimatorSpec, ExperimentConfig};
use super::seeds::{draw_rng, instance_rng};
use super::HarnessError;
use crate::design::sample_switchback;
use crate::dynamics::{gate_oracle, simulate_panel, ObservedPanel};
use crate::estimators::{dimbi, ht_truncated, EstimatorError};
use crate::exposure::{ExposureProbabilities, ExposureSpec};
use crate::graph::InterferenceGraph;

/// Aggregate over every (instance, draw) pair of one config for one
/// estimator. Errors are `estimate - GATE` of the instance the draw came
/// from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub scenario: String,
    pub estimator: String,
    pub n_units: usize,
    pub horizon: usize,
    pub ell: usize,
    pub r: Option<usize>,
    pub b: Option<usize>,
    pub n_instances: usize,
    pub n_draws: usize,
    /// Mean GATE over instances.
    pub gate: f64,
    pub mse: f64,
    pub bias: f64,
    pub bias_ci95: f64,
    /// Population variance of the errors, so `mse = bias² + variance`.
    pub variance: f64,
    pub retained_frac: f64,
    pub dropped_draws: usize,
    pub n_effective: usize,
    pub seed: u64,
    /// Smallest exact exposure probability, for HT rows.
    pub min_exposure_prob: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub configs: Vec<ExperimentConfig>,
    pub rows: Vec<ReplicationRow>,
}

impl ReplicationReport {
    pub fn extend(&mut self, other: ReplicationReport) {
        self.configs.extend(other.configs);
        self.rows.extend(other.rows);
    }

    pub fn row(&self, scenario: &str, estimator: &str) -> Option<&ReplicationRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.estimator == estimator)
    }
}

enum Prepared {
    Ht(ExposureSpec, ExposureProbabilities),
    Dimbi(usize),
}

/// One draw's estimate and retained share, `None` when the estimator is
/// undefined on that draw.
type Outcome = Option<(f64, f64)>;

fn evaluate(
    est: &Prepared,
    panel: &ObservedPanel,
    g: &InterferenceGraph,
    block_length: usize,
) -> Result<Outcome, HarnessError> {
    match est {
        Prepared::Ht(spec, probs) => {
            let out = ht_truncated(panel, g, spec, probs)?;
            Ok(Some((out.delta_hat, out.retained_fraction)))
        }
        Prepared::Dimbi(b) => match dimbi(panel, block_length, *b) {
            Ok(out) => {
                let used = (out.n_treated_used + out.n_control_used) as f64 / panel.horizon() as f64;
                Ok(Some((out.delta_hat, used)))
            }
            Err(EstimatorError::InsufficientArmData { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        },
    }
}

/// Runs `n_instances x n_draws` replications of one config. Instances and
/// draws are processed in parallel on the current rayon pool; the fold over
/// results runs in (instance, draw) order, so the report does not depend on
/// the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReplicationReport, HarnessError> {
    cfg.validate()?;
    let g = cfg.instance.graph();
    let clustering = cfg.clustering()?;
    let blocks = cfg.time_blocks()?;
    let horizon = cfg.horizon();
    let prepared: Vec<Prepared> = cfg
        .estimators
        .iter()
        .map(|est| match est {
            EstimatorSpec::Ht { .. } => {
                let spec = cfg.exposure_spec(est)?.expect("HT has an exposure spec");
                let probs = ExposureProbabilities::compute(&g, &spec, horizon)?;
                if let Some(unit) = (0..g.n_units()).find(|&i| probs.p_min(i) <= 0.0) {
                    let round = (1..=horizon).find(|&t| probs.get(unit, t, 0) <= 0.0).unwrap_or(1);
                    return Err(EstimatorError::ZeroProbability { unit, round }.into());
                }
                Ok(Prepared::Ht(spec, probs))
            }
            _ => Ok(Prepared::Dimbi(est.burn_in().expect("difference in means has a burn-in"))),
        })
        .collect::<Result<_, HarnessError>>()?;

    let per_instance: Vec<(f64, Vec<Vec<Outcome>>)> = (0..cfg.n_instances)
        .into_par_iter()
        .map(|k| {
            let instance = cfg.instance.generate(&mut instance_rng(cfg.seed, k as u64))?;
            let gate = gate_oracle(&instance);
            let draws: Vec<Vec<Outcome>> = (0..cfg.n_draws)
                .into_par_iter()
                .map(|j| {
                    let mut rng = draw_rng(cfg.seed, k as u64, j as u64);
                    let w = sample_switchback(&clustering, &blocks, &mut rng);
                    let panel = simulate_panel(&instance, &w, &mut rng)?;
                    prepared
                        .iter()
                        .map(|est| evaluate(est, &panel, &g, blocks.block_length()))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, HarnessError>>()?;
            Ok((gate, draws))
        })
        .collect::<Result<_, HarnessError>>()?;

    let mean_gate = per_instance.iter().map(|(g, _)| g).sum::<f64>() / cfg.n_instances as f64;
    let rows = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(e, est)| {
            let mut errors = Vec::with_capacity(cfg.n_instances * cfg.n_draws);
            let mut retained = 0.0;
            for (gate, draws) in &per_instance {
                for d in draws {
                    if let Some((value, kept)) = d[e] {
                        errors.push(value - gate);
                        retained += kept;
                    }
                }
            }
            let total = cfg.n_instances * cfg.n_draws;
            let stats = ErrorStats::new(&errors);
            ReplicationRow {
                scenario: cfg.scenario.clone(),
                estimator: est.label(),
                n_units: cfg.n_units(),
                horizon,
                ell: blocks.block_length(),
                r: est.radius(),
                b: est.burn_in(),
                n_instances: cfg.n_instances,
                n_draws: cfg.n_draws,
                gate: mean_gate,
                mse: stats.mse,
                bias: stats.bias,
                bias_ci95: stats.ci95,
                variance: stats.variance,
                retained_frac: retained / errors.len() as f64,
                dropped_draws: total - errors.len(),
                n_effective: errors.len(),
                seed: cfg.seed,
                min_exposure_prob: match &prepared[e] {
                    Prepared::Ht(_, probs) => Some(probs.global_min()),
                    Prepared::Dimbi(_) => None,
                },
            }
        })
        .collect();
    Ok(ReplicationReport {
        configs: vec![cfg.clone()],
        rows,
    })
}

/// [`run_experiment`] over a list of configs, concatenated in order.
pub fn run_experiments(cfgs: &[ExperimentConfig]) -> Result<ReplicationReport, HarnessError> {
    let mut report = ReplicationReport::default();
    for cfg in cfgs {
        report.extend(run_experiment(cfg)?);
    }
    Ok(report)
}

struct ErrorStats {
    mse: f64,
    bias: f64,
    variance: f64,
    ci95: f64,
}

impl ErrorStats {
    fn new(errors: &[f64]) -> Self {
        let n = errors.len() as f64;
        let bias = errors.iter().sum::<f64>() / n;
        let ss: f64 = errors.iter().map(|e| (e - bias).powi(2)).sum();
        let variance = ss / n;
        let ci95 = if errors.len() > 1 {
            1.96 * (ss / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            f64::NAN
        };
        Self {
            mse: errors.iter().map(|e| e * e).sum::<f64>() / n,
            bias,
            variance,
            ci95,
        }
    }
}
