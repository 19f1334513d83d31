//! Forward simulation of panels.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{gather, DynamicsError, Instance, ObservedPanel};
use crate::design::TreatmentMatrix;

/// A simulated panel together with the hidden state path, for diagnostics
/// that need to look behind the estimator's back.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    /// State indices (`s + m`), row-major `N x T`.
    pub states: Vec<usize>,
    pub panel: ObservedPanel,
}

/// Simulates `(W, Y)` for a fixed design. Units are processed in index order;
/// for each unit the stream supplies the initial draw and then, per round,
/// one noise draw (skipped when `σ = 0`) and one transition draw (skipped
/// after the last round).
pub fn simulate_panel<R: Rng + ?Sized>(
    instance: &Instance,
    w: &TreatmentMatrix,
    rng: &mut R,
) -> Result<ObservedPanel, DynamicsError> {
    Ok(simulate_trajectory(instance, w, rng)?.panel)
}

pub fn simulate_trajectory<R: Rng + ?Sized>(
    instance: &Instance,
    w: &TreatmentMatrix,
    rng: &mut R,
) -> Result<LatentTrajectory, DynamicsError> {
    instance.check_design(w)?;
    let n = instance.n_units();
    let horizon = instance.horizon();
    let sigma = instance.outcomes().noise_sigma();
    let kernels = instance.kernels();
    let outcomes = instance.outcomes();
    let mut y = Vec::with_capacity(n * horizon);
    let mut states = Vec::with_capacity(n * horizon);
    let mut nb = Vec::new();
    for i in 0..n {
        let nbhd = instance.graph().closed_neighborhood(i);
        let mut s = draw_initial(instance.initial(), rng.random::<f64>());
        for t in 1..=horizon {
            gather(w, nbhd, t, &mut nb);
            states.push(s);
            let mut v = outcomes.mean(i, t, s, &nb);
            if sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += sigma * z;
            }
            y.push(v);
            if t < horizon {
                s = kernels.sample_next(i, t, &nb, s, rng.random::<f64>());
            }
        }
    }
    Ok(LatentTrajectory {
        states,
        panel: ObservedPanel::new(w.clone(), y)?,
    })
}

fn draw_initial(f: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (x, &p) in f.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = x;
            if u < acc {
                return x;
            }
        }
    }
    last
}
