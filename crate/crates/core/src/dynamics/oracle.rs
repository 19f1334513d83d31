//! Exact expectations by forward evolution of per-unit state distributions.

use rayon::prelude::*;

use super::{gather, DynamicsError, Instance};
use crate::design::TreatmentMatrix;

/// `f_it` for every unit and round under a fixed design, indexed
/// `[unit][t - 1][state]`.
pub fn exact_state_distributions(
    instance: &Instance,
    w: &TreatmentMatrix,
) -> Result<Vec<Vec<Vec<f64>>>, DynamicsError> {
    instance.check_design(w)?;
    Ok((0..instance.n_units())
        .into_par_iter()
        .map(|i| {
            let nbhd = instance.graph().closed_neighborhood(i);
            let mut nb = Vec::with_capacity(nbhd.len());
            let mut out = Vec::with_capacity(instance.horizon());
            let mut f = instance.initial().to_vec();
            for t in 1..=instance.horizon() {
                if t > 1 {
                    gather(w, nbhd, t - 1, &mut nb);
                    let mut next = vec![0.0; f.len()];
                    instance.kernels().propagate(i, t - 1, &nb, &f, &mut next);
                    f = next;
                }
                out.push(f.clone());
            }
            out
        })
        .collect())
}

/// `E[Y_it | W]`, row-major `N x T`.
pub fn exact_conditional_means(instance: &Instance, w: &TreatmentMatrix) -> Result<Vec<f64>, DynamicsError> {
    let dists = exact_state_distributions(instance, w)?;
    let mut means = Vec::with_capacity(instance.n_units() * instance.horizon());
    let mut nb = Vec::new();
    for (i, per_round) in dists.iter().enumerate() {
        let nbhd = instance.graph().closed_neighborhood(i);
        for (k, f) in per_round.iter().enumerate() {
            let t = k + 1;
            gather(w, nbhd, t, &mut nb);
            means.push(expectation(instance, i, t, f, &nb));
        }
    }
    Ok(means)
}

fn expectation(instance: &Instance, i: usize, t: usize, f: &[f64], nb: &[u8]) -> f64 {
    f.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * instance.outcomes().mean(i, t, s, nb))
        .sum()
}

/// Means of unit `i` at rounds `1..=T` under the constant policy `a`.
fn constant_policy_means(instance: &Instance, i: usize, a: u8) -> Vec<f64> {
    let nb = vec![a; instance.graph().closed_neighborhood(i).len()];
    let mut f = instance.initial().to_vec();
    let mut next = vec![0.0; f.len()];
    let mut means = Vec::with_capacity(instance.horizon());
    for t in 1..=instance.horizon() {
        if t > 1 {
            instance.kernels().propagate(i, t - 1, &nb, &f, &mut next);
            std::mem::swap(&mut f, &mut next);
        }
        means.push(expectation(instance, i, t, &f, &nb));
    }
    means
}

/// `E_D[Y_it | W = a·1]`.
pub fn mean_outcome_exact(instance: &Instance, i: usize, t: usize, a: u8) -> f64 {
    assert!(i < instance.n_units() && (1..=instance.horizon()).contains(&t));
    constant_policy_means(instance, i, u8::from(a != 0))[t - 1]
}

/// `E_D[Y_it | W = a·1]` for all units, row-major `N x T`.
pub fn exact_mean_outcomes(instance: &Instance, a: u8) -> Vec<f64> {
    let a = u8::from(a != 0);
    let rows: Vec<Vec<f64>> = (0..instance.n_units())
        .into_par_iter()
        .map(|i| constant_policy_means(instance, i, a))
        .collect();
    rows.concat()
}

/// Exact global average treatment effect. Per-unit sums are computed in
/// parallel and added in unit order, so the result does not depend on the
/// thread count.
pub fn gate_oracle(instance: &Instance) -> f64 {
    let per_unit: Vec<f64> = (0..instance.n_units())
        .into_par_iter()
        .map(|i| {
            let treated = constant_policy_means(instance, i, 1);
            let control = constant_policy_means(instance, i, 0);
            treated.iter().zip(&control).map(|(a, b)| a - b).sum::<f64>()
        })
        .collect();
    per_unit.iter().sum::<f64>() / (instance.n_units() * instance.horizon()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        clipped_random_walk_kernel, stationary_instance, ClippedWalkFamily, KernelFamily, OutcomeModel,
    };
    use crate::graph::InterferenceGraph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deterministic_walk(horizon: usize, alpha: f64, beta: f64) -> Instance {
        let fam = KernelFamily::arm_kernels(
            clipped_random_walk_kernel(1, 0.0).unwrap(),
            clipped_random_walk_kernel(1, 1.0).unwrap(),
        )
        .unwrap();
        Instance::new(
            InterferenceGraph::empty(1),
            fam,
            OutcomeModel::constant(1, horizon, 1, alpha, beta),
        )
        .unwrap()
    }

    #[test]
    fn flat_outcome_mean_is_alpha() {
        let inst = Instance::new(
            InterferenceGraph::line(3, 1),
            KernelFamily::ClippedWalk(ClippedWalkFamily::new(2, 0.1, 0.9).unwrap()),
            OutcomeModel::constant(3, 7, 2, 0.42, 0.0),
        )
        .unwrap();
        for t in 1..=7 {
            assert!((mean_outcome_exact(&inst, 1, t, 1) - 0.42).abs() < 1e-14);
            assert!((mean_outcome_exact(&inst, 2, t, 0) - 0.42).abs() < 1e-14);
        }
        assert!(gate_oracle(&inst).abs() < 1e-14);
    }

    #[test]
    fn first_round_uses_initial_state() {
        let inst = deterministic_walk(4, 0.3, 0.5);
        assert!((mean_outcome_exact(&inst, 0, 1, 1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn deterministic_chain_reaches_top() {
        let inst = deterministic_walk(3, 0.0, 1.0);
        assert_eq!(mean_outcome_exact(&inst, 0, 3, 1), 1.0);
        assert_eq!(mean_outcome_exact(&inst, 0, 2, 1), 1.0);
        assert_eq!(mean_outcome_exact(&inst, 0, 3, 0), -1.0);
    }

    #[test]
    fn hand_evolved_gate() {
        // μ = (1 + s)/2: α = β = 1/2 with m = 1.
        let inst = deterministic_walk(2, 0.5, 0.5);
        assert!((gate_oracle(&inst) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn arm_symmetric_model_has_zero_gate() {
        let k = clipped_random_walk_kernel(2, 0.3).unwrap();
        let inst = Instance::new(
            InterferenceGraph::line(4, 1),
            KernelFamily::arm_kernels(k.clone(), k).unwrap(),
            OutcomeModel::constant(4, 9, 2, 0.1, 0.7),
        )
        .unwrap();
        assert_eq!(gate_oracle(&inst), 0.0);
    }

    #[test]
    fn conditional_means_match_constant_policy() {
        let inst = stationary_instance(2, 30, 4, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let ones = TreatmentMatrix::constant(1, 2, 30);
        let cond = exact_conditional_means(&inst, &ones).unwrap();
        assert_eq!(cond, exact_mean_outcomes(&inst, 1));
        let dists = exact_state_distributions(&inst, &ones).unwrap();
        for per_round in &dists {
            for f in per_round {
                assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_gate_is_positive() {
        let inst = stationary_instance(1, 200, 30, &mut ChaCha8Rng::seed_from_u64(2024)).unwrap();
        let gate = gate_oracle(&inst);
        assert!(gate > 0.0 && gate < 2.4, "{gate}");
    }
}
