mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use switchback_core::dynamics::{
    clipped_random_walk_kernel, evolve_distribution, exact_state_distributions, mean_outcome_exact,
    point_mass_at_zero, simulate_trajectory, stationary_instance, ClippedWalkFamily,
};
use switchback_core::{
    gate_oracle, sample_switchback, simulate_panel, Clustering, Instance, InterferenceGraph, KernelFamily,
    OutcomeModel, TimeBlocks, TreatmentMatrix,
};

use common::{chi2_critical_001, chi2_gof, mean_and_se};

#[test]
fn monte_carlo_means_match_constant_policy_oracle() {
    let inst = stationary_instance(1, 30, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let ones = TreatmentMatrix::constant(1, 1, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let runs: Vec<Vec<f64>> = (0..20_000)
        .map(|_| simulate_panel(&inst, &ones, &mut rng).unwrap().outcomes().to_vec())
        .collect();
    for t in 1..=30 {
        let ys: Vec<f64> = runs.iter().map(|r| r[t - 1]).collect();
        let (mean, se) = mean_and_se(&ys);
        let exact = mean_outcome_exact(&inst, 0, t, 1);
        assert!((mean - exact).abs() <= 3.0 * se, "t = {t}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn gate_matches_monte_carlo_difference() {
    let inst = Instance::new(
        InterferenceGraph::line(3, 1),
        KernelFamily::ClippedWalk(ClippedWalkFamily::new(2, 0.1, 0.9).unwrap()),
        OutcomeModel::constant(3, 12, 2, 0.3, 0.8),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let avg = |w: &TreatmentMatrix, rng: &mut ChaCha8Rng| {
        let p = simulate_panel(&inst, w, rng).unwrap();
        p.outcomes().iter().sum::<f64>() / 36.0
    };
    let treated = TreatmentMatrix::constant(1, 3, 12);
    let control = TreatmentMatrix::constant(0, 3, 12);
    let diffs: Vec<f64> = (0..20_000).map(|_| avg(&treated, &mut rng) - avg(&control, &mut rng)).collect();
    let (mean, se) = mean_and_se(&diffs);
    let gate = gate_oracle(&inst);
    assert!((mean - gate).abs() <= 3.0 * se, "{mean} vs {gate} (se {se})");
}

#[test]
fn evolved_law_matches_simulated_histogram() {
    let m = 3;
    let inst = Instance::new(
        InterferenceGraph::empty(1),
        KernelFamily::ClippedWalk(ClippedWalkFamily::new(m, 0.1, 0.9).unwrap()),
        OutcomeModel::constant(1, 9, m, 0.0, 1.0).with_noise(0.0),
    )
    .unwrap();
    // Alternating arms so the law at round 9 mixes both kernels.
    let w = TreatmentMatrix::from_rows(&[vec![1, 1, 0, 1, 0, 0, 1, 1, 0]]).unwrap();
    let up = clipped_random_walk_kernel(m, 0.9).unwrap();
    let down = clipped_random_walk_kernel(m, 0.1).unwrap();
    let kernels: Vec<_> = (1..9).map(|t| if w.get(0, t) == 1 { &up } else { &down }).collect();
    let law = evolve_distribution(&point_mass_at_zero(2 * m + 1), kernels.iter().copied());
    let exact = exact_state_distributions(&inst, &w).unwrap();
    for (t, f) in law.iter().enumerate() {
        for (a, b) in f.iter().zip(&exact[0][t]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    let target = law.last().unwrap();
    let mut counts = vec![0u64; 2 * m + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50_000 {
        let tr = simulate_trajectory(&inst, &w, &mut rng).unwrap();
        counts[tr.states[8]] += 1;
    }
    // Drop cells with expected count below 5 and renormalize.
    let support: Vec<usize> = (0..=2 * m).filter(|&x| target[x] * 50_000.0 >= 5.0).collect();
    let obs: Vec<u64> = support.iter().map(|&x| counts[x]).collect();
    let total: f64 = support.iter().map(|&x| target[x]).sum();
    let probs: Vec<f64> = support.iter().map(|&x| target[x] / total).collect();
    let stat = chi2_gof(&obs, &probs);
    assert!(stat < chi2_critical_001(support.len() - 1), "chi-square {stat} over {support:?}");
}

#[test]
fn units_are_conditionally_independent_given_w() {
    let m = 1;
    let inst = Instance::new(
        InterferenceGraph::line(2, 1),
        KernelFamily::ClippedWalk(ClippedWalkFamily::new(m, 0.3, 0.8).unwrap()),
        OutcomeModel::constant(2, 6, m, 0.0, 1.0).with_noise(0.0),
    )
    .unwrap();
    let w = TreatmentMatrix::from_rows(&[vec![1, 0, 1, 1, 0, 1], vec![0, 0, 1, 0, 1, 1]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 60_000u64;
    let mut joint = [[0u64; 3]; 3];
    for _ in 0..n {
        let p = simulate_panel(&inst, &w, &mut rng).unwrap();
        let a = (p.outcome(0, 5) + 1.0).round() as usize;
        let b = (p.outcome(1, 5) + 1.0).round() as usize;
        joint[a][b] += 1;
    }
    let rows: Vec<u64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..3).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    let mut cells = 0;
    for a in 0..3 {
        for b in 0..3 {
            let e = rows[a] as f64 * cols[b] as f64 / n as f64;
            if e > 0.0 {
                stat += (joint[a][b] as f64 - e).powi(2) / e;
                cells += 1;
            }
        }
    }
    assert_eq!(cells, 9);
    assert!(stat < chi2_critical_001(4), "chi-square {stat}");
}

#[test]
fn fixed_design_and_seed_reproduce_bit_for_bit() {
    let inst = stationary_instance(3, 40, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let w = sample_switchback(
        &Clustering::singleton(3),
        &TimeBlocks::new(40, 7).unwrap(),
        &mut ChaCha8Rng::seed_from_u64(10),
    );
    let a = simulate_panel(&inst, &w, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    let b = simulate_panel(&inst, &w, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    assert_eq!(a, b);
}
