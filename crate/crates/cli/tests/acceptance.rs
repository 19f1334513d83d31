//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Pass criterion numbers to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use switchback_core::bounds::{
    check_cond_cov, check_tv_decay, instance_mixing_profile, optimal_radius,
    small_walk_instance, JointPmf,
};
use switchback_core::dynamics::{
    clipped_random_walk_kernel, mean_outcome_exact, stationary_instance, ClippedWalkFamily, TabularKernel,
};
use switchback_core::exposure::{
    binomial_tail_lower_bound, exposure_indicator, exposure_lower_bound, exposure_probability_exact,
    min_exposure_probability,
};
use switchback_core::harness::{draw_rng, loglog_slope, named_preset, run_experiments, PresetOptions};
use switchback_core::{
    dim, dimbi, gate_oracle, ht_truncated, sample_switchback, simulate_panel, variance_bound, Clustering,
    EstimatorError, ExposureProbabilities, ExposureSpec, FneThreshold, Instance, InterferenceGraph, KernelFamily,
    ObservedPanel, OutcomeModel, TreatmentMatrix,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance and the standard error of that estimate.
fn variance_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

/// HT estimates over `draws` designs; draw `k` uses its own stream.
fn ht_draws(inst: &Instance, spec: &ExposureSpec, draws: usize, seed: u64) -> Vec<f64> {
    let horizon = inst.horizon();
    let probs = ExposureProbabilities::compute(inst.graph(), spec, horizon).unwrap();
    let blocks = spec.time_blocks(horizon).unwrap();
    (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = draw_rng(seed, 0, k as u64);
            let w = sample_switchback(&spec.clustering, &blocks, &mut rng);
            let panel = simulate_panel(inst, &w, &mut rng).unwrap();
            ht_truncated(&panel, inst.graph(), spec, &probs).unwrap().delta_hat
        })
        .collect()
}

fn oracle_consistency() -> Verdict {
    let inst = stationary_instance(1, 50, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let quiet = inst.outcomes().clone().with_noise(0.0);
    let inst = inst.with_outcomes(quiet).unwrap();
    let ones = TreatmentMatrix::constant(1, 1, 50);
    let runs: Vec<Vec<f64>> = (0..20_000u64)
        .into_par_iter()
        .map(|k| simulate_panel(&inst, &ones, &mut draw_rng(1, 0, k)).unwrap().outcomes().to_vec())
        .collect();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for t in 1..=50 {
        let ys: Vec<f64> = runs.iter().map(|r| r[t - 1]).collect();
        let (mean, se) = mean_and_se(&ys);
        let gap = (mean - mean_outcome_exact(&inst, 0, t, 1)).abs();
        if gap > 3.0 * se + 1e-12 {
            bad.push(t);
        }
        if se > 0.0 {
            worst = worst.max(gap / se);
        }
    }
    verdict(bad.is_empty(), format!("max |MC - exact| = {worst:.2} SE over 50 rounds; failing rounds {bad:?}"))
}

fn full_window_unbiasedness() -> Verdict {
    let inst = stationary_instance(1, 20, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let spec = ExposureSpec::new(19, FneThreshold::EXACT, 20, Clustering::singleton(1)).unwrap();
    let (mean, se) = mean_and_se(&ht_draws(&inst, &spec, 100_000, 2));
    let gate = gate_oracle(&inst);
    let gap = (mean - gate).abs();
    verdict(gap <= 3.0 * se, format!("E[HT] = {mean:.5}, GATE = {gate:.5}, gap {:.2} SE", gap / se))
}

fn bias_bound_check() -> Verdict {
    let inst = small_walk_instance(1, 40, 3).unwrap();
    let profile = instance_mixing_profile(&inst, 2000).unwrap();
    let gate = gate_oracle(&inst);
    let mut pass = true;
    let mut parts = vec![format!("t_mix {:.3}", profile.t_mix)];
    for r in [0usize, 2, 4, 8] {
        let spec = ExposureSpec::new(r, FneThreshold::EXACT, 4, Clustering::singleton(1)).unwrap();
        let (mean, se) = mean_and_se(&ht_draws(&inst, &spec, 100_000, 3 + r as u64));
        let bias = (mean - gate).abs();
        let bound = switchback_core::bias_bound(r, profile.t_mix);
        pass &= bias <= bound + 3.0 * se;
        parts.push(format!("r={r}: |bias| {bias:.4} vs {bound:.4} (se {se:.4})"));
    }
    verdict(pass, parts.join("; "))
}

fn exposure_exactness() -> Verdict {
    let g = InterferenceGraph::lattice(4, 1);
    let (ell, horizon, draws) = (2usize, 8usize, 100_000usize);
    let cells = [(0usize, 1usize), (0, horizon), (5, 1), (5, horizon)];
    let mut configs = Vec::new();
    for delta in [0.0, 0.2, 0.4] {
        for r in [0, ell, 2 * ell] {
            for (name, clustering) in [
                ("singleton", Clustering::singleton(16)),
                ("lattice", Clustering::lattice_uniform(4, 2).unwrap()),
            ] {
                configs.push((delta, r, name, clustering));
            }
        }
    }
    let results: Vec<(usize, f64, String)> = configs
        .par_iter()
        .enumerate()
        .map(|(c, (delta, r, name, clustering))| {
            let spec = ExposureSpec::new(*r, FneThreshold::new(*delta).unwrap(), ell, clustering.clone()).unwrap();
            let blocks = spec.time_blocks(horizon).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(400 + c as u64);
            let mut hits = [[0u32; 2]; 4];
            for _ in 0..draws {
                let w = sample_switchback(clustering, &blocks, &mut rng);
                for (k, &(i, t)) in cells.iter().enumerate() {
                    for a in [0u8, 1] {
                        hits[k][a as usize] += u32::from(exposure_indicator(&w, &g, i, t, a, &spec));
                    }
                }
            }
            let mut failures = 0;
            let mut worst = 0.0f64;
            for (k, &(i, t)) in cells.iter().enumerate() {
                for a in [0u8, 1] {
                    let p = exposure_probability_exact(&g, &spec, horizon, i, t, a).unwrap();
                    let se = (p * (1.0 - p) / draws as f64).sqrt();
                    let gap = (hits[k][a as usize] as f64 / draws as f64 - p).abs();
                    if gap > 3.0 * se {
                        failures += 1;
                    }
                    worst = worst.max(gap / se);
                }
            }
            (failures, worst, format!("delta={delta} r={r} {name}"))
        })
        .collect();
    let failures: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let failing: Vec<&str> = results.iter().filter(|r| r.0 > 0).map(|r| r.2.as_str()).collect();
    verdict(
        failures == 0,
        format!("{} cells, worst gap {worst:.2} SE, failing configs {failing:?}", results.len() * 8),
    )
}

fn entropy_lower_bound() -> Verdict {
    let (ell, horizon) = (2usize, 12usize);
    let mut cases = 0;
    let mut violations = Vec::new();
    for delta in [0.0, 0.1, 0.2, 0.4] {
        for d in 1..=6usize {
            let tolerated = delta * d as f64;
            if (tolerated - tolerated.round()).abs() > 1e-9 {
                continue;
            }
            for weight in [1usize, 2] {
                let labels: Vec<usize> = (0..d * weight).map(|u| u / weight).collect();
                let g = InterferenceGraph::complete(d * weight);
                let clustering = Clustering::from_labels(&labels);
                for spans in 0..=2usize {
                    let r = spans * ell;
                    let spec = ExposureSpec::new(r, FneThreshold::new(delta).unwrap(), ell, clustering.clone()).unwrap();
                    let exact = min_exposure_probability(&g, &spec, horizon, 0).unwrap();
                    let bound = exposure_lower_bound(d, r, ell, delta);
                    cases += 1;
                    if exact < bound {
                        violations.push(format!(
                            "delta={delta} d={d} w={weight} r/l={spans}: {exact:.4} < {bound:.4} (binomial form {:.4})",
                            binomial_tail_lower_bound(d, r, ell, delta)
                        ));
                    }
                }
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!("{cases} cases, {} violations: {}", violations.len(), violations.join("; ")),
    )
}

fn cond_cov_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reports: Vec<_> = (0..50).map(|_| check_cond_cov(&JointPmf::random(&mut rng, 4)).unwrap()).collect();
    let worst = reports.iter().map(|r| r.measured).fold(0.0, f64::max);
    verdict(
        reports.iter().all(|r| r.passed),
        format!("50 laws, max |lhs - rhs| = {worst:.2e}"),
    )
}

fn tv_decay() -> Verdict {
    let m = 3;
    let shared = clipped_random_walk_kernel(m, 0.9).unwrap();
    let before = clipped_random_walk_kernel(m, 0.1).unwrap();
    let profile = switchback_core::dynamics::estimate_tmix(&shared, 2000).unwrap();
    let mut top = vec![0.0; 2 * m + 1];
    top[2 * m] = 1.0;
    let mut bottom = vec![0.0; 2 * m + 1];
    bottom[0] = 1.0;
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for window in 5..=20 {
        let ks: Vec<TabularKernel> = std::iter::repeat_n(before.clone(), 10)
            .chain(std::iter::repeat_n(shared.clone(), window))
            .collect();
        let other: Vec<TabularKernel> = std::iter::repeat_n(shared.clone(), 10 + window).collect();
        for (f, g) in [(&top, &bottom), (&bottom, &top), (&top, &top)] {
            let report = check_tv_decay(&ks, &other, f, g, window, &profile).unwrap();
            pass &= report.passed;
            worst = worst.min(report.slack);
        }
    }
    verdict(
        pass,
        format!(
            "windows 5..=20, t_mix {:.3}, prefactor {:.2}, min slack {worst:.2e}",
            profile.t_mix, profile.prefactor
        ),
    )
}

fn variance_sweep() -> Verdict {
    let horizon = 40;
    let mut points = Vec::new();
    for (n, name) in [(1usize, "singleton"), (9, "singleton"), (9, "whole")] {
        for sigma in [0.0, 1.0] {
            for tuned in [false, true] {
                points.push((n, name, sigma, tuned));
            }
        }
    }
    let results: Vec<(bool, String)> = points
        .par_iter()
        .enumerate()
        .map(|(k, &(n, name, sigma, tuned))| {
            let g = if n == 1 {
                InterferenceGraph::empty(1)
            } else {
                InterferenceGraph::lattice(3, 1)
            };
            let inst = Instance::new(
                g.clone(),
                KernelFamily::ClippedWalk(ClippedWalkFamily::new(3, 0.1, 0.9).unwrap()),
                OutcomeModel::constant(n, horizon, 3, 0.5, 0.5).with_noise(sigma).with_clamp(true),
            )
            .unwrap();
            let t_mix = instance_mixing_profile(&inst, 2000).unwrap().t_mix;
            let len = if tuned {
                optimal_radius(t_mix, n, horizon)
            } else {
                (t_mix.ceil() as usize).max(1)
            };
            let clustering = if name == "whole" {
                Clustering::whole(n)
            } else {
                Clustering::singleton(n)
            };
            let spec = ExposureSpec::new(len, FneThreshold::EXACT, len, clustering).unwrap();
            let probs = ExposureProbabilities::compute(&g, &spec, horizon).unwrap();
            let bound = variance_bound(&g, &spec, horizon, t_mix, sigma, probs.p_mins()).unwrap();
            let (var, se) = variance_and_se(&ht_draws(&inst, &spec, 10_000, 800 + k as u64));
            (
                var <= bound + 3.0 * se,
                format!("N={n} {name} l=r={len} sigma={sigma}: {var:.3} vs {bound:.3}"),
            )
        })
        .collect();
    let failing: Vec<&str> = results.iter().filter(|r| !r.0).map(|r| r.1.as_str()).collect();
    let tightest = results.iter().map(|r| r.1.as_str()).next().unwrap_or_default();
    verdict(
        failing.is_empty(),
        format!("{} configurations, first: {tightest}; failing: {failing:?}", results.len()),
    )
}

fn single_unit_slope() -> Verdict {
    let sizes = [512usize, 1024, 2048, 4096];
    let configs = named_preset("mse-single-stationary", &sizes, &PresetOptions::default()).unwrap();
    let report = run_experiments(&configs).unwrap();
    let points: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.estimator == "HT-OPT")
        .map(|r| (r.horizon as f64, r.mse))
        .collect();
    let slope = loglog_slope(&points).unwrap();
    let mses: Vec<String> = points.iter().map(|p| format!("{:.3}", p.1)).collect();
    verdict(
        (-1.25..=-0.75).contains(&slope),
        format!("slope {slope:.3} (target [-1.25, -0.75]); MSE at T=512..4096: {}", mses.join(", ")),
    )
}

fn multi_unit_slope() -> Verdict {
    let sizes = [32usize, 64, 128];
    let configs = named_preset("scaling-NT", &sizes, &PresetOptions::default()).unwrap();
    let report = run_experiments(&configs).unwrap();
    let series = |label: &str| -> Vec<(f64, f64)> {
        report
            .rows
            .iter()
            .filter(|r| r.estimator == label)
            .map(|r| (r.horizon as f64, r.mse))
            .collect()
    };
    let clustered = series("clustered-switchback");
    let ab = series("pure-ab");
    let sb = series("pure-switchback");
    let slope = loglog_slope(&clustered).unwrap();
    let last = |s: &[(f64, f64)]| s.last().unwrap().1;
    let beats = last(&clustered) < last(&ab) && last(&clustered) < last(&sb);
    verdict(
        (-2.4..=-1.4).contains(&slope) && beats,
        format!(
            "slope {slope:.3} (target [-2.4, -1.4]); MSE at N=T=128: clustered {:.4}, pure-ab {:.4}, pure-switchback {:.4}",
            last(&clustered),
            last(&ab),
            last(&sb)
        ),
    )
}

fn dimbi_degeneracies() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut identical = 0;
    let trials = 500;
    for _ in 0..trials {
        let horizon = rng.random_range(2..60usize);
        let ell = rng.random_range(1..=horizon);
        let mut w: Vec<u8> = (0..horizon).map(|_| rng.random_range(0..2u8)).collect();
        w[0] = 0;
        w[horizon - 1] = 1;
        let y: Vec<f64> = (0..horizon).map(|_| rng.random_range(-5.0..5.0)).collect();
        let panel = ObservedPanel::new(TreatmentMatrix::from_rows(&[w]).unwrap(), y).unwrap();
        let a = dimbi(&panel, ell, 0);
        let b = dim(&panel, ell);
        let same = match (&a, &b) {
            (Ok(x), Ok(y)) => x.delta_hat.to_bits() == y.delta_hat.to_bits() && x == y,
            (Err(x), Err(y)) => x == y,
            _ => false,
        };
        identical += usize::from(same);
    }
    let ones = ObservedPanel::new(TreatmentMatrix::constant(1, 1, 30), vec![1.0; 30]).unwrap();
    let failure = dimbi(&ones, 5, 2);
    let explicit = matches!(failure, Err(EstimatorError::InsufficientArmData { arm: 0 }));
    verdict(
        identical == trials && explicit,
        format!("{identical}/{trials} panels bit-identical; all-one vector gives {failure:?}"),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str| {
        let out = dir.path().join(format!("w{workers}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_switchback"))
            .args(["simulate", "--preset", "mse-single-stationary", "--horizon", "256", "--seed", "42"])
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let one = run("1");
    let eight = run("8");
    verdict(
        one == eight && !one.is_empty(),
        format!("{} bytes with 1 worker, {} bytes with 8, identical: {}", one.len(), eight.len(), one == eight),
    )
}

type Criterion = (usize, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 12] = [
    (1, "oracle consistency", oracle_consistency),
    (2, "full-window HT unbiasedness", full_window_unbiasedness),
    (3, "bias bound", bias_bound_check),
    (4, "exposure probability exactness", exposure_exactness),
    (5, "entropy lower bound", entropy_lower_bound),
    (6, "conditional covariance identity", cond_cov_identity),
    (7, "TV decay", tv_decay),
    (8, "variance bound sweep", variance_sweep),
    (9, "single-unit MSE slope", single_unit_slope),
    (10, "multi-unit N=T MSE slope", multi_unit_slope),
    (11, "DIMBI degeneracies", dimbi_degeneracies),
    (12, "worker-count determinism", determinism),
];

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "{} criterion {n:>2} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
