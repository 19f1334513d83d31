//! Truncated Horvitz-Thompson estimator and the difference-in-means
//! baselines.

use thiserror::Error;

use crate::design::position_in_block;
use crate::dynamics::ObservedPanel;
use crate::exposure::{round_exposed, ExposureProbabilities, ExposureSpec};
use crate::graph::InterferenceGraph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("exposure probability is zero at unit {unit}, round {round}; the estimator is undefined")]
    ZeroProbability { unit: usize, round: usize },
    #[error("insufficient arm data: no retained rounds with treatment {arm}")]
    InsufficientArmData { arm: u8 },
    #[error("difference in means needs a single-unit panel, got {0} units")]
    NotSingleUnit(usize),
    #[error("burn-in {burn_in} must be smaller than the block length {block_length}")]
    BurnInTooLong { burn_in: usize, block_length: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HtOutput {
    pub delta_hat: f64,
    /// `Δ̂^r_it`, row-major `N x T`, when requested.
    pub terms: Option<Vec<f64>>,
    /// Share of `(i, t, a)` triples with `X^r_ita = 1`.
    pub retained_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimbiOutput {
    pub delta_hat: f64,
    pub n_treated_used: usize,
    pub n_control_used: usize,
    pub burn_in: usize,
}

/// `Δ̂^r = (1/NT) Σ_it (X_it1 / p_it1 - X_it0 / p_it0) Y_it`.
pub fn ht_truncated(
    panel: &ObservedPanel,
    g: &InterferenceGraph,
    spec: &ExposureSpec,
    probs: &ExposureProbabilities,
) -> Result<HtOutput, EstimatorError> {
    ht_impl(panel, g, spec, probs, false)
}

/// [`ht_truncated`] keeping the per-(unit, round) terms.
pub fn ht_truncated_with_terms(
    panel: &ObservedPanel,
    g: &InterferenceGraph,
    spec: &ExposureSpec,
    probs: &ExposureProbabilities,
) -> Result<HtOutput, EstimatorError> {
    ht_impl(panel, g, spec, probs, true)
}

fn ht_impl(
    panel: &ObservedPanel,
    g: &InterferenceGraph,
    spec: &ExposureSpec,
    probs: &ExposureProbabilities,
    keep_terms: bool,
) -> Result<HtOutput, EstimatorError> {
    let (n, horizon) = (panel.n_units(), panel.horizon());
    if g.n_units() != n || probs.n_units() != n || probs.horizon() != horizon {
        return Err(EstimatorError::Shape(format!(
            "panel is {n}x{horizon}, graph has {} units, probabilities are {}x{}",
            g.n_units(),
            probs.n_units(),
            probs.horizon()
        )));
    }
    for i in 0..n {
        if probs.p_min(i) <= 0.0 {
            let round = (1..=horizon).find(|&t| probs.get(i, t, 0) <= 0.0).unwrap_or(1);
            return Err(EstimatorError::ZeroProbability { unit: i, round });
        }
    }
    let w = panel.treatments();
    let mut terms = keep_terms.then(|| Vec::with_capacity(n * horizon));
    let mut total = 0.0;
    let mut retained = 0usize;
    for i in 0..n {
        let nbhd = g.closed_neighborhood(i);
        let mut runs = [0usize; 2];
        let mut unit_sum = 0.0;
        for t in 1..=horizon {
            let need = t - spec.window_start(t) + 1;
            let mut term = 0.0;
            for a in [0u8, 1] {
                let run = &mut runs[a as usize];
                *run = if round_exposed(w, nbhd, t, a, &spec.delta) { *run + 1 } else { 0 };
                if *run >= need {
                    retained += 1;
                    let weighted = panel.outcome(i, t) / probs.get(i, t, a);
                    if a == 1 {
                        term += weighted;
                    } else {
                        term -= weighted;
                    }
                }
            }
            unit_sum += term;
            if let Some(v) = terms.as_mut() {
                v.push(term);
            }
        }
        total += unit_sum;
    }
    let cells = (n * horizon) as f64;
    Ok(HtOutput {
        delta_hat: total / cells,
        terms,
        retained_fraction: retained as f64 / (2.0 * cells),
    })
}

/// Difference in means after discarding the first `b` rounds of each block
/// of length `ℓ`. Retained rounds are pooled across blocks.
pub fn dimbi(panel: &ObservedPanel, block_length: usize, burn_in: usize) -> Result<DimbiOutput, EstimatorError> {
    if panel.n_units() != 1 {
        return Err(EstimatorError::NotSingleUnit(panel.n_units()));
    }
    if burn_in >= block_length {
        return Err(EstimatorError::BurnInTooLong {
            burn_in,
            block_length,
        });
    }
    let w = panel.treatments();
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for t in 1..=panel.horizon() {
        if position_in_block(t, block_length) > burn_in {
            let a = w.get(0, t) as usize;
            sums[a] += panel.outcome(0, t);
            counts[a] += 1;
        }
    }
    for arm in [1u8, 0] {
        if counts[arm as usize] == 0 {
            return Err(EstimatorError::InsufficientArmData { arm });
        }
    }
    Ok(DimbiOutput {
        delta_hat: sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64,
        n_treated_used: counts[1],
        n_control_used: counts[0],
        burn_in,
    })
}

/// Plain difference in means; [`dimbi`] with no burn-in.
pub fn dim(panel: &ObservedPanel, block_length: usize) -> Result<DimbiOutput, EstimatorError> {
    dimbi(panel, block_length, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::TreatmentMatrix;
    use crate::exposure::exposure_indicator;
    use crate::fne::FneThreshold;
    use crate::graph::Clustering;
    use proptest::prelude::*;

    fn panel(rows: &[Vec<u8>], y: Vec<f64>) -> ObservedPanel {
        ObservedPanel::new(TreatmentMatrix::from_rows(rows).unwrap(), y).unwrap()
    }

    fn setup(n: usize, horizon: usize, r: usize, ell: usize, delta: f64) -> (InterferenceGraph, ExposureSpec, ExposureProbabilities) {
        let g = InterferenceGraph::line(n, 1);
        let spec = ExposureSpec::new(r, FneThreshold::new(delta).unwrap(), ell, Clustering::singleton(n)).unwrap();
        let probs = ExposureProbabilities::compute(&g, &spec, horizon).unwrap();
        (g, spec, probs)
    }

    #[test]
    fn single_cell() {
        let (g, spec, probs) = setup(1, 1, 0, 1, 0.0);
        let out = ht_truncated(&panel(&[vec![1]], vec![0.8]), &g, &spec, &probs).unwrap();
        assert_eq!(out.delta_hat, 1.6);
        assert_eq!(out.retained_fraction, 0.5);
    }

    #[test]
    fn no_exposure_gives_zero() {
        let (g, spec, probs) = setup(3, 2, 1, 2, 0.0);
        let p = panel(&[vec![1, 0], vec![0, 1], vec![1, 0]], vec![1.0; 6]);
        let out = ht_truncated_with_terms(&p, &g, &spec, &probs).unwrap();
        assert_eq!(out.delta_hat, 0.0);
        assert_eq!(out.retained_fraction, 0.0);
        assert!(out.terms.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_probability_is_rejected() {
        let g = InterferenceGraph::line(3, 1);
        let spec = ExposureSpec::new(2000, FneThreshold::EXACT, 1, Clustering::singleton(3)).unwrap();
        let probs = ExposureProbabilities::compute(&g, &spec, 1500).unwrap();
        let p = ObservedPanel::new(TreatmentMatrix::constant(1, 3, 1500), vec![0.5; 4500]).unwrap();
        assert!(matches!(
            ht_truncated(&p, &g, &spec, &probs),
            Err(EstimatorError::ZeroProbability { .. })
        ));
    }

    #[test]
    fn dimbi_examples() {
        let p = panel(&[vec![1, 1, 0, 0]], vec![1.0, 2.0, 3.0, 5.0]);
        assert_eq!(dimbi(&p, 2, 1).unwrap().delta_hat, 2.0 - 5.0);
        let p = panel(&[vec![1, 0]], vec![4.0, 1.5]);
        assert_eq!(dim(&p, 1).unwrap().delta_hat, 2.5);
        let flat = panel(&[vec![1, 0, 1, 1, 0]], vec![0.3; 5]);
        assert_eq!(dim(&flat, 2).unwrap().delta_hat, 0.0);
        let ones = panel(&[vec![1; 6]], vec![0.1; 6]);
        assert_eq!(dim(&ones, 3), Err(EstimatorError::InsufficientArmData { arm: 0 }));
        assert_eq!(dimbi(&ones, 3, 2), Err(EstimatorError::InsufficientArmData { arm: 0 }));
        assert!(matches!(dimbi(&flat, 2, 2), Err(EstimatorError::BurnInTooLong { .. })));
        let two = panel(&[vec![1, 0], vec![0, 1]], vec![0.0; 4]);
        assert_eq!(dim(&two, 1), Err(EstimatorError::NotSingleUnit(2)));
    }

    fn random_panel(n: usize, horizon: usize) -> impl Strategy<Value = ObservedPanel> {
        (
            prop::collection::vec(prop::collection::vec(0u8..2, horizon), n),
            prop::collection::vec(-3.0f64..3.0, n * horizon),
        )
            .prop_map(|(rows, y)| panel(&rows, y))
    }

    proptest! {
        #[test]
        fn dim_is_dimbi_without_burn_in(p in random_panel(1, 12), ell in 1usize..6) {
            prop_assert_eq!(dim(&p, ell), dimbi(&p, ell, 0));
        }

        #[test]
        fn ht_matches_indicator_definition(p in random_panel(4, 9), r in 0usize..4, ell in 1usize..4, delta in prop::sample::select(vec![0.0, 0.34])) {
            let (g, spec, probs) = setup(4, 9, r, ell, delta);
            let out = ht_truncated_with_terms(&p, &g, &spec, &probs).unwrap();
            let mut total = 0.0;
            let terms = out.terms.unwrap();
            for i in 0..4 {
                for t in 1..=9 {
                    let mut v = 0.0;
                    if exposure_indicator(p.treatments(), &g, i, t, 1, &spec) {
                        v += p.outcome(i, t) / probs.get(i, t, 1);
                    }
                    if exposure_indicator(p.treatments(), &g, i, t, 0, &spec) {
                        v -= p.outcome(i, t) / probs.get(i, t, 0);
                    }
                    prop_assert!((terms[i * 9 + t - 1] - v).abs() < 1e-12);
                    total += v;
                }
            }
            prop_assert!((out.delta_hat - total / 36.0).abs() < 1e-12);
        }

        #[test]
        fn ht_is_linear_in_outcomes(p in random_panel(3, 8), c in -4.0f64..4.0) {
            let (g, spec, probs) = setup(3, 8, 2, 3, 0.0);
            let base = ht_truncated(&p, &g, &spec, &probs).unwrap().delta_hat;
            let scaled = ht_truncated(&p.map_outcomes(|y| c * y), &g, &spec, &probs).unwrap().delta_hat;
            prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + base.abs() * c.abs()));
        }

        #[test]
        fn ht_flips_sign_with_arms(p in random_panel(3, 8)) {
            let (g, spec, probs) = setup(3, 8, 1, 2, 0.0);
            let base = ht_truncated(&p, &g, &spec, &probs).unwrap().delta_hat;
            let swapped = p.with_treatments(p.treatments().flipped()).unwrap();
            let flipped = ht_truncated(&swapped, &g, &spec, &probs).unwrap().delta_hat;
            prop_assert!((flipped + base).abs() < 1e-12);
        }
    }
}
