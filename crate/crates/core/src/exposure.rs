//! Radius-`r` truncated δ-FNE exposure mappings and their exact
//! probabilities under the clustered switchback design.

use std::fmt::Write as _;

use thiserror::Error;

use crate::design::{DesignError, TimeBlocks, TreatmentMatrix};
use crate::fne::FneThreshold;
use crate::graph::{Clustering, GraphError, InterferenceGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExposureError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("round {t} outside 1..={horizon}")]
    RoundOutOfRange { t: usize, horizon: usize },
    #[error("unit {unit} outside 0..{n_units}")]
    UnitOutOfRange { unit: usize, n_units: usize },
}

/// Exposure parameters: look-back radius `r`, FNE threshold `δ`, and the
/// design (`ℓ`, `Π`) whose randomization defines the probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSpec {
    pub radius: usize,
    pub delta: FneThreshold,
    pub block_length: usize,
    pub clustering: Clustering,
}

impl ExposureSpec {
    pub fn new(
        radius: usize,
        delta: FneThreshold,
        block_length: usize,
        clustering: Clustering,
    ) -> Result<Self, ExposureError> {
        if block_length == 0 {
            return Err(DesignError::ZeroBlockLength.into());
        }
        Ok(Self {
            radius,
            delta,
            block_length,
            clustering,
        })
    }

    /// First round of the (clipped) window ending at `t`.
    pub fn window_start(&self, t: usize) -> usize {
        t.saturating_sub(self.radius).max(1)
    }

    pub fn time_blocks(&self, horizon: usize) -> Result<TimeBlocks, ExposureError> {
        Ok(TimeBlocks::new(horizon, self.block_length)?)
    }
}

/// Whether `W_{N(i), t'}` passes the `(1-δ)` fraction test for arm `a`.
#[inline]
pub(crate) fn round_exposed(
    w: &TreatmentMatrix,
    nbhd: &[usize],
    t: usize,
    a: u8,
    delta: &FneThreshold,
) -> bool {
    let mismatches = nbhd.iter().filter(|&&j| w.get(j, t) != a).count();
    delta.tolerates(mismatches, nbhd.len())
}

/// `X^r_ita(W)`: the fraction test holds at every round of `[max(1,t-r), t]`.
pub fn exposure_indicator(
    w: &TreatmentMatrix,
    g: &InterferenceGraph,
    i: usize,
    t: usize,
    a: u8,
    spec: &ExposureSpec,
) -> bool {
    let nbhd = g.closed_neighborhood(i);
    (spec.window_start(t)..=t).all(|s| round_exposed(w, nbhd, s, a, &spec.delta))
}

/// Probability that independent fair coins `Z_j` satisfy
/// `Σ m_j Z_j >= need`, by dynamic programming over the attainable sums.
pub fn weighted_coin_tail(weights: &[usize], need: usize) -> f64 {
    let total: usize = weights.iter().sum();
    if need == 0 {
        return 1.0;
    }
    if need > total {
        return 0.0;
    }
    let mut dist = vec![0.0f64; total + 1];
    dist[0] = 1.0;
    let mut reach = 0;
    for &m in weights {
        for s in (0..=reach).rev() {
            let p = dist[s];
            if p != 0.0 {
                dist[s] = 0.5 * p;
                dist[s + m] += 0.5 * p;
            }
        }
        reach += m;
    }
    dist[need..].iter().sum::<f64>().min(1.0)
}

/// Single-block exposure probability of unit `i`.
fn block_probability(g: &InterferenceGraph, spec: &ExposureSpec, i: usize) -> f64 {
    let weights: Vec<usize> = spec
        .clustering
        .neighborhood_weights(g, i)
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    let need = spec.delta.min_matches(g.closed_neighborhood(i).len());
    weighted_coin_tail(&weights, need)
}

fn check_unit(g: &InterferenceGraph, spec: &ExposureSpec, i: usize) -> Result<(), ExposureError> {
    spec.clustering.check_compatible(g)?;
    if i >= g.n_units() {
        return Err(ExposureError::UnitOutOfRange {
            unit: i,
            n_units: g.n_units(),
        });
    }
    Ok(())
}

/// `p^r_ita` under the clustered switchback design: the blocks meeting the
/// window carry independent coins, so the probability is the single-block
/// value raised to the number of blocks spanned. It does not depend on `a`.
pub fn exposure_probability_exact(
    g: &InterferenceGraph,
    spec: &ExposureSpec,
    horizon: usize,
    i: usize,
    t: usize,
    _a: u8,
) -> Result<f64, ExposureError> {
    check_unit(g, spec, i)?;
    if !(1..=horizon).contains(&t) {
        return Err(ExposureError::RoundOutOfRange { t, horizon });
    }
    let blocks = spec.time_blocks(horizon)?;
    let spanned = blocks.blocks_spanned(spec.window_start(t), t);
    Ok(block_probability(g, spec, i).powi(spanned as i32))
}

/// `p^min_i = min over t, a of p^r_ita`.
pub fn min_exposure_probability(
    g: &InterferenceGraph,
    spec: &ExposureSpec,
    horizon: usize,
    i: usize,
) -> Result<f64, ExposureError> {
    check_unit(g, spec, i)?;
    let blocks = spec.time_blocks(horizon)?;
    let worst = (1..=horizon)
        .map(|t| blocks.blocks_spanned(spec.window_start(t), t))
        .max()
        .unwrap_or(1);
    Ok(block_probability(g, spec, i).powi(worst as i32))
}

/// All exposure probabilities for one (graph, spec, horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureProbabilities {
    n_units: usize,
    horizon: usize,
    p: Vec<f64>,
    p_min: Vec<f64>,
}

impl ExposureProbabilities {
    pub fn compute(g: &InterferenceGraph, spec: &ExposureSpec, horizon: usize) -> Result<Self, ExposureError> {
        spec.clustering.check_compatible(g)?;
        let blocks = spec.time_blocks(horizon)?;
        let spans: Vec<i32> = (1..=horizon)
            .map(|t| blocks.blocks_spanned(spec.window_start(t), t) as i32)
            .collect();
        let n = g.n_units();
        let mut p = Vec::with_capacity(n * horizon);
        let mut p_min = Vec::with_capacity(n);
        for i in 0..n {
            let q = block_probability(g, spec, i);
            let row: Vec<f64> = spans.iter().map(|&k| q.powi(k)).collect();
            p_min.push(row.iter().copied().fold(1.0, f64::min));
            p.extend(row);
        }
        Ok(Self {
            n_units: n,
            horizon,
            p,
            p_min,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `p^r_ita`; identical for both arms.
    #[inline]
    pub fn get(&self, i: usize, t: usize, _a: u8) -> f64 {
        self.p[i * self.horizon + t - 1]
    }

    pub fn p_min(&self, i: usize) -> f64 {
        self.p_min[i]
    }

    pub fn p_mins(&self) -> &[f64] {
        &self.p_min
    }

    /// Smallest probability over all units.
    pub fn global_min(&self) -> f64 {
        self.p_min.iter().copied().fold(1.0, f64::min)
    }

    /// `unit,round,p` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit,round,p\n");
        for i in 0..self.n_units {
            for t in 1..=self.horizon {
                let _ = writeln!(out, "{i},{t},{:.10e}", self.get(i, t, 1));
            }
        }
        out
    }
}

/// Binary entropy in bits, with `H(0) = H(1) = 0`.
pub fn entropy(delta: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(delta) + term(1.0 - delta)
}

/// `(2^{-(1-H(δ)) d} / sqrt(2π δ(1-δ)))^{1+⌈r/ℓ⌉}`, clamped to `(0, 1]`;
/// `δ = 0` gives `2^{-d(1+⌈r/ℓ⌉)}`.
pub fn exposure_lower_bound(d: usize, r: usize, ell: usize, delta: f64) -> f64 {
    let power = 1 + r.div_ceil(ell.max(1));
    let per_block = if delta <= 0.0 {
        2f64.powi(-(d as i32))
    } else {
        let scale = (2.0 * std::f64::consts::PI * delta * (1.0 - delta)).sqrt();
        2f64.powf(-(1.0 - entropy(delta)) * d as f64) / scale
    };
    per_block.powi(power as i32).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Same shape as [`exposure_lower_bound`] but with the binomial-coefficient
/// estimate `C(d, δd) >= 2^{d H(δ)} / sqrt(8 d δ(1-δ))`, which is a valid
/// lower bound on the per-block probability whenever `δd` is an integer.
pub fn binomial_tail_lower_bound(d: usize, r: usize, ell: usize, delta: f64) -> f64 {
    let power = 1 + r.div_ceil(ell.max(1));
    let per_block = if delta <= 0.0 {
        2f64.powi(-(d as i32))
    } else {
        let scale = (8.0 * d as f64 * delta * (1.0 - delta)).sqrt();
        2f64.powf(-(1.0 - entropy(delta)) * d as f64) / scale
    };
    per_block.powi(power as i32).clamp(f64::MIN_POSITIVE, 1.0)
}
