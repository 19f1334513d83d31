//! Random instance generators for the single-unit and line-graph studies.
//!
//! All generators consume the stream in a fixed order (documented per
//! function) so a seed pins down the instance.

use rand::Rng;

use super::{ClippedWalkFamily, DynamicsError, Instance, KernelFamily, OutcomeModel};
use crate::design::{TimeBlocks, TreatmentMatrix};
use crate::graph::InterferenceGraph;

/// Up-probability when the whole neighborhood is in control.
pub const P_UP_CONTROL: f64 = 0.1;
/// Up-probability when the whole neighborhood is treated.
pub const P_UP_TREATED: f64 = 0.9;

fn walk(m: usize) -> ClippedWalkFamily {
    ClippedWalkFamily::new(m, P_UP_CONTROL, P_UP_TREATED).expect("constants are probabilities")
}

fn beta_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 + 0.2 * rng.random::<f64>()
}

/// `α ≡ 0`, `β_it = 1 + 0.2 U(0,1)` on `n_units` non-interacting units.
///
/// Draws: `β` row-major (unit, then round).
pub fn stationary_instance<R: Rng + ?Sized>(
    n_units: usize,
    horizon: usize,
    m: usize,
    rng: &mut R,
) -> Result<Instance, DynamicsError> {
    check_sizes(n_units, horizon)?;
    let beta: Vec<f64> = (0..n_units * horizon).map(|_| beta_noise(rng)).collect();
    let outcomes = OutcomeModel::affine(n_units, horizon, m, vec![0.0; n_units * horizon], beta)?;
    Instance::new(
        InterferenceGraph::empty(n_units),
        KernelFamily::ClippedWalk(walk(m)),
        outcomes,
    )
}

/// Single unit with a piecewise-constant drift `α_t` on 8 uniform pieces and
/// `β_t = 1 + 0.2 U(0,1)`, zeroed on the final `ρ` fraction of every
/// length-`ℓ_opt` piece.
///
/// Draws: 8 drift levels, then `β_1..β_T`.
pub fn nonstationary_single_instance<R: Rng + ?Sized>(
    horizon: usize,
    m: usize,
    ell_opt: usize,
    rho: f64,
    rng: &mut R,
) -> Result<Instance, DynamicsError> {
    check_sizes(1, horizon)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(DynamicsError::InvalidProbability(rho));
    }
    let blocks = TimeBlocks::new(horizon, ell_opt)?;
    let levels: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
    let alpha: Vec<f64> = (1..=horizon).map(|t| levels[uniform_piece(t - 1, horizon, 8)]).collect();
    let beta: Vec<f64> = (1..=horizon)
        .map(|t| {
            let b = beta_noise(rng);
            let offset = (t - 1) - (*blocks.block(blocks.block_of(t)).start() - 1);
            if offset as f64 >= (1.0 - rho) * ell_opt as f64 {
                0.0
            } else {
                b
            }
        })
        .collect();
    let outcomes = OutcomeModel::affine(1, horizon, m, alpha, beta)?;
    Instance::new(
        InterferenceGraph::empty(1),
        KernelFamily::ClippedWalk(walk(m)),
        outcomes,
    )
}

/// Units on a line with `h`-hop interference. `p_up` follows
/// [`multi_unit_p_up`]; `α_it` is constant on an 8x8 grid of space-time
/// pieces and `β_it = 1 + 0.2 U(0,1)`.
///
/// Draws: 64 piece levels (space-major), then `β` row-major.
pub fn multi_unit_instance<R: Rng + ?Sized>(
    n_units: usize,
    horizon: usize,
    m: usize,
    h: usize,
    rng: &mut R,
) -> Result<Instance, DynamicsError> {
    check_sizes(n_units, horizon)?;
    let levels: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let mut alpha = Vec::with_capacity(n_units * horizon);
    for i in 0..n_units {
        let row = uniform_piece(i, n_units, 8);
        for t in 0..horizon {
            alpha.push(levels[row * 8 + uniform_piece(t, horizon, 8)]);
        }
    }
    let beta: Vec<f64> = (0..n_units * horizon).map(|_| beta_noise(rng)).collect();
    let outcomes = OutcomeModel::affine(n_units, horizon, m, alpha, beta)?;
    Instance::new(
        InterferenceGraph::line(n_units, h),
        KernelFamily::ClippedWalk(walk(m).with_normalizer(2 * h + 1)),
        outcomes,
    )
}

/// `0.1 + 0.8 / (2h+1) * #{j : d_hop(i,j) <= h, W_jt = 1}`. Near the ends of
/// the line the count runs over the truncated neighborhood while the divisor
/// stays `2h+1`.
pub fn multi_unit_p_up(g: &InterferenceGraph, h: usize, w: &TreatmentMatrix, i: usize, t: usize) -> f64 {
    let treated = g
        .closed_neighborhood(i)
        .iter()
        .filter(|&&j| w.get(j, t) == 1)
        .count();
    P_UP_CONTROL + (P_UP_TREATED - P_UP_CONTROL) * treated as f64 / (2 * h + 1) as f64
}

/// Piece index of `x` in `0..len` split uniformly into `pieces` parts.
fn uniform_piece(x: usize, len: usize, pieces: usize) -> usize {
    x * pieces / len
}

fn check_sizes(n_units: usize, horizon: usize) -> Result<(), DynamicsError> {
    if n_units == 0 || horizon == 0 {
        return Err(DynamicsError::Shape("instances need N >= 1 and T >= 1".into()));
    }
    Ok(())
}
