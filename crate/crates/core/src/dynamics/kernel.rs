//! Tabular transition kernels, exact forward evolution of state
//! distributions and total-variation mixing diagnostics.

use super::DynamicsError;

const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic matrix over `n` states. Rows are stored densely together
/// with their nonzero support, which drives both propagation and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularKernel {
    n: usize,
    dense: Vec<f64>,
    support: Vec<Vec<(usize, f64)>>,
}

impl TabularKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        let n = rows.len();
        if n == 0 {
            return Err(DynamicsError::InvalidKernel("kernel has no states".into()));
        }
        let mut dense = Vec::with_capacity(n * n);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(DynamicsError::InvalidKernel(format!(
                    "row {x} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(DynamicsError::InvalidKernel(format!(
                    "row {x} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(DynamicsError::InvalidKernel(format!(
                    "row {x} sums to {sum}"
                )));
            }
            dense.extend_from_slice(row);
        }
        Ok(Self::from_dense(n, dense))
    }

    fn from_dense(n: usize, dense: Vec<f64>) -> Self {
        let support = dense
            .chunks(n)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(y, &p)| (y, p))
                    .collect()
            })
            .collect();
        Self { n, dense, support }
    }

    pub fn identity(n: usize) -> Self {
        let mut dense = vec![0.0; n * n];
        for x in 0..n {
            dense[x * n + x] = 1.0;
        }
        Self::from_dense(n, dense)
    }

    /// Every row equal to `dist`.
    pub fn repeated_row(dist: &[f64]) -> Result<Self, DynamicsError> {
        Self::new(vec![dist.to_vec(); dist.len()])
    }

    /// `(1 - weight) * self + weight * other`.
    pub fn mix(&self, other: &TabularKernel, weight: f64) -> TabularKernel {
        assert_eq!(self.n, other.n, "mixing kernels over different state spaces");
        let dense = self
            .dense
            .iter()
            .zip(&other.dense)
            .map(|(a, b)| (1.0 - weight) * a + weight * b)
            .collect();
        Self::from_dense(self.n, dense)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.dense[x * self.n..(x + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.dense.chunks(self.n)
    }

    /// `out = f P`.
    pub fn propagate_into(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (x, &mass) in f.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(y, p) in &self.support[x] {
                out[y] += mass * p;
            }
        }
    }

    pub fn propagate(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.propagate_into(f, &mut out);
        out
    }

    /// Next state from `x` given a uniform draw `u` in `[0, 1)`.
    pub fn sample_next(&self, x: usize, u: f64) -> usize {
        let mut acc = 0.0;
        let row = &self.support[x];
        for &(y, p) in row {
            acc += p;
            if u < acc {
                return y;
            }
        }
        row.last().map_or(x, |&(y, _)| y)
    }
}

/// Clipped random walk on `-m..=m` (state index `s + m`): step up with
/// probability `p_up`, otherwise down; a step that would leave the range
/// stays put.
pub fn clipped_random_walk_kernel(m: usize, p_up: f64) -> Result<TabularKernel, DynamicsError> {
    if !(0.0..=1.0).contains(&p_up) {
        return Err(DynamicsError::InvalidProbability(p_up));
    }
    let n = 2 * m + 1;
    let mut dense = vec![0.0; n * n];
    for x in 0..n {
        let up = (x + 1).min(n - 1);
        let down = x.saturating_sub(1);
        dense[x * n + up] += p_up;
        dense[x * n + down] += 1.0 - p_up;
    }
    Ok(TabularKernel::from_dense(n, dense))
}

pub fn tv_distance(f: &[f64], g: &[f64]) -> f64 {
    0.5 * f.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Largest total-variation distance between two rows; the tightest one-step
/// contraction factor of the kernel.
pub fn dobrushin_coefficient(k: &TabularKernel) -> f64 {
    max_row_tv(&k.dense, k.n)
}

fn max_row_tv(dense: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in x + 1..n {
            worst = worst.max(tv_distance(&dense[x * n..(x + 1) * n], &dense[y * n..(y + 1) * n]));
        }
    }
    worst
}

/// Exact forward evolution `f_{k+1} = f_k P_k`. The output starts with `f0`
/// and has one more entry than `kernels`.
pub fn evolve_distribution<'a, I>(f0: &[f64], kernels: I) -> Vec<Vec<f64>>
where
    I: IntoIterator<Item = &'a TabularKernel>,
{
    let mut out = vec![f0.to_vec()];
    for k in kernels {
        let next = k.propagate(out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

/// Fitted geometric decay of the worst-pair total-variation distance
/// `d(k) = max_{x,y} d_TV(δ_x P^k, δ_y P^k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    /// `-1 / slope` of the least-squares fit of `ln d(k)` on `k`.
    pub t_mix: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `d(k)` for `k = 1, 2, ...`.
    pub tv_curve: Vec<f64>,
    /// Smallest `A` with `d(k) <= A e^{-k / t_mix}` along the computed curve.
    pub prefactor: f64,
    /// First `k` with `d(k) < 0.5`.
    pub onset: usize,
}

impl MixingProfile {
    /// `d(k)`; beyond the computed curve the last value is returned (the
    /// curve is nonincreasing).
    pub fn tv_at(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        self.tv_curve
            .get(k - 1)
            .or(self.tv_curve.last())
            .copied()
            .unwrap_or(1.0)
    }

    /// `A e^{-k / t_mix}` capped at 1.
    pub fn envelope(&self, k: usize) -> f64 {
        (self.prefactor * (-(k as f64) / self.t_mix).exp()).min(1.0)
    }
}

const TAIL_THRESHOLD: f64 = 0.5;
const MIN_TAIL_POINTS: usize = 10;
const STOP_TV: f64 = 1e-6;
const TV_FLOOR: f64 = 1e-12;

/// Estimates a mixing time by evolving every point mass for up to `horizon`
/// steps and fitting the log-linear tail of the worst-pair TV distance.
pub fn estimate_tmix(k: &TabularKernel, horizon: usize) -> Result<MixingProfile, DynamicsError> {
    let n = k.n;
    let mut power = TabularKernel::identity(n).dense;
    let mut next = vec![0.0; n * n];
    let mut curve = Vec::new();
    let mut tail = 0usize;
    for _ in 0..horizon {
        for x in 0..n {
            k.propagate_into(&power[x * n..(x + 1) * n], &mut next[x * n..(x + 1) * n]);
        }
        std::mem::swap(&mut power, &mut next);
        let d = max_row_tv(&power, n);
        curve.push(d);
        if d < TAIL_THRESHOLD && d > TV_FLOOR {
            tail += 1;
        }
        if d <= TV_FLOOR || (d < STOP_TV && tail >= MIN_TAIL_POINTS) {
            break;
        }
    }
    let Some(onset) = curve.iter().position(|&d| d < TAIL_THRESHOLD).map(|i| i + 1) else {
        return Err(DynamicsError::NotMixing {
            horizon,
            last_tv: curve.last().copied().unwrap_or(1.0),
        });
    };

    let points: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(_, &d)| d < TAIL_THRESHOLD && d > TV_FLOOR)
        .map(|(i, &d)| ((i + 1) as f64, d.ln()))
        .collect();

    let (t_mix, slope, intercept) = if points.len() >= MIN_TAIL_POINTS {
        let (slope, intercept) = least_squares(&points);
        (-1.0 / slope, slope, intercept)
    } else {
        // Too few tail points for a fit: fall back to the tightest rate that
        // dominates every observed value (floored at TV_FLOOR).
        let t = curve
            .iter()
            .enumerate()
            .map(|(i, &d)| (i + 1) as f64 / -(d.max(TV_FLOOR).min(1.0 - 1e-16)).ln())
            .fold(0.0, f64::max);
        (t, -1.0 / t, 0.0)
    };

    let prefactor = curve
        .iter()
        .enumerate()
        .map(|(i, &d)| d * ((i + 1) as f64 / t_mix).exp())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    Ok(MixingProfile {
        t_mix,
        slope,
        intercept,
        tv_curve: curve,
        prefactor,
        onset,
    })
}

/// Ordinary least squares `y = slope * x + intercept`.
pub(crate) fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
