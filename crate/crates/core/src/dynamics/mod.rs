//! Networked Markovian outcome model: per-unit state chains driven by
//! neighborhood treatments, outcome functions, instance generators, panel
//! simulation and the exact distribution-evolution oracle.

mod generators;
mod kernel;
mod oracle;
mod simulate;

pub use generators::{
    multi_unit_instance, multi_unit_p_up, nonstationary_single_instance, stationary_instance,
    P_UP_CONTROL, P_UP_TREATED,
};
pub use kernel::{
    clipped_random_walk_kernel, dobrushin_coefficient, estimate_tmix, evolve_distribution,
    tv_distance, MixingProfile, TabularKernel,
};
pub(crate) use kernel::least_squares;
pub use oracle::{
    exact_conditional_means, exact_mean_outcomes, exact_state_distributions, gate_oracle,
    mean_outcome_exact,
};
pub use simulate::{simulate_panel, simulate_trajectory, LatentTrajectory};

use thiserror::Error;

use crate::design::{DesignError, TreatmentMatrix};
use crate::fne::FneThreshold;
use crate::graph::InterferenceGraph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("worst-pair TV distance still {last_tv} after {horizon} steps: not mixing at this horizon")]
    NotMixing { horizon: usize, last_tv: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Clipped random walk on `-m..=m` whose up-probability interpolates between
/// `p_control` and `p_treated` with the treated count in `N(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedWalkFamily {
    pub m: usize,
    pub p_control: f64,
    pub p_treated: f64,
    /// Divisor for the treated count; `None` divides by `|N(i)|`.
    pub normalizer: Option<usize>,
    pub fne: FneThreshold,
}

impl ClippedWalkFamily {
    pub fn new(m: usize, p_control: f64, p_treated: f64) -> Result<Self, DynamicsError> {
        for p in [p_control, p_treated] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DynamicsError::InvalidProbability(p));
            }
        }
        Ok(Self {
            m,
            p_control,
            p_treated,
            normalizer: None,
            fne: FneThreshold::EXACT,
        })
    }

    pub fn with_normalizer(mut self, normalizer: usize) -> Self {
        self.normalizer = Some(normalizer);
        self
    }

    pub fn with_fne(mut self, fne: FneThreshold) -> Self {
        self.fne = fne;
        self
    }

    fn formula(&self, treated: usize, size: usize) -> f64 {
        let denom = self.normalizer.unwrap_or(size).max(1) as f64;
        let p = self.p_control + (self.p_treated - self.p_control) * treated as f64 / denom;
        p.clamp(0.0, 1.0)
    }

    /// Up-probability for a neighborhood assignment. Assignments within δ of
    /// a constant arm resolve to that arm's all-constant value.
    pub fn p_up(&self, w: &[u8]) -> f64 {
        let treated = match self.fne.collapse(w) {
            Some(1) => w.len(),
            Some(_) => 0,
            None => w.iter().filter(|&&v| v != 0).count(),
        };
        self.formula(treated, w.len())
    }
}

/// Explicit control/treatment kernels shared by all units and rounds. Mixed
/// neighborhoods (outside the δ-FNE region) use the convex combination
/// weighted by the treated fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmKernels {
    pub control: TabularKernel,
    pub treated: TabularKernel,
    pub fne: FneThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    ClippedWalk(ClippedWalkFamily),
    Tabular(ArmKernels),
}

impl KernelFamily {
    pub fn arm_kernels(control: TabularKernel, treated: TabularKernel) -> Result<Self, DynamicsError> {
        if control.n_states() != treated.n_states() {
            return Err(DynamicsError::InvalidKernel(
                "control and treatment kernels have different state counts".into(),
            ));
        }
        if control.n_states() % 2 == 0 {
            return Err(DynamicsError::InvalidKernel(
                "state space must be -m..=m (odd number of states)".into(),
            ));
        }
        Ok(Self::Tabular(ArmKernels {
            control,
            treated,
            fne: FneThreshold::EXACT,
        }))
    }

    pub fn n_states(&self) -> usize {
        match self {
            Self::ClippedWalk(f) => 2 * f.m + 1,
            Self::Tabular(k) => k.control.n_states(),
        }
    }

    /// Resolves `P_it^w`. The built-in families are time-homogeneous and
    /// identical across units, so `unit` and `round` only matter through `w`.
    pub fn kernel(&self, _unit: usize, _round: usize, w: &[u8]) -> TabularKernel {
        match self {
            Self::ClippedWalk(f) => clipped_random_walk_kernel(f.m, f.p_up(w))
                .expect("p_up is clamped to [0, 1]"),
            Self::Tabular(k) => match k.fne.collapse(w) {
                Some(1) => k.treated.clone(),
                Some(_) => k.control.clone(),
                None => {
                    let frac = w.iter().filter(|&&v| v != 0).count() as f64 / w.len() as f64;
                    k.control.mix(&k.treated, frac)
                }
            },
        }
    }

    /// `out = f P_it^w` without materializing dense kernels for the walk.
    pub fn propagate(&self, unit: usize, round: usize, w: &[u8], f: &[f64], out: &mut [f64]) {
        match self {
            Self::ClippedWalk(fam) => {
                let p = fam.p_up(w);
                let top = f.len() - 1;
                out.iter_mut().for_each(|v| *v = 0.0);
                for (x, &mass) in f.iter().enumerate() {
                    out[(x + 1).min(top)] += mass * p;
                    out[x.saturating_sub(1)] += mass * (1.0 - p);
                }
            }
            Self::Tabular(_) => self.kernel(unit, round, w).propagate_into(f, out),
        }
    }

    /// Next state index given a uniform draw `u`.
    pub fn sample_next(&self, unit: usize, round: usize, w: &[u8], state: usize, u: f64) -> usize {
        match self {
            Self::ClippedWalk(fam) => {
                if u < fam.p_up(w) {
                    (state + 1).min(2 * fam.m)
                } else {
                    state.saturating_sub(1)
                }
            }
            Self::Tabular(k) => match k.fne.collapse(w) {
                Some(1) => k.treated.sample_next(state, u),
                Some(_) => k.control.sample_next(state, u),
                None => self.kernel(unit, round, w).sample_next(state, u),
            },
        }
    }
}

/// Mean outcome `μ_it(s, w) = α_it + β_it s/m + γ φ(w)` where `φ` is the
/// treated fraction of the neighborhood after δ-FNE collapse. Additive
/// noise is Gaussian with standard deviation `noise_sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    n_units: usize,
    horizon: usize,
    m: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    treatment_shift: f64,
    fne: FneThreshold,
    noise_sigma: f64,
    clamp: bool,
}

impl OutcomeModel {
    /// `alpha` and `beta` are row-major `n_units x horizon`.
    pub fn affine(
        n_units: usize,
        horizon: usize,
        m: usize,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        let cells = n_units * horizon;
        if alpha.len() != cells || beta.len() != cells {
            return Err(DynamicsError::Shape(format!(
                "outcome coefficients need {cells} entries, got {} and {}",
                alpha.len(),
                beta.len()
            )));
        }
        Ok(Self {
            n_units,
            horizon,
            m,
            alpha,
            beta,
            treatment_shift: 0.0,
            fne: FneThreshold::EXACT,
            noise_sigma: 1.0,
            clamp: false,
        })
    }

    /// Same `α`, `β` for every unit and round.
    pub fn constant(n_units: usize, horizon: usize, m: usize, alpha: f64, beta: f64) -> Self {
        Self::affine(
            n_units,
            horizon,
            m,
            vec![alpha; n_units * horizon],
            vec![beta; n_units * horizon],
        )
        .expect("shapes match by construction")
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma.max(0.0);
        self
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn with_treatment_shift(mut self, shift: f64, fne: FneThreshold) -> Self {
        self.treatment_shift = shift;
        self.fne = fne;
        self
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn alpha(&self, i: usize, t: usize) -> f64 {
        self.alpha[i * self.horizon + t - 1]
    }

    pub fn beta(&self, i: usize, t: usize) -> f64 {
        self.beta[i * self.horizon + t - 1]
    }

    #[inline]
    pub fn mean(&self, i: usize, t: usize, state: usize, w: &[u8]) -> f64 {
        let idx = i * self.horizon + t - 1;
        let mut v = self.alpha[idx];
        if self.m > 0 {
            v += self.beta[idx] * (state as f64 - self.m as f64) / self.m as f64;
        }
        if self.treatment_shift != 0.0 {
            let frac = match self.fne.collapse(w) {
                Some(a) => f64::from(a),
                None => w.iter().filter(|&&x| x != 0).count() as f64 / w.len() as f64,
            };
            v += self.treatment_shift * frac;
        }
        if self.clamp {
            v.clamp(0.0, 1.0)
        } else {
            v
        }
    }
}

/// Point mass on state 0 (index `m`) of `-m..=m`.
pub fn point_mass_at_zero(n_states: usize) -> Vec<f64> {
    let mut f = vec![0.0; n_states];
    f[n_states / 2] = 1.0;
    f
}

/// Everything the simulator needs; the latent states it produces never leave
/// [`simulate_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    graph: InterferenceGraph,
    kernels: KernelFamily,
    outcomes: OutcomeModel,
    initial: Vec<f64>,
}

impl Instance {
    /// Initial distribution defaults to a point mass at state 0.
    pub fn new(
        graph: InterferenceGraph,
        kernels: KernelFamily,
        outcomes: OutcomeModel,
    ) -> Result<Self, DynamicsError> {
        if outcomes.n_units != graph.n_units() {
            return Err(DynamicsError::Shape(format!(
                "outcome model covers {} units, graph has {}",
                outcomes.n_units,
                graph.n_units()
            )));
        }
        if 2 * outcomes.m + 1 != kernels.n_states() {
            return Err(DynamicsError::Shape(format!(
                "outcome model uses m = {} but kernels have {} states",
                outcomes.m,
                kernels.n_states()
            )));
        }
        let initial = point_mass_at_zero(kernels.n_states());
        Ok(Self {
            graph,
            kernels,
            outcomes,
            initial,
        })
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self, DynamicsError> {
        if initial.len() != self.n_states() {
            return Err(DynamicsError::InvalidDistribution(format!(
                "{} entries for {} states",
                initial.len(),
                self.n_states()
            )));
        }
        let sum: f64 = initial.iter().sum();
        if initial.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(DynamicsError::InvalidDistribution(format!(
                "entries must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn with_outcomes(mut self, outcomes: OutcomeModel) -> Result<Self, DynamicsError> {
        if outcomes.n_units != self.n_units() || 2 * outcomes.m + 1 != self.n_states() {
            return Err(DynamicsError::Shape("replacement outcome model does not fit".into()));
        }
        self.outcomes = outcomes;
        Ok(self)
    }

    pub fn graph(&self) -> &InterferenceGraph {
        &self.graph
    }

    pub fn kernels(&self) -> &KernelFamily {
        &self.kernels
    }

    pub fn outcomes(&self) -> &OutcomeModel {
        &self.outcomes
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn n_units(&self) -> usize {
        self.graph.n_units()
    }

    pub fn horizon(&self) -> usize {
        self.outcomes.horizon
    }

    pub fn n_states(&self) -> usize {
        self.kernels.n_states()
    }

    /// State cap `m`.
    pub fn state_cap(&self) -> usize {
        self.outcomes.m
    }

    pub(crate) fn check_design(&self, w: &TreatmentMatrix) -> Result<(), DynamicsError> {
        w.check_shape(self.n_units(), self.horizon())?;
        Ok(())
    }
}

/// Copies `W_{N(i), t}` into `buf`.
#[inline]
pub(crate) fn gather(w: &TreatmentMatrix, nbhd: &[usize], t: usize, buf: &mut Vec<u8>) {
    buf.clear();
    buf.extend(nbhd.iter().map(|&j| w.get(j, t)));
}

/// What an estimator gets to see: treatments and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPanel {
    w: TreatmentMatrix,
    y: Vec<f64>,
}

impl ObservedPanel {
    pub fn new(w: TreatmentMatrix, y: Vec<f64>) -> Result<Self, DynamicsError> {
        if y.len() != w.n_units() * w.horizon() {
            return Err(DynamicsError::Shape(format!(
                "{} outcomes for a {}x{} design",
                y.len(),
                w.n_units(),
                w.horizon()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Shape("outcomes must be finite".into()));
        }
        Ok(Self { w, y })
    }

    pub fn treatments(&self) -> &TreatmentMatrix {
        &self.w
    }

    pub fn n_units(&self) -> usize {
        self.w.n_units()
    }

    pub fn horizon(&self) -> usize {
        self.w.horizon()
    }

    #[inline]
    pub fn outcome(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.w.horizon() + t - 1]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    /// Same treatments, outcomes mapped through `f`.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            w: self.w.clone(),
            y: self.y.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same outcomes, arms swapped.
    pub fn with_treatments(&self, w: TreatmentMatrix) -> Result<Self, DynamicsError> {
        Self::new(w, self.y.clone())
    }
}
