//! Benchmark configurations for the single-unit and line-graph studies.

use serde::{Deserialize, Serialize};

use super::config::{ClusteringSpec, DesignSpec, EstimatorSpec, ExperimentConfig, InstanceSpec};
use super::HarnessError;

pub const PRESET_NAMES: [&str; 6] = [
    "mse-single-stationary",
    "mse-single-nonstationary",
    "scaling-NT",
    "scaling-NsqrtT",
    "scaling-TsqrtN",
    "mse-vs-m",
];

/// Instances x draws at desk scale.
pub const DESK_SCALE: (usize, usize) = (20, 50);
const FULL_SCALE_SINGLE: (usize, usize) = (100, 100);
const FULL_SCALE_MULTI: (usize, usize) = (100, 200);
const STATE_CAP: usize = 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOptions {
    pub seed: u64,
    pub full_scale: bool,
    pub log_base: LogBase,
    /// Hop radius of the line-graph presets.
    pub h: usize,
    pub rho: f64,
    /// Overrides the outcome noise of generated instances.
    pub sigma: Option<f64>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            full_scale: false,
            log_base: LogBase::Natural,
            h: 2,
            rho: 0.25,
            sigma: None,
        }
    }
}

impl PresetOptions {
    fn counts(&self, multi: bool) -> (usize, usize) {
        match (self.full_scale, multi) {
            (false, _) => DESK_SCALE,
            (true, false) => FULL_SCALE_SINGLE,
            (true, true) => FULL_SCALE_MULTI,
        }
    }
}

fn ceil_len(x: f64) -> usize {
    (x.ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SingleUnitLengths {
    pub ell_opt: usize,
    pub r_opt: usize,
    pub burn_in: usize,
    pub ell_small: usize,
    pub r_small: usize,
    pub ell_large: usize,
}

pub fn single_unit_lengths(horizon: usize, base: LogBase) -> SingleUnitLengths {
    let ell_opt = ceil_len(30.0 * base.log(horizon as f64));
    SingleUnitLengths {
        ell_opt,
        r_opt: ell_opt,
        burn_in: ceil_len(ell_opt as f64 / 2.0),
        ell_small: 8,
        r_small: 24,
        ell_large: ceil_len(horizon as f64 / 8.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleScenario {
    Stationary,
    Nonstationary,
}

impl SingleScenario {
    pub fn name(self) -> &'static str {
        match self {
            SingleScenario::Stationary => "mse-single-stationary",
            SingleScenario::Nonstationary => "mse-single-nonstationary",
        }
    }
}

fn single_unit_configs(
    scenario_name: &str,
    horizon: usize,
    m: usize,
    scenario: SingleScenario,
    opts: &PresetOptions,
) -> Result<Vec<ExperimentConfig>, HarnessError> {
    if horizon < 64 {
        return Err(HarnessError::Config(format!("single-unit presets need T >= 64, got {horizon}")));
    }
    let len = single_unit_lengths(horizon, opts.log_base);
    let instance = match scenario {
        SingleScenario::Stationary => InstanceSpec::Stationary {
            n_units: 1,
            horizon,
            m,
            sigma: opts.sigma,
        },
        SingleScenario::Nonstationary => InstanceSpec::Nonstationary {
            horizon,
            m,
            ell_opt: len.ell_opt,
            rho: opts.rho,
            sigma: opts.sigma,
        },
    };
    let (n_instances, n_draws) = opts.counts(false);
    let config = |block_length: usize, estimators: Vec<EstimatorSpec>| ExperimentConfig {
        scenario: scenario_name.to_string(),
        instance: instance.clone(),
        design: DesignSpec {
            clustering: ClusteringSpec::Singleton,
            block_length,
        },
        estimators,
        n_instances,
        n_draws,
        seed: opts.seed,
        output: None,
    };
    let ht = |r: usize, label: &str| EstimatorSpec::Ht {
        r,
        delta: 0.0,
        label: Some(label.into()),
    };
    Ok(vec![
        config(
            len.ell_opt,
            vec![
                ht(len.r_opt, "HT-OPT"),
                EstimatorSpec::Dim {
                    label: Some("DIM".into()),
                },
                EstimatorSpec::Dimbi {
                    b: len.burn_in,
                    label: Some("DIMBI".into()),
                },
            ],
        ),
        config(len.ell_small, vec![ht(len.r_small, "HT-small")]),
        config(len.ell_large, vec![ht(len.r_opt, "HT-large")]),
    ])
}

/// The five single-unit benchmarks, grouped by design: `ℓ_OPT` carries
/// HT-OPT, DIM and DIMBI; HT-small and HT-large get their own configs.
pub fn preset_single_unit(
    horizon: usize,
    scenario: SingleScenario,
    opts: &PresetOptions,
) -> Result<Vec<ExperimentConfig>, HarnessError> {
    single_unit_configs(scenario.name(), horizon, STATE_CAP, scenario, opts)
}

/// Stationary single-unit benchmarks for `m ∈ {10, 30, 100}`.
pub fn preset_mse_vs_m(horizon: usize, opts: &PresetOptions) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let mut out = Vec::new();
    for m in [10, 30, 100] {
        out.extend(single_unit_configs(
            &format!("mse-vs-m/m={m}"),
            horizon,
            m,
            SingleScenario::Stationary,
            opts,
        )?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    /// `N = T = size`.
    NEqualsT,
    /// `T = size`, `N = √T`.
    NSqrtT,
    /// `N = size`, `T = √N`.
    TSqrtN,
}

impl Scaling {
    pub fn name(self) -> &'static str {
        match self {
            Scaling::NEqualsT => "scaling-NT",
            Scaling::NSqrtT => "scaling-NsqrtT",
            Scaling::TSqrtN => "scaling-TsqrtN",
        }
    }
}

fn exact_sqrt(x: usize) -> Result<usize, HarnessError> {
    let s = x.isqrt();
    if s * s == x {
        Ok(s)
    } else {
        Err(HarnessError::Config(format!("size {x} is not a perfect square")))
    }
}

/// `(N, T)` for a scaling and a size.
pub fn scaling_dims(scaling: Scaling, size: usize) -> Result<(usize, usize), HarnessError> {
    if size == 0 {
        return Err(HarnessError::Config("size must be at least 1".into()));
    }
    match scaling {
        Scaling::NEqualsT => Ok((size, size)),
        Scaling::NSqrtT => Ok((exact_sqrt(size)?, size)),
        Scaling::TSqrtN => Ok((size, exact_sqrt(size)?)),
    }
}

/// Pure switchback (`w = N`, `ℓ = 30 log T`), pure A/B (`w = h`, `ℓ = T`)
/// and clustered switchback (`w = h`, `ℓ = 30 log T`), all with HT at
/// `r = 30 log(NT)`.
pub fn preset_multi_unit(
    scaling: Scaling,
    size: usize,
    opts: &PresetOptions,
) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let (n, horizon) = scaling_dims(scaling, size)?;
    if opts.h == 0 {
        return Err(HarnessError::Config("hop radius must be at least 1".into()));
    }
    let ell = ceil_len(30.0 * opts.log_base.log(horizon as f64));
    let r = ceil_len(30.0 * opts.log_base.log((n * horizon) as f64));
    let (n_instances, n_draws) = opts.counts(true);
    let instance = InstanceSpec::MultiUnit {
        n_units: n,
        horizon,
        m: STATE_CAP,
        h: opts.h,
        sigma: opts.sigma,
    };
    let width = opts.h.min(n);
    let designs = [
        ("pure-switchback", ClusteringSpec::Whole, ell),
        ("pure-ab", ClusteringSpec::Segments { width }, horizon),
        ("clustered-switchback", ClusteringSpec::Segments { width }, ell),
    ];
    Ok(designs
        .into_iter()
        .map(|(label, clustering, block_length)| ExperimentConfig {
            scenario: scaling.name().to_string(),
            instance: instance.clone(),
            design: DesignSpec {
                clustering,
                block_length,
            },
            estimators: vec![EstimatorSpec::Ht {
                r,
                delta: 0.0,
                label: Some(label.into()),
            }],
            n_instances,
            n_draws,
            seed: opts.seed,
            output: None,
        })
        .collect())
}

/// Sizes swept by each named preset when none are given.
pub fn default_sizes(name: &str) -> Option<Vec<usize>> {
    match name {
        "mse-single-stationary" | "mse-single-nonstationary" => Some(vec![512, 1024, 2048, 4096]),
        "scaling-NT" => Some(vec![32, 64, 128]),
        "scaling-NsqrtT" | "scaling-TsqrtN" => Some(vec![256, 1024, 4096]),
        "mse-vs-m" => Some(vec![512, 1024, 2048]),
        _ => None,
    }
}

/// All configs of a named preset over `sizes` (the horizon for single-unit
/// presets, the scaling size otherwise).
pub fn named_preset(name: &str, sizes: &[usize], opts: &PresetOptions) -> Result<Vec<ExperimentConfig>, HarnessError> {
    let mut out = Vec::new();
    for &size in sizes {
        let batch = match name {
            "mse-single-stationary" => preset_single_unit(size, SingleScenario::Stationary, opts)?,
            "mse-single-nonstationary" => preset_single_unit(size, SingleScenario::Nonstationary, opts)?,
            "scaling-NT" => preset_multi_unit(Scaling::NEqualsT, size, opts)?,
            "scaling-NsqrtT" => preset_multi_unit(Scaling::NSqrtT, size, opts)?,
            "scaling-TsqrtN" => preset_multi_unit(Scaling::TSqrtN, size, opts)?,
            "mse-vs-m" => preset_mse_vs_m(size, opts)?,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown preset {other:?}; expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        out.extend(batch);
    }
    Ok(out)
}
