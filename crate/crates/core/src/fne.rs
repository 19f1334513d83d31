//! Fractional neighborhood exposure threshold `δ`, kept as an exact rational
//! so boundary comparisons like `matches / |N(i)| >= 1 - δ` have no rounding
//! ambiguity.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("exposure threshold must lie in [0, 1), got {0}")]
pub struct ThresholdError(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FneThreshold {
    num: u64,
    den: u64,
}

impl FneThreshold {
    pub const EXACT: FneThreshold = FneThreshold { num: 0, den: 1 };

    /// Nearest simple fraction to `delta` (denominator at most 10^6).
    pub fn new(delta: f64) -> Result<Self, ThresholdError> {
        if !(0.0..1.0).contains(&delta) {
            return Err(ThresholdError(delta));
        }
        if delta == 0.0 {
            return Ok(Self::EXACT);
        }
        let ratio = best_rational(delta, 1_000_000);
        Ok(Self {
            num: *ratio.numer(),
            den: *ratio.denom(),
        })
    }

    pub fn from_ratio(num: u64, den: u64) -> Result<Self, ThresholdError> {
        if den == 0 || num >= den {
            return Err(ThresholdError(num as f64 / den as f64));
        }
        let r = Ratio::new(num, den);
        Ok(Self {
            num: *r.numer(),
            den: *r.denom(),
        })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `mismatches <= δ * size`, i.e. a neighborhood of `size` units with
    /// `mismatches` units off the target arm still counts as exposed.
    pub fn tolerates(&self, mismatches: usize, size: usize) -> bool {
        (mismatches as u128) * (self.den as u128) <= (self.num as u128) * (size as u128)
    }

    /// Smallest number of matching units that passes the fraction test.
    pub fn min_matches(&self, size: usize) -> usize {
        // Largest tolerated mismatch count is floor(δ * size).
        let max_mismatch = ((self.num as u128) * (size as u128) / (self.den as u128)) as usize;
        size - max_mismatch.min(size)
    }

    /// Arm that a neighborhood assignment collapses to under δ-FNE, if any.
    /// When both arms qualify (only possible for δ >= 1/2) the majority arm
    /// wins and exact ties go to treatment.
    pub fn collapse(&self, treatments: &[u8]) -> Option<u8> {
        let n = treatments.len();
        let ones = treatments.iter().filter(|&&v| v != 0).count();
        let zeros = n - ones;
        match (self.tolerates(zeros, n), self.tolerates(ones, n)) {
            (true, true) => Some(u8::from(ones >= zeros)),
            (true, false) => Some(1),
            (false, true) => Some(0),
            (false, false) => None,
        }
    }
}

impl Default for FneThreshold {
    fn default() -> Self {
        Self::EXACT
    }
}

impl TryFrom<f64> for FneThreshold {
    type Error = ThresholdError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FneThreshold> for f64 {
    fn from(t: FneThreshold) -> f64 {
        t.value()
    }
}

/// Continued-fraction best approximation with bounded denominator.
fn best_rational(x: f64, max_den: u64) -> Ratio<u64> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut rest = x;
    loop {
        let a = rest.floor();
        let a_int = a as u64;
        let k2 = a_int.saturating_mul(k1).saturating_add(k0);
        if k2 > max_den {
            break;
        }
        let h2 = a_int * h1 + h0;
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = rest - a;
        if (h1 as f64 / k1 as f64 - x).abs() <= 1e-13 || frac < 1e-15 {
            break;
        }
        rest = 1.0 / frac;
    }
    Ratio::new(h1, k1)
}
