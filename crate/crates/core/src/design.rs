//! Time blocking and sampling of clustered switchback treatment matrices.
//!
//! Rounds are 1-indexed (`1..=T`) everywhere in this crate.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::Rng;
use thiserror::Error;

use crate::graph::Clustering;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("block length must be at least 1")]
    ZeroBlockLength,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("treatment matrix is {rows}x{cols}, expected {n_units}x{horizon}")]
    Shape {
        rows: usize,
        cols: usize,
        n_units: usize,
        horizon: usize,
    },
    #[error("malformed treatment csv on line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Uniform partition of `1..=T` into consecutive blocks of length `ℓ`
/// (the last block may be shorter).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeBlocks {
    horizon: usize,
    block_length: usize,
}

impl TimeBlocks {
    pub fn new(horizon: usize, block_length: usize) -> Result<Self, DesignError> {
        if block_length == 0 {
            return Err(DesignError::ZeroBlockLength);
        }
        if horizon == 0 {
            return Err(DesignError::ZeroHorizon);
        }
        Ok(Self {
            horizon,
            block_length,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn n_blocks(&self) -> usize {
        self.horizon.div_ceil(self.block_length)
    }

    /// Zero-based index of the block containing round `t`.
    pub fn block_of(&self, t: usize) -> usize {
        debug_assert!((1..=self.horizon).contains(&t));
        (t - 1) / self.block_length
    }

    /// Rounds covered by block `k` (zero-based).
    pub fn block(&self, k: usize) -> RangeInclusive<usize> {
        let start = k * self.block_length + 1;
        start..=((k + 1) * self.block_length).min(self.horizon)
    }

    pub fn blocks(&self) -> impl Iterator<Item = RangeInclusive<usize>> + '_ {
        (0..self.n_blocks()).map(|k| self.block(k))
    }

    /// Number of blocks meeting the round interval `first..=last`.
    pub fn blocks_spanned(&self, first: usize, last: usize) -> usize {
        self.block_of(last) - self.block_of(first) + 1
    }
}

/// Offset of round `t` inside its block, in `1..=ℓ`.
pub fn position_in_block(t: usize, block_length: usize) -> usize {
    t - block_length * ((t - 1) / block_length)
}

/// Binary `N x T` treatment matrix, row-major by unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreatmentMatrix {
    n_units: usize,
    horizon: usize,
    values: Vec<u8>,
}

impl TreatmentMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, DesignError> {
        let n_units = rows.len();
        let horizon = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_units * horizon);
        for row in rows {
            if row.len() != horizon {
                return Err(DesignError::Shape {
                    rows: n_units,
                    cols: row.len(),
                    n_units,
                    horizon,
                });
            }
            values.extend(row.iter().map(|&v| u8::from(v != 0)));
        }
        Ok(Self {
            n_units,
            horizon,
            values,
        })
    }

    /// Every entry equal to `arm`.
    pub fn constant(arm: u8, n_units: usize, horizon: usize) -> Self {
        Self {
            n_units,
            horizon,
            values: vec![u8::from(arm != 0); n_units * horizon],
        }
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Treatment of unit `i` at round `t` (1-indexed).
    #[inline]
    pub fn get(&self, i: usize, t: usize) -> u8 {
        self.values[i * self.horizon + t - 1]
    }

    pub fn set(&mut self, i: usize, t: usize, arm: u8) {
        self.values[i * self.horizon + t - 1] = u8::from(arm != 0);
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.horizon..(i + 1) * self.horizon]
    }

    /// Swaps the arms everywhere.
    pub fn flipped(&self) -> Self {
        Self {
            n_units: self.n_units,
            horizon: self.horizon,
            values: self.values.iter().map(|v| 1 - v).collect(),
        }
    }

    pub fn check_shape(&self, n_units: usize, horizon: usize) -> Result<(), DesignError> {
        if self.n_units != n_units || self.horizon != horizon {
            return Err(DesignError::Shape {
                rows: self.n_units,
                cols: self.horizon,
                n_units,
                horizon,
            });
        }
        Ok(())
    }

    /// True when every cluster x block rectangle carries a single arm.
    pub fn is_cluster_block_constant(&self, clustering: &Clustering, blocks: &TimeBlocks) -> bool {
        clustering.clusters().iter().all(|members| {
            blocks.blocks().all(|rounds| {
                let first = self.get(members[0], *rounds.start());
                members
                    .iter()
                    .all(|&i| rounds.clone().all(|t| self.get(i, t) == first))
            })
        })
    }

    /// One line per unit, comma separated bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 2);
        for i in 0..self.n_units {
            for (k, v) in self.row(i).iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, DesignError> {
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, line)| {
                line.split(',')
                    .map(|cell| match cell.trim() {
                        "0" => Ok(0u8),
                        "1" => Ok(1u8),
                        other => Err(DesignError::Csv {
                            line: n + 1,
                            reason: format!("expected 0 or 1, found {other:?}"),
                        }),
                    })
                    .collect::<Result<Vec<u8>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(&rows)
    }
}

/// Clustered switchback design: one fair coin per (cluster, block) rectangle.
///
/// Coins are consumed cluster-major, block-minor, so the stream alone fixes `W`.
pub fn sample_switchback<R: Rng + ?Sized>(
    clustering: &Clustering,
    blocks: &TimeBlocks,
    rng: &mut R,
) -> TreatmentMatrix {
    let mut w = TreatmentMatrix::constant(0, clustering.n_units(), blocks.horizon());
    for members in clustering.clusters() {
        for rounds in blocks.blocks() {
            let arm = u8::from(rng.random::<bool>());
            if arm == 1 {
                for &i in members {
                    for t in rounds.clone() {
                        w.set(i, t, 1);
                    }
                }
            }
        }
    }
    w
}
