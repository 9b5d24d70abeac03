//! Snapshot panels and transition counts.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Panel of markets observed at spacing `delta`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnapshotDataset {
    pub delta: f64,
    pub markets: Vec<Vec<usize>>,
}

impl SnapshotDataset {
    pub fn new(delta: f64, markets: Vec<Vec<usize>>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidData(format!("snapshot spacing must be positive, got {delta}")));
        }
        if let Some(m) = markets.iter().position(|m| m.len() < 2) {
            return Err(Error::InvalidData(format!("market {m} has fewer than 2 snapshots")));
        }
        Ok(Self { delta, markets })
    }

    /// Checks every state index against `n_states`.
    pub fn check_states(&self, n_states: usize) -> Result<()> {
        for m in &self.markets {
            if let Some(&k) = m.iter().find(|&&k| k >= n_states) {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    bound: n_states,
                });
            }
        }
        Ok(())
    }

    /// `Σ_m N_m`.
    pub fn n_transitions(&self) -> usize {
        self.markets.iter().map(|m| m.len() - 1).sum()
    }
}

/// Observed transition counts `d_kl`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionCounts {
    n_states: usize,
    /// Keyed by `(destination, origin)` so that columns are contiguous.
    by_column: BTreeMap<(usize, usize), u64>,
    total: u64,
}

impl TransitionCounts {
    pub fn from_pairs(n_states: usize, pairs: impl IntoIterator<Item = (usize, usize, u64)>) -> Result<Self> {
        let mut by_column = BTreeMap::new();
        let mut total = 0;
        for (k, l, c) in pairs {
            for idx in [k, l] {
                if idx >= n_states {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        bound: n_states,
                    });
                }
            }
            if c > 0 {
                *by_column.entry((l, k)).or_insert(0) += c;
                total += c;
            }
        }
        Ok(Self {
            n_states,
            by_column,
            total,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, k: usize, l: usize) -> u64 {
        self.by_column.get(&(l, k)).copied().unwrap_or(0)
    }

    /// Nonzero `(k, l, d_kl)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.by_column.iter().map(|(&(l, k), &c)| (k, l, c))
    }

    /// Destination states `l` with a positive column sum, ascending.
    pub fn columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.by_column.keys().map(|&(l, _)| l).collect();
        cols.dedup();
        cols
    }

    /// For each destination with positive counts: `(l, [(k, d_kl)])`.
    pub fn column_entries(&self) -> Vec<(usize, Vec<(usize, u64)>)> {
        let mut out: Vec<(usize, Vec<(usize, u64)>)> = Vec::new();
        for (&(l, k), &c) in &self.by_column {
            match out.last_mut() {
                Some((col, entries)) if *col == l => entries.push((k, c)),
                _ => out.push((l, alloc::vec![(k, c)])),
            }
        }
        out
    }
}

/// Counts `d_kl = #{(m, n): k_{m,n-1} = k, k_{m,n} = l}`.
pub fn count_transitions(ds: &SnapshotDataset, n_states: usize) -> Result<TransitionCounts> {
    ds.check_states(n_states)?;
    let mut by_column = BTreeMap::new();
    let mut total = 0;
    for market in &ds.markets {
        for w in market.windows(2) {
            *by_column.entry((w[1], w[0])).or_insert(0u64) += 1;
            total += 1;
        }
    }
    Ok(TransitionCounts {
        n_states,
        by_column,
        total,
    })
}
