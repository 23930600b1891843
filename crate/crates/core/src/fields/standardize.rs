use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};

/// Per-channel affine standardization statistics (`u` and `v` separately).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; 2],
    pub std: [f64; 2],
    /// Set when a channel had zero variance and its std was clamped to 1.
    #[serde(default)]
    pub clamped: [bool; 2],
}

impl Default for ChannelStats {
    fn default() -> Self {
        Self::identity()
    }
}

impl ChannelStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 2],
            std: [1.0; 2],
            clamped: [false; 2],
        }
    }

    /// Population statistics over all `states` (flattened `[u..., v...]`).
    pub fn from_states(states: &[&[f64]]) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::Empty("dataset has no states"));
        };
        let half = first.len() / 2;
        if half == 0 {
            return Err(Error::Empty("states have no entries"));
        }
        for s in states {
            if s.len() != 2 * half {
                return Err(Error::shape(2 * half, s.len()));
            }
        }
        let count = (states.len() * half) as f64;
        let mut mean = [0.0; 2];
        for s in states {
            for (c, chunk) in s.chunks_exact(half).enumerate() {
                mean[c] += chunk.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = [0.0; 2];
        for s in states {
            for (c, chunk) in s.chunks_exact(half).enumerate() {
                var[c] += chunk.iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let mut stats = Self {
            mean,
            std: [1.0; 2],
            clamped: [false; 2],
        };
        for c in 0..2 {
            let std = (var[c] / count).sqrt();
            if !(std > 1e-12 * mean[c].abs().max(1.0)) {
                log::warn!("channel {c} has zero variance; clamping std to 1");
                stats.clamped[c] = true;
            } else {
                stats.std[c] = std;
            }
        }
        Ok(stats)
    }

    pub fn standardize_state(&self, state: &mut [f64]) {
        let half = state.len() / 2;
        for (c, chunk) in state.chunks_exact_mut(half).enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            chunk.iter_mut().for_each(|x| *x = (*x - m) / s);
        }
    }

    pub fn destandardize_state(&self, state: &mut [f64]) {
        let half = state.len() / 2;
        for (c, chunk) in state.chunks_exact_mut(half).enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            chunk.iter_mut().for_each(|x| *x = *x * s + m);
        }
    }

    /// Statistics equivalent to applying `self` and then `inner`.
    fn then(&self, inner: &ChannelStats) -> ChannelStats {
        let mut out = *self;
        for c in 0..2 {
            out.mean[c] = self.mean[c] + self.std[c] * inner.mean[c];
            out.std[c] = self.std[c] * inner.std[c];
            out.clamped[c] = self.clamped[c] || inner.clamped[c];
        }
        out
    }
}

/// Standardizes every channel of `dataset` to zero mean and unit std.
///
/// The returned stats map the returned dataset back to the physical units of
/// the original data (composing with any standardization it already carried).
pub fn standardize(dataset: &TrajectoryDataset) -> Result<(TrajectoryDataset, ChannelStats)> {
    let states: Vec<&[f64]> = dataset.states().collect();
    let stats = ChannelStats::from_states(&states)?;
    let mut out = dataset.clone();
    for s in out.states_mut() {
        stats.standardize_state(s);
    }
    let total = match dataset.stats {
        Some(prev) => prev.then(&stats),
        None => stats,
    };
    out.stats = Some(total);
    Ok((out, stats))
}

/// Inverse of [`standardize`]: returns the dataset in physical units.
pub fn destandardize(dataset: &TrajectoryDataset) -> TrajectoryDataset {
    let mut out = dataset.clone();
    if let Some(stats) = dataset.stats {
        for s in out.states_mut() {
            stats.destandardize_state(s);
        }
    }
    out.stats = None;
    out
}
