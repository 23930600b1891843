//! Ordered sequences of (filtered) states.

use crate::error::{Error, Result};
use crate::fields::{ChannelStats, StateShape, VelocityField};

/// One trajectory: a time-ordered list of flattened states.
pub type Trajectory = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub shape: StateShape,
    /// Physical time between consecutive states.
    pub dt: f64,
    pub trajectories: Vec<Trajectory>,
    /// Present when the states are standardized; maps them back to physical units.
    pub stats: Option<ChannelStats>,
}

/// Index of a training example: the transition `step → step + 1` of `traj`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub traj: usize,
    pub step: usize,
}

impl TrajectoryDataset {
    pub fn new(shape: StateShape, dt: f64, trajectories: Vec<Trajectory>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!(
                "dataset time step must be positive, got {dt}"
            )));
        }
        for traj in &trajectories {
            for s in traj {
                shape.check(s)?;
            }
        }
        Ok(Self {
            shape,
            dt,
            trajectories,
            stats: None,
        })
    }

    pub fn from_fields(dt: f64, trajectories: Vec<Vec<VelocityField>>) -> Result<Self> {
        let Some(first) = trajectories.iter().flatten().next() else {
            return Err(Error::Empty("no states"));
        };
        let shape = first.grid().state_shape();
        let flat = trajectories
            .iter()
            .map(|t| t.iter().map(VelocityField::to_flat).collect())
            .collect();
        Self::new(shape, dt, flat)
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.iter().all(|t| t.is_empty())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.trajectories.iter().flatten().map(Vec::as_slice)
    }

    pub fn states_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.trajectories
            .iter_mut()
            .flatten()
            .map(Vec::as_mut_slice)
    }

    pub fn field(&self, traj: usize, step: usize) -> Result<VelocityField> {
        VelocityField::from_flat(self.shape.grid()?, &self.trajectories[traj][step])
    }

    /// Transitions usable with `history_len` past states of conditioning
    /// (`history_len = l`, i.e. `l + 1` conditioning states in total).
    pub fn pairs(&self, history_len: usize) -> Vec<PairIndex> {
        let mut out = Vec::new();
        for (traj, states) in self.trajectories.iter().enumerate() {
            for step in history_len..states.len().saturating_sub(1) {
                out.push(PairIndex { traj, step });
            }
        }
        out
    }

    /// Conditioning window `states[step - l ..= step]`.
    pub fn history(&self, pair: PairIndex, history_len: usize) -> Vec<&[f64]> {
        let t = &self.trajectories[pair.traj];
        t[pair.step - history_len..=pair.step]
            .iter()
            .map(Vec::as_slice)
            .collect()
    }

    /// Applies externally computed statistics (e.g. test data standardized
    /// with training statistics).
    pub fn standardized_with(&self, stats: &ChannelStats) -> Result<Self> {
        if self.stats.is_some() {
            return Err(Error::Config("dataset is already standardized".into()));
        }
        let mut out = self.clone();
        for s in out.states_mut() {
            stats.standardize_state(s);
        }
        out.stats = Some(*stats);
        Ok(out)
    }
}
