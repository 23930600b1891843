//! Binary trajectory files.
//!
//! ```text
//! offset  type       field
//! 0       [u8; 4]    magic "ECSI"
//! 4       u32        format version (1)
//! 8       u32        nx
//! 12      u32        ny
//! 16      u32        channels (always 2: u, v)
//! 20      u32        trajectories
//! 24      u32        steps per trajectory
//! 28      u32        realizations per trajectory
//! 32      u32        dtype tag (1 = f32, 2 = f64)
//! 36      payload    [trajectory][realization][step][channel][y][x]
//! ...     footer     UTF-8 JSON metadata up to end of file
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use anyhow::{bail, ensure, Context};
use ecsi_core::{ChannelStats, StateShape, TrajectoryDataset};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;

pub const MAGIC: &[u8; 4] = b"ECSI";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn from_tag(tag: u32) -> anyhow::Result<Self> {
        match tag {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            t => bail!("unknown dtype tag {t}"),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// JSON footer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Metadata {
    /// Physical time between stored steps.
    pub dt: f64,
    pub re: Option<f64>,
    /// Statistics the payload was standardized with, if it was.
    pub stats: Option<ChannelStats>,
    pub seed: Option<u64>,
    pub provenance: String,
    /// For ensembles: the leading steps that are the shared initial window.
    pub initial_steps: Option<usize>,
    pub n_pseudo_steps: Option<usize>,
    pub project: Option<bool>,
}

impl Default for Metadata {
    fn default() -> Self {
        Self {
            dt: 1.0,
            re: None,
            stats: None,
            seed: None,
            provenance: String::new(),
            initial_steps: None,
            n_pseudo_steps: None,
            project: None,
        }
    }
}

/// A `[trajectory][realization][step]` array of flattened states.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub shape: StateShape,
    pub n_traj: usize,
    pub n_realizations: usize,
    pub n_steps: usize,
    pub dtype: Dtype,
    values: Vec<f64>,
    pub meta: Metadata,
}

impl DataFile {
    pub fn new(
        shape: StateShape,
        n_traj: usize,
        n_realizations: usize,
        n_steps: usize,
        values: Vec<f64>,
        meta: Metadata,
    ) -> anyhow::Result<Self> {
        ensure!(
            values.len() == n_traj * n_realizations * n_steps * shape.len(),
            "payload of {} values does not match {n_traj}x{n_realizations}x{n_steps} states of {}",
            values.len(),
            shape.len()
        );
        Ok(Self {
            shape,
            n_traj,
            n_realizations,
            n_steps,
            dtype: Dtype::F64,
            values,
            meta,
        })
    }

    /// Nested `[trajectory][realization][step]` states.
    pub fn from_nested(
        shape: StateShape,
        data: &[Vec<Vec<Vec<f64>>>],
        meta: Metadata,
    ) -> anyhow::Result<Self> {
        let n_traj = data.len();
        let n_real = data.first().map_or(0, Vec::len);
        let n_steps = data.first().and_then(|t| t.first()).map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_traj * n_real * n_steps * shape.len());
        for traj in data {
            ensure!(traj.len() == n_real, "ragged realization counts");
            for real in traj {
                ensure!(real.len() == n_steps, "ragged trajectory lengths");
                for s in real {
                    ensure!(
                        s.len() == shape.len(),
                        "state of length {} for shape {shape:?}",
                        s.len()
                    );
                    values.extend_from_slice(s);
                }
            }
        }
        Self::new(shape, n_traj, n_real, n_steps, values, meta)
    }

    pub fn from_dataset(ds: &TrajectoryDataset, mut meta: Metadata) -> anyhow::Result<Self> {
        meta.dt = ds.dt;
        meta.stats = ds.stats;
        let nested: Vec<Vec<Vec<Vec<f64>>>> =
            ds.trajectories.iter().map(|t| vec![t.clone()]).collect();
        Self::from_nested(ds.shape, &nested, meta)
    }

    /// Single-realization files as a dataset.
    pub fn to_dataset(&self) -> anyhow::Result<TrajectoryDataset> {
        ensure!(
            self.n_realizations == 1,
            "expected a dataset with one realization, found {}",
            self.n_realizations
        );
        let trajectories = (0..self.n_traj)
            .map(|t| {
                (0..self.n_steps)
                    .map(|s| self.state(t, 0, s).to_vec())
                    .collect()
            })
            .collect();
        let mut ds = TrajectoryDataset::new(self.shape, self.meta.dt, trajectories)?;
        ds.stats = self.meta.stats;
        Ok(ds)
    }

    pub fn state(&self, traj: usize, realization: usize, step: usize) -> &[f64] {
        let len = self.shape.len();
        let at = ((traj * self.n_realizations + realization) * self.n_steps + step) * len;
        &self.values[at..at + len]
    }

    pub fn trajectory(&self, traj: usize, realization: usize) -> Vec<Vec<f64>> {
        (0..self.n_steps)
            .map(|s| self.state(traj, realization, s).to_vec())
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        let dims = [
            VERSION,
            self.shape.width as u32,
            self.shape.height as u32,
            StateShape::CHANNELS as u32,
            self.n_traj as u32,
            self.n_steps as u32,
            self.n_realizations as u32,
            self.dtype.tag(),
        ];
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match self.dtype {
            Dtype::F64 => self
                .values
                .iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Dtype::F32 => self
                .values
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        }
        out.extend_from_slice(serde_json::to_string(&self.meta)?.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> anyhow::Result<Self> {
        ensure!(
            bytes.len() >= HEADER_LEN,
            "file too short for the header ({} bytes)",
            bytes.len()
        );
        ensure!(&bytes[..4] == MAGIC, "bad magic, not a trajectory file");
        let word = |i: usize| {
            u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
        };
        let version = word(0);
        ensure!(
            version == VERSION as usize,
            "unsupported format version {version}"
        );
        let (nx, ny, channels, n_traj, n_steps, n_real) =
            (word(1), word(2), word(3), word(4), word(5), word(6));
        ensure!(
            channels == StateShape::CHANNELS,
            "expected 2 channels, found {channels}"
        );
        let dtype = Dtype::from_tag(word(7) as u32)?;
        let shape = StateShape::new(ny, nx);
        let count = n_traj
            .checked_mul(n_real)
            .and_then(|c| c.checked_mul(n_steps))
            .and_then(|c| c.checked_mul(shape.len()))
            .context("header dimensions overflow")?;
        let payload_end = HEADER_LEN + count * dtype.size();
        ensure!(
            bytes.len() >= payload_end,
            "payload truncated: header promises {count} values"
        );
        let payload = &bytes[HEADER_LEN..payload_end];
        let values = match dtype {
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
        };
        let meta: Metadata =
            serde_json::from_slice(&bytes[payload_end..]).context("reading the metadata footer")?;
        Ok(Self {
            shape,
            n_traj,
            n_realizations: n_real,
            n_steps,
            dtype,
            values,
            meta,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}
