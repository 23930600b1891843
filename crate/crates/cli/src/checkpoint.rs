//! Parameter checkpoints.
//!
//! ```text
//! [u8; 4]  magic "ECSW"
//! u32      version (1)
//! u64      header length in bytes
//! header   UTF-8 JSON: architecture, state shape, standardization stats,
//!          scalar training state, and the names and lengths of the arrays
//! arrays   f64 little-endian, concatenated in header order
//! ```

use std::path::Path;

use anyhow::{ensure, Context};
use ecsi_core::drift::{DriftArch, DriftNet};
use ecsi_core::train::{AdamW, EpochRecord, TrainState};
use ecsi_core::{ChannelStats, StateShape};
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;

pub const MAGIC: &[u8; 4] = b"ECSW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    len: usize,
}

/// Optimizer scalars; the moment vectors travel as arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    epoch: usize,
    step: usize,
    best_epoch: usize,
    epochs_since_best: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: DriftArch,
    shape: StateShape,
    stats: ChannelStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerHeader>,
    arrays: Vec<ArraySpec>,
}

/// A drift network plus the statistics its inputs are standardized with,
/// and optionally the complete training state for resuming.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: DriftNet,
    pub stats: ChannelStats,
    pub train_state: Option<TrainState>,
}

const HISTORY_FIELDS: usize = 4;

impl Checkpoint {
    pub fn model(net: DriftNet, stats: ChannelStats) -> Self {
        Self {
            net,
            stats,
            train_state: None,
        }
    }

    pub fn training(state: TrainState, stats: ChannelStats) -> Self {
        Self {
            net: state.net.clone(),
            stats,
            train_state: Some(state),
        }
    }

    pub fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut arrays: Vec<(&str, Vec<f64>)> = vec![("params", self.net.params().to_vec())];
        let optimizer = self.train_state.as_ref().map(|s| {
            arrays.push(("best_params", s.best_params.clone()));
            arrays.push(("adam_m", s.optimizer.m.clone()));
            arrays.push(("adam_v", s.optimizer.v.clone()));
            arrays.push(("best_val", vec![s.best_val]));
            let history = s
                .history
                .iter()
                .flat_map(|r| [r.epoch as f64, r.train_loss, r.val_rollout_mse, r.lr])
                .collect();
            arrays.push(("history", history));
            OptimizerHeader {
                beta1: s.optimizer.beta1,
                beta2: s.optimizer.beta2,
                eps: s.optimizer.eps,
                weight_decay: s.optimizer.weight_decay,
                t: s.optimizer.t,
                epoch: s.epoch,
                step: s.step,
                best_epoch: s.best_epoch,
                epochs_since_best: s.epochs_since_best,
            }
        });
        let header = Header {
            arch: *self.net.arch(),
            shape: self.net.shape(),
            stats: self.stats,
            optimizer,
            arrays: arrays
                .iter()
                .map(|(n, a)| ArraySpec {
                    name: n.to_string(),
                    len: a.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, a) in &arrays {
            a.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> anyhow::Result<Self> {
        ensure!(
            bytes.len() >= 16 && &bytes[..4] == MAGIC,
            "not a checkpoint file"
        );
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        ensure!(
            version == VERSION,
            "unsupported checkpoint version {version}"
        );
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..).expect("checked length");
        ensure!(body.len() >= header_len, "checkpoint header truncated");
        let header: Header =
            serde_json::from_slice(&body[..header_len]).context("reading checkpoint header")?;
        let data = &body[header_len..];
        let take = |name: &str| -> anyhow::Result<Vec<f64>> {
            let spec = header
                .arrays
                .iter()
                .find(|a| a.name == name)
                .with_context(|| format!("missing array {name}"))?;
            let offset: usize = header
                .arrays
                .iter()
                .take_while(|a| a.name != name)
                .map(|a| a.len * 8)
                .sum();
            let end = offset + spec.len * 8;
            ensure!(data.len() >= end, "array {name} truncated");
            Ok(data[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let net = DriftNet::from_params(header.arch, header.shape, take("params")?)?;
        let train_state = match &header.optimizer {
            None => None,
            Some(o) => {
                let history_flat = take("history")?;
                ensure!(
                    history_flat.len() % HISTORY_FIELDS == 0,
                    "malformed training history"
                );
                let history = history_flat
                    .chunks_exact(HISTORY_FIELDS)
                    .map(|r| EpochRecord {
                        epoch: r[0] as usize,
                        train_loss: r[1],
                        val_rollout_mse: r[2],
                        lr: r[3],
                    })
                    .collect();
                let optimizer = AdamW {
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                    weight_decay: o.weight_decay,
                    m: take("adam_m")?,
                    v: take("adam_v")?,
                    t: o.t,
                };
                ensure!(
                    optimizer.m.len() == net.n_params() && optimizer.v.len() == net.n_params(),
                    "optimizer state size mismatch"
                );
                let best_params = take("best_params")?;
                ensure!(
                    best_params.len() == net.n_params(),
                    "best parameter size mismatch"
                );
                Some(TrainState {
                    net: net.clone(),
                    optimizer,
                    epoch: o.epoch,
                    step: o.step,
                    best_params,
                    best_val: *take("best_val")?.first().context("empty best_val")?,
                    best_epoch: o.best_epoch,
                    epochs_since_best: o.epochs_since_best,
                    history,
                })
            }
        };
        Ok(Self {
            net,
            stats: header.stats,
            train_state,
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
