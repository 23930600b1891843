//! Fitting the drift network to the interpolant's drift target.
//!
//! Each training sample is a consecutive pair `(x₀, x₁) = (qⁿ, qⁿ⁺¹)` with
//! its conditioning window, one pseudo-time `τ ~ U[0, 1]` and one noise draw
//! `z` shared between `I_τ` and `R_τ`. After every epoch the model is rolled
//! out on held-out data and the parameters with the lowest rollout error
//! are kept.

mod optimizer;
mod schedule;

pub use optimizer::AdamW;
pub use schedule::lr_schedule;

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{PairIndex, TrajectoryDataset};
use crate::drift::DriftNet;
use crate::error::{Error, Result};
use crate::fields::ChannelStats;
use crate::interpolant::{drift_target, interpolate, InterpolantCoeffs};
use crate::rng::{normal_vec, substream};
use crate::sample::{Generator, SdeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub val_rollout_steps: usize,
    /// Rollout start points used for validation.
    pub val_windows: usize,
    pub val_pseudo_steps: usize,
    pub val_project: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr_max: 3e-4,
            warmup_steps: 100,
            weight_decay: 1e-5,
            betas: [0.9, 0.999],
            adam_eps: 1e-8,
            seed: 0,
            early_stop_patience: 10,
            val_rollout_steps: 5,
            val_windows: 4,
            val_pseudo_steps: 25,
            val_project: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config(
                "epochs, batch_size and early_stop_patience must be positive".into(),
            ));
        }
        if self.val_rollout_steps == 0 || self.val_windows == 0 || self.val_pseudo_steps == 0 {
            return Err(Error::Config(
                "validation rollout settings must be positive".into(),
            ));
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::Config(format!(
                "lr_max must be positive, got {}",
                self.lr_max
            )));
        }
        if self.weight_decay < 0.0
            || self.betas.iter().any(|b| !(0.0..1.0).contains(b))
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rollout_mse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_rollout_mse: f64,
    pub stopped_early: bool,
}

impl TrainingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_rollout_mse,lr\n");
        for r in &self.epochs {
            s.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                r.epoch, r.train_loss, r.val_rollout_mse, r.lr
            ));
        }
        s
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: DriftNet,
    pub optimizer: AdamW,
    /// Epochs completed.
    pub epoch: usize,
    /// Optimizer steps taken.
    pub step: usize,
    pub best_params: Vec<f64>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_since_best: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(net: DriftNet, cfg: &TrainConfig) -> Self {
        let optimizer = AdamW::new(net.n_params(), cfg.betas, cfg.adam_eps, cfg.weight_decay);
        let best_params = net.params().to_vec();
        Self {
            net,
            optimizer,
            epoch: 0,
            step: 0,
            best_params,
            best_val: f64::INFINITY,
            best_epoch: 0,
            epochs_since_best: 0,
            history: vec![],
        }
    }

    pub fn finished(&self, cfg: &TrainConfig) -> bool {
        self.epoch >= cfg.epochs || self.epochs_since_best >= cfg.early_stop_patience
    }

    pub fn best_net(&self) -> DriftNet {
        let mut net = self.net.clone();
        net.params_mut().copy_from_slice(&self.best_params);
        net
    }

    pub fn report(&self, cfg: &TrainConfig) -> TrainingReport {
        TrainingReport {
            epochs: self.history.clone(),
            best_epoch: self.best_epoch,
            best_val_rollout_mse: self.best_val,
            stopped_early: self.epochs_since_best >= cfg.early_stop_patience
                && self.epoch < cfg.epochs,
        }
    }
}

/// One fully specified training sample.
#[derive(Debug, Clone)]
pub struct DriftSample {
    pub x_tau: Vec<f64>,
    pub history: Vec<Vec<f64>>,
    pub tau: f64,
    pub target: Vec<f64>,
}

/// Draws `τ` and `z` for a pair and builds `(I_τ, R_τ)` with the same `z`.
pub fn make_sample<R: Rng + ?Sized>(
    ds: &TrajectoryDataset,
    pair: PairIndex,
    history_len: usize,
    coeffs: &InterpolantCoeffs,
    rng: &mut R,
) -> Result<DriftSample> {
    let traj = &ds.trajectories[pair.traj];
    let (x0, x1) = (&traj[pair.step], &traj[pair.step + 1]);
    let tau: f64 = rng.random();
    let z = normal_vec(rng, x0.len());
    Ok(DriftSample {
        x_tau: interpolate(coeffs, tau, x0, x1, &z)?,
        target: drift_target(coeffs, tau, x0, x1, &z)?,
        history: ds
            .history(pair, history_len)
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect(),
        tau,
    })
}

/// Mean loss and mean gradient over a batch. Per-sample gradients are
/// computed in parallel and summed in sample order.
pub fn batch_loss_grad(net: &DriftNet, batch: &[DriftSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let parts = batch
        .par_iter()
        .map(|s| {
            let h: Vec<&[f64]> = s.history.iter().map(Vec::as_slice).collect();
            net.loss_and_grad(&s.x_tau, &h, s.tau, &s.target)
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Splits off validation data: the last trajectory, or the tail of a single
/// trajectory.
pub fn split_validation(
    ds: &TrajectoryDataset,
    history_len: usize,
    rollout_steps: usize,
) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
    let mut train = ds.clone();
    let mut val = ds.clone();
    if ds.n_trajectories() >= 2 {
        val.trajectories = vec![train.trajectories.pop().expect("at least two")];
    } else {
        let traj = ds
            .trajectories
            .first()
            .ok_or(Error::Empty("training dataset"))?;
        let tail = (history_len + rollout_steps + 1).max(traj.len() / 5);
        if traj.len() < tail + history_len + 2 {
            return Err(Error::Config(format!(
                "trajectory of {} states is too short to hold out {tail} validation states",
                traj.len()
            )));
        }
        let cut = traj.len() - tail;
        train.trajectories = vec![traj[..cut].to_vec()];
        val.trajectories = vec![traj[cut..].to_vec()];
    }
    Ok((train, val))
}

/// Rollout start points: `(traj, step)` with room for the window and the
/// rollout, evenly spaced over all candidates.
fn validation_starts(
    val: &TrajectoryDataset,
    history_len: usize,
    steps: usize,
    windows: usize,
) -> Vec<(usize, usize)> {
    let candidates: Vec<(usize, usize)> = val
        .trajectories
        .iter()
        .enumerate()
        .flat_map(|(t, traj)| (history_len..traj.len().saturating_sub(steps)).map(move |s| (t, s)))
        .collect();
    if candidates.len() <= windows {
        return candidates;
    }
    (0..windows)
        .map(|k| candidates[k * candidates.len() / windows])
        .collect()
}

/// Mean squared error (physical units) of short rollouts against held-out
/// data. Noise streams are fixed across epochs.
pub fn validation_rollout_mse(
    net: &DriftNet,
    coeffs: &InterpolantCoeffs,
    val: &TrajectoryDataset,
    cfg: &TrainConfig,
) -> Result<f64> {
    let l = net.arch().history_len;
    let stats = val.stats.unwrap_or_else(ChannelStats::identity);
    let sde = SdeConfig {
        n_pseudo_steps: cfg.val_pseudo_steps,
        seed: cfg.seed,
        project: cfg.val_project,
    };
    let gen = Generator::new(net, coeffs, stats, sde)?;
    let starts = validation_starts(val, l, cfg.val_rollout_steps, cfg.val_windows);
    if starts.is_empty() {
        return Err(Error::Empty("validation windows"));
    }
    let errors = starts
        .par_iter()
        .enumerate()
        .map(|(w, &(t, s))| {
            let traj = &val.trajectories[t];
            let mut rng = substream(cfg.seed, "validation", w as u64);
            let out = gen.trajectory(&traj[s - l..=s], cfg.val_rollout_steps, &mut rng)?;
            let mut se = 0.0;
            let mut count = 0usize;
            for (k, state) in out.iter().enumerate() {
                let mut reference = traj[s + 1 + k].clone();
                stats.destandardize_state(&mut reference);
                se += state
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                count += state.len();
            }
            Ok(se / count as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

fn steps_per_epoch(n_pairs: usize, batch: usize) -> usize {
    n_pairs.div_ceil(batch)
}

/// Runs one epoch: shuffled mini-batches, AdamW updates, then validation.
pub fn run_epoch(
    state: &mut TrainState,
    train: &TrajectoryDataset,
    val: &TrajectoryDataset,
    coeffs: &InterpolantCoeffs,
    cfg: &TrainConfig,
) -> Result<EpochRecord> {
    let l = state.net.arch().history_len;
    let mut pairs = train.pairs(l);
    if pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let total_steps = cfg.epochs * steps_per_epoch(pairs.len(), cfg.batch_size);
    let mut rng = substream(cfg.seed, "train", state.epoch as u64);
    pairs.shuffle(&mut rng);
    let mut loss_sum = 0.0;
    let mut lr = 0.0;
    for chunk in pairs.chunks(cfg.batch_size) {
        let batch = chunk
            .iter()
            .map(|&p| make_sample(train, p, l, coeffs, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let (loss, grad) = batch_loss_grad(&state.net, &batch)?;
        state.step += 1;
        lr = lr_schedule(state.step, cfg.lr_max, cfg.warmup_steps, total_steps);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged {
                step: state.step,
                lr,
                loss,
            });
        }
        state.optimizer.step(state.net.params_mut(), &grad, lr);
        loss_sum += loss * chunk.len() as f64;
    }
    let val_mse = validation_rollout_mse(&state.net, coeffs, val, cfg).unwrap_or_else(|e| {
        log::warn!("validation rollout failed at epoch {}: {e}", state.epoch);
        f64::INFINITY
    });
    let record = EpochRecord {
        epoch: state.epoch,
        train_loss: loss_sum / pairs.len() as f64,
        val_rollout_mse: val_mse,
        lr,
    };
    if val_mse < state.best_val {
        state.best_val = val_mse;
        state.best_epoch = state.epoch;
        state.best_params.copy_from_slice(state.net.params());
        state.epochs_since_best = 0;
    } else {
        state.epochs_since_best += 1;
    }
    state.epoch += 1;
    state.history.push(record.clone());
    log::info!(
        "epoch {}: train loss {:.4e}, validation rollout mse {:.4e}, lr {:.2e}",
        record.epoch,
        record.train_loss,
        record.val_rollout_mse,
        record.lr
    );
    Ok(record)
}

/// Trains until the epoch budget or early stopping. `on_epoch` runs after
/// every epoch (e.g. to checkpoint) and may end training early.
pub fn train_from<E: From<Error>>(
    mut state: TrainState,
    train: &TrajectoryDataset,
    val: &TrajectoryDataset,
    coeffs: &InterpolantCoeffs,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState) -> std::result::Result<ControlFlow<()>, E>,
) -> std::result::Result<TrainState, E> {
    cfg.validate()?;
    coeffs.validate()?;
    state.net.shape().check(
        train
            .trajectories
            .first()
            .and_then(|t| t.first())
            .ok_or(Error::Empty("training dataset"))?,
    )?;
    while !state.finished(cfg) {
        run_epoch(&mut state, train, val, coeffs, cfg)?;
        if on_epoch(&state)?.is_break() {
            break;
        }
    }
    Ok(state)
}

/// Trains `net` on a standardized dataset. Without an explicit validation
/// set, one is split off with [`split_validation`].
pub fn train(
    dataset: &TrajectoryDataset,
    validation: Option<&TrajectoryDataset>,
    coeffs: &InterpolantCoeffs,
    net: DriftNet,
    cfg: &TrainConfig,
) -> Result<(DriftNet, TrainingReport)> {
    cfg.validate()?;
    let (train, val) = match validation {
        Some(v) => (dataset.clone(), v.clone()),
        None => split_validation(dataset, net.arch().history_len, cfg.val_rollout_steps)?,
    };
    let state = train_from::<Error>(TrainState::new(net, cfg), &train, &val, coeffs, cfg, |_| {
        Ok(ControlFlow::Continue(()))
    })?;
    Ok((state.best_net(), state.report(cfg)))
}
