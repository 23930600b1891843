//! Subcommand implementations.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, ensure, Context};
use ecsi_core::fields::standardize;
use ecsi_core::interpolant::{optimize_coeffs, Basis, InterpolantCoeffs, PairBatch};
use ecsi_core::metrics::evaluate;
use ecsi_core::nsolve::generate_dataset;
use ecsi_core::rng::substream_seed;
use ecsi_core::sample::{rollout, Generator, RolloutEnsemble, SdeConfig};
use ecsi_core::train::{split_validation, train_from, TrainState};
use ecsi_core::DriftNet;

use crate::atomic::{write_atomic, write_json};
use crate::checkpoint::Checkpoint;
use crate::config::PipelineConfig;
use crate::error::CliResult;
use crate::format::{DataFile, Metadata};

pub const TRAIN_FILE: &str = "train.ecsi";
pub const TEST_FILE: &str = "test.ecsi";
pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.ecsw";
pub const STATE_FILE: &str = "state.ecsw";
pub const REPORT_FILE: &str = "report.csv";

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn read_coeffs(path: &Path) -> CliResult<InterpolantCoeffs> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)
        .with_context(|| format!("parsing coefficients {}", path.display()))?)
}

/// DNS plus filtering; writes `train.ecsi`, `test.ecsi` and `config.json`
/// into `out_dir`.
pub fn dns(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<()> {
    let data = generate_dataset(&cfg.ns, &cfg.datagen)?;
    let meta = Metadata {
        re: Some(cfg.ns.re),
        seed: Some(cfg.seed),
        provenance: format!(
            "dns n={} factor={} dt={} stride={}",
            cfg.ns.grid.n(),
            cfg.datagen.coarsen_factor,
            cfg.ns.dt,
            cfg.datagen.stride
        ),
        ..Default::default()
    };
    DataFile::from_dataset(&data.train, meta.clone())?.write(&out_dir.join(TRAIN_FILE))?;
    DataFile::from_dataset(&data.test, meta)?.write(&out_dir.join(TEST_FILE))?;
    write_json(&out_dir.join(CONFIG_FILE), cfg)?;
    log::info!(
        "wrote {} training and {} test trajectories to {}",
        data.train.n_trajectories(),
        data.test.n_trajectories(),
        out_dir.display()
    );
    Ok(())
}

/// Fits the interpolant coefficients on the standardized training pairs.
pub fn optimize_interpolant(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> CliResult<()> {
    let init = cfg.interpolant.initial_coeffs();
    let coeffs = if cfg.interpolant.basis == Basis::Quadratic {
        init
    } else {
        let ds = DataFile::read(dataset)?.to_dataset()?;
        let (std_ds, _) = standardize(&ds)?;
        let batch = PairBatch::from_dataset(&std_ds, cfg.interpolant.max_pairs)?;
        let (coeffs, report) = optimize_coeffs(
            &init,
            &batch,
            cfg.interpolant.weights,
            &cfg.interpolant.optimizer,
        )?;
        log::info!(
            "optimized interpolant in {} iterations: loss {:.4e} -> {:.4e}, |g|_inf {:.2e}",
            report.iterations,
            report.initial_loss,
            report.final_loss,
            report.grad_inf_norm
        );
        write_json(&sibling(out, "report.json"), &report)?;
        coeffs
    };
    write_json(out, &coeffs)?;
    write_json(&sibling(out, "config.json"), cfg)?;
    Ok(())
}

/// Trains the drift network. Writes the best model, the resumable training
/// state and the per-epoch report into `out_dir` after every epoch.
pub fn train(
    cfg: &PipelineConfig,
    dataset: &Path,
    coeffs: &Path,
    out_dir: &Path,
    resume: bool,
    stop_after: Option<usize>,
) -> CliResult<()> {
    let coeffs = read_coeffs(coeffs)?;
    let raw = DataFile::read(dataset)?.to_dataset()?;
    let (std_ds, stats) = standardize(&raw)?;
    let (train_ds, val_ds) =
        split_validation(&std_ds, cfg.drift.history_len, cfg.train.val_rollout_steps)?;
    let state_path = out_dir.join(STATE_FILE);
    let state = if resume && state_path.exists() {
        let ckpt = Checkpoint::read(&state_path)?;
        if ckpt.stats != stats {
            return Err(anyhow!("checkpoint was trained on differently standardized data").into());
        }
        let state = ckpt
            .train_state
            .context("state file holds no training state")?;
        log::info!("resuming after epoch {}", state.epoch);
        state
    } else {
        TrainState::new(
            DriftNet::init(cfg.drift, std_ds.shape, cfg.seed)?,
            &cfg.train,
        )
    };
    write_json(&out_dir.join(CONFIG_FILE), cfg)?;
    let start_epoch = state.epoch;
    let save = |s: &TrainState| -> CliResult<ControlFlow<()>> {
        Checkpoint::training(s.clone(), stats).write(&state_path)?;
        Checkpoint::model(s.best_net(), stats).write(&out_dir.join(CHECKPOINT_FILE))?;
        write_atomic(
            &out_dir.join(REPORT_FILE),
            s.report(&cfg.train).to_csv().as_bytes(),
        )?;
        // Stopping here rather than lowering the epoch budget keeps the
        // learning-rate schedule identical to an uninterrupted run.
        Ok(if stop_after.is_some_and(|n| s.epoch >= start_epoch + n) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        })
    };
    let state = train_from(state, &train_ds, &val_ds, &coeffs, &cfg.train, save)?;
    // A run that was already finished never reaches the callback.
    Checkpoint::model(state.best_net(), stats).write(&out_dir.join(CHECKPOINT_FILE))?;
    write_atomic(
        &out_dir.join(REPORT_FILE),
        state.report(&cfg.train).to_csv().as_bytes(),
    )?;
    Ok(())
}

/// Rolls out `n_realizations` trajectories from the initial window of every
/// test trajectory. The output stores the window followed by the generated
/// states, in physical units.
pub fn sample(
    cfg: &PipelineConfig,
    checkpoint: &Path,
    coeffs: &Path,
    dataset: &Path,
    out: &Path,
) -> CliResult<()> {
    let ckpt = Checkpoint::read(checkpoint)?;
    let coeffs = read_coeffs(coeffs)?;
    let reference = DataFile::read(dataset)?.to_dataset()?;
    if reference.shape != ckpt.net.shape() {
        return Err(anyhow!(
            "dataset shape {:?} does not match the model",
            reference.shape
        )
        .into());
    }
    let reference = reference.standardized_with(&ckpt.stats)?;
    let window = ckpt.net.arch().window();
    let mut nested = vec![];
    for (t, traj) in reference.trajectories.iter().enumerate() {
        if traj.len() < window {
            return Err(
                anyhow!("test trajectory {t} is shorter than the conditioning window").into(),
            );
        }
        let available = traj.len() - window;
        let n_steps = cfg.sample.n_steps.map_or(available, |n| n.min(available));
        let sde = SdeConfig {
            n_pseudo_steps: cfg.sample.n_pseudo_steps,
            seed: substream_seed(cfg.seed, "sample", t as u64),
            project: cfg.sample.project,
        };
        let gen = Generator::new(&ckpt.net, &coeffs, ckpt.stats, sde)?;
        let ens = rollout(
            &gen,
            &traj[..window],
            n_steps,
            cfg.sample.n_realizations,
            reference.dt,
        )?;
        nested.push(
            ens.realizations
                .into_iter()
                .map(|r| ens.initial.iter().cloned().chain(r).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        );
        log::info!(
            "sampled test trajectory {t}: {} realizations of {n_steps} steps",
            cfg.sample.n_realizations
        );
    }
    let meta = Metadata {
        dt: reference.dt,
        seed: Some(cfg.seed),
        provenance: "sample".into(),
        initial_steps: Some(window),
        n_pseudo_steps: Some(cfg.sample.n_pseudo_steps),
        project: Some(cfg.sample.project),
        ..Default::default()
    };
    DataFile::from_nested(reference.shape, &nested, meta)?.write(out)?;
    write_json(&sibling(out, "config.json"), cfg)?;
    Ok(())
}

/// Builds per-trajectory ensembles aligned with the reference. A file without
/// an initial window (e.g. a plain dataset) is compared step for step.
pub fn load_ensembles(
    ensemble: &DataFile,
    reference: &DataFile,
) -> anyhow::Result<Vec<RolloutEnsemble>> {
    let window = ensemble.meta.initial_steps.unwrap_or(0);
    ensure!(
        ensemble.n_traj == reference.n_traj,
        "{} ensembles but {} reference trajectories",
        ensemble.n_traj,
        reference.n_traj
    );
    ensure!(
        ensemble.shape == reference.shape,
        "ensemble and reference shapes differ"
    );
    ensure!(
        reference.n_realizations == 1,
        "reference must hold a single realization per trajectory"
    );
    ensure!(
        ensemble.n_steps > window,
        "ensemble holds no generated steps"
    );
    let n_gen = ensemble.n_steps - window;
    ensure!(
        reference.n_steps >= ensemble.n_steps,
        "reference is shorter than the ensemble"
    );
    (0..ensemble.n_traj)
        .map(|t| {
            let reference_traj = reference.trajectory(t, 0);
            let ens = RolloutEnsemble {
                shape: ensemble.shape,
                dt: ensemble.meta.dt,
                initial: (0..window)
                    .map(|s| ensemble.state(t, 0, s).to_vec())
                    .collect(),
                realizations: (0..ensemble.n_realizations)
                    .map(|r| {
                        (window..ensemble.n_steps)
                            .map(|s| ensemble.state(t, r, s).to_vec())
                            .collect()
                    })
                    .collect(),
                reference: None,
            };
            Ok(ens.with_reference(reference_traj[window..window + n_gen].to_vec())?)
        })
        .collect()
}

/// Writes `metrics.csv`, `metrics.json`, `series.csv` and `spectra.csv`.
pub fn evaluate_cmd(
    cfg: &PipelineConfig,
    ensemble: &Path,
    reference: &Path,
    out_dir: &Path,
) -> CliResult<()> {
    let ens_file = DataFile::read(ensemble)?;
    let ref_file = DataFile::read(reference)?;
    let ensembles = load_ensembles(&ens_file, &ref_file)?;
    let report = evaluate(&ensembles, &cfg.metrics)?;
    write_atomic(
        &out_dir.join("metrics.csv"),
        report.summary_csv().as_bytes(),
    )?;
    write_atomic(&out_dir.join("series.csv"), report.series_csv().as_bytes())?;
    write_atomic(
        &out_dir.join("spectra.csv"),
        report.spectra_csv().as_bytes(),
    )?;
    write_json(&out_dir.join("metrics.json"), &report)?;
    write_json(&out_dir.join(CONFIG_FILE), cfg)?;
    log::info!(
        "mse@{} {:.4e}, mse@{} {:.4e}, energy W-1 {:.4e}, corr time {:.3}",
        report.short_horizon,
        report.mse_short,
        report.n_steps,
        report.mse_full,
        report.energy_w1,
        report.corr_time
    );
    Ok(())
}
