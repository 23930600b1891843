//! Desk-scale Kolmogorov pipeline shared by the rollout criteria: DNS on a
//! 64² grid filtered to 16², two trained drift models, 750-step rollouts.

use std::sync::OnceLock;
use std::time::Instant;

use ecsi_core::dataset::TrajectoryDataset;
use ecsi_core::drift::{DriftArch, DriftNet};
use ecsi_core::fields::{divergence, kinetic_energy, standardize, ChannelStats, Grid};
use ecsi_core::interpolant::{optimize_coeffs, InterpolantCoeffs, LossWeights, OptimizeOptions, PairBatch};
use ecsi_core::metrics::{evaluate, MetricOptions};
use ecsi_core::nsolve::{generate_dataset, DataGenConfig, NsConfig};
use ecsi_core::rng::substream_seed;
use ecsi_core::sample::{rollout, Generator, RolloutEnsemble, SdeConfig};
use ecsi_core::train::{train, TrainConfig};

use crate::{CheckResult, Verdict};

const SEED: u64 = 2024;
const GAMMA_SCALE: f64 = 0.1;
const ROLLOUT_STEPS: usize = 750;
const REALIZATIONS: usize = 5;
const PSEUDO_STEPS: usize = 25;

struct Arm {
    energy_w1: f64,
    mse_short: f64,
    max_energy: f64,
    ensembles: Vec<RolloutEnsemble>,
}

struct Desk {
    optimized_div: Arm,
    plain: Arm,
}

fn arch() -> DriftArch {
    DriftArch { channels: 16, depth: 2, kernel: 3, embed_dim: 16, history_len: 1 }
}

fn train_config() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        batch_size: 16,
        lr_max: 1e-3,
        warmup_steps: 50,
        early_stop_patience: 5,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn progress(start: &Instant, msg: &str) {
    eprintln!("[desk pipeline {:>7.1} s] {msg}", start.elapsed().as_secs_f64());
}

fn run_arm(
    name: &str,
    coeffs: &InterpolantCoeffs,
    project: bool,
    train_data: &TrajectoryDataset,
    test_data: &TrajectoryDataset,
    stats: ChannelStats,
    start: &Instant,
) -> ecsi_core::Result<Arm> {
    let net = DriftNet::init(arch(), train_data.shape, SEED)?;
    let (net, report) = train(train_data, None, coeffs, net, &train_config())?;
    progress(start, &format!("{name}: trained, best epoch {} of {}", report.best_epoch, report.epochs.len()));
    let window = net.arch().window();
    let mut ensembles = vec![];
    for (t, traj) in test_data.trajectories.iter().enumerate() {
        let sde = SdeConfig { n_pseudo_steps: PSEUDO_STEPS, seed: substream_seed(SEED, "sample", t as u64), project };
        let gen = Generator::new(&net, coeffs, stats, sde)?;
        let ens = rollout(&gen, &traj[..window], ROLLOUT_STEPS, REALIZATIONS, test_data.dt)?;
        let mut reference: Vec<Vec<f64>> = traj[window..window + ROLLOUT_STEPS].to_vec();
        for s in &mut reference {
            stats.destandardize_state(s);
        }
        ensembles.push(ens.with_reference(reference)?);
        progress(start, &format!("{name}: rolled out test trajectory {t}"));
    }
    let report = evaluate(&ensembles, &MetricOptions::default())?;
    let mut max_energy = 0.0f64;
    for ens in &ensembles {
        for (r, traj) in ens.realizations.iter().enumerate() {
            for step in 0..traj.len() {
                max_energy = max_energy.max(kinetic_energy(&ens.field(r, step)?));
            }
        }
    }
    Ok(Arm { energy_w1: report.energy_w1, mse_short: report.mse_short, max_energy, ensembles })
}

fn build() -> ecsi_core::Result<Desk> {
    let start = Instant::now();
    let ns = NsConfig { grid: Grid::new(64)?, re: 1000.0, dt: 2e-3, forcing_on: true, seed: SEED };
    let datagen = DataGenConfig {
        burn_in: 25.0,
        stride: 25,
        n_train_traj: 4,
        n_test_traj: 2,
        n_train_steps: 250,
        n_test_steps: ROLLOUT_STEPS + arch().window(),
        coarsen_factor: 4,
    };
    let data = generate_dataset(&ns, &datagen)?;
    progress(&start, "DNS done");
    let (train_data, stats) = standardize(&data.train)?;
    let test_data = data.test.standardized_with(&stats)?;

    let batch = PairBatch::from_dataset(&train_data, None)?;
    let init = InterpolantCoeffs::zeros(5).with_gamma_scale(GAMMA_SCALE);
    let (optimized, _) = optimize_coeffs(&init, &batch, LossWeights::default(), &OptimizeOptions::default())?;
    progress(&start, "interpolant optimized");

    let optimized_div = run_arm("SI_opt,div", &optimized, true, &train_data, &test_data, stats, &start)?;
    let plain =
        run_arm("SI", &InterpolantCoeffs::quadratic(GAMMA_SCALE), false, &train_data, &test_data, stats, &start)?;
    Ok(Desk { optimized_div, plain })
}

fn desk() -> Result<&'static Desk, String> {
    static DESK: OnceLock<Result<Desk, String>> = OnceLock::new();
    DESK.get_or_init(|| build().map_err(|e| e.to_string())).as_ref().map_err(Clone::clone)
}

pub fn energy_w1_ordering() -> CheckResult {
    let desk = desk()?;
    let (opt, plain) = (&desk.optimized_div, &desk.plain);
    Ok(Verdict::new(
        opt.energy_w1 <= plain.energy_w1,
        format!(
            "energy W-1 {:.4e} (SI_opt,div) vs {:.4e} (SI); short-horizon MSE {:.3e} vs {:.3e}; max energy {:.3e} vs {:.3e}",
            opt.energy_w1, plain.energy_w1, opt.mse_short, plain.mse_short, opt.max_energy, plain.max_energy
        ),
    ))
}

pub fn rollout_divergence() -> CheckResult {
    let desk = desk()?;
    let mut worst = 0.0f64;
    let mut worst_relative = 0.0f64;
    let mut states = 0;
    for ens in &desk.optimized_div.ensembles {
        for (r, traj) in ens.realizations.iter().enumerate() {
            assert_eq!(traj.len(), ROLLOUT_STEPS);
            for step in 0..traj.len() {
                let field = ens.field(r, step)?;
                let div = divergence(&field).max_abs();
                worst = worst.max(div);
                worst_relative = worst_relative.max(div * field.grid().h() / field.max_abs().max(f64::MIN_POSITIVE));
                states += 1;
            }
        }
    }
    Ok(Verdict::new(worst <= 1e-9, format!(
            "max |div| {worst:.2e} over {states} projected states (max h|div|/max|q| {worst_relative:.2e}, max energy {:.3e})",
            desk.optimized_div.max_energy
        )))
}
