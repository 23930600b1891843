use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{NsConfig, Solver};
use crate::dataset::{Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::fields::{face_average, Grid, Projector, VelocityField};
use crate::rng::{self, StreamRng};
use crate::spectral::{wavenumber, Fft2};

/// Peak wavenumber of the initial-condition spectrum `k⁴ exp(−k²/k₀²)`.
pub const IC_PEAK_WAVENUMBER: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataGenConfig {
    /// Physical time integrated and discarded before recording.
    pub burn_in: f64,
    /// Solver steps per saved state.
    pub stride: usize,
    pub n_train_traj: usize,
    pub n_test_traj: usize,
    pub n_train_steps: usize,
    pub n_test_steps: usize,
    /// Fine-to-coarse grid ratio of the face-averaging filter (1 = no filter).
    pub coarsen_factor: usize,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        Self {
            burn_in: 25.0,
            stride: 25,
            n_train_traj: 8,
            n_test_traj: 2,
            n_train_steps: 250,
            n_test_steps: 750,
            coarsen_factor: 8,
        }
    }
}

impl DataGenConfig {
    pub fn validate(&self, ns: &NsConfig) -> Result<()> {
        if !(self.burn_in >= 0.0) {
            return Err(Error::Config(format!(
                "burn_in must be >= 0, got {}",
                self.burn_in
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        let n = ns.grid.n();
        if self.coarsen_factor == 0
            || n % self.coarsen_factor != 0
            || (self.coarsen_factor > 1 && n / self.coarsen_factor < 4)
        {
            return Err(Error::Config(format!(
                "coarsen_factor {} incompatible with fine grid {n}",
                self.coarsen_factor
            )));
        }
        Ok(())
    }

    pub fn burn_in_steps(&self, dt: f64) -> usize {
        (self.burn_in / dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub train: TrajectoryDataset,
    pub test: TrajectoryDataset,
}

/// Random solenoidal field with spectrum `∝ k⁴ exp(−k²/k₀²)`, scaled to unit
/// RMS face velocity.
pub fn initial_condition(grid: Grid, k0: f64, rng: &mut StreamRng) -> VelocityField {
    let n = grid.n();
    let fft = Fft2::new(n);
    let mut component = || {
        let mut data = vec![Complex64::new(0.0, 0.0); grid.cells()];
        for ky in 0..n {
            for kx in 0..n {
                let k = ((wavenumber(kx, n).pow(2) + wavenumber(ky, n).pow(2)) as f64).sqrt();
                let re: f64 = rng.sample(rand_distr::StandardNormal);
                let im: f64 = rng.sample(rand_distr::StandardNormal);
                if k > 0.0 {
                    // |û|² ∝ E(k) / k in two dimensions.
                    let amp = (k.powi(3) * (-(k * k) / (k0 * k0)).exp()).sqrt();
                    data[ky * n + kx] = Complex64::new(re, im) * amp;
                }
            }
        }
        fft.inverse(&mut data);
        data.into_iter().map(|c| c.re).collect::<Vec<f64>>()
    };
    let u = component();
    let v = component();
    let mut q = VelocityField::new(grid, u, v).expect("shape");
    Projector::new(grid).project_in_place(&mut q);
    let rms = (q.norm_sq() / (2 * grid.cells()) as f64).sqrt();
    if rms > 0.0 {
        q.scale(1.0 / rms);
    }
    q
}

fn simulate(
    solver: &Solver,
    gen: &DataGenConfig,
    index: u64,
    n_steps: usize,
) -> Result<Trajectory> {
    let cfg = solver.config();
    let mut rng = rng::substream(cfg.seed, "dns", index);
    let mut q = initial_condition(cfg.grid, IC_PEAK_WAVENUMBER, &mut rng);
    q = solver.advance(&q, gen.burn_in_steps(cfg.dt))?;
    let mut out = Vec::with_capacity(n_steps);
    for s in 0..n_steps {
        if s > 0 {
            q = solver.advance(&q, gen.stride)?;
        }
        let saved = if gen.coarsen_factor > 1 {
            face_average(&q, gen.coarsen_factor)?
        } else {
            q.clone()
        };
        out.push(saved.to_flat());
    }
    log::info!("trajectory {index}: {n_steps} states recorded");
    Ok(out)
}

/// Runs the DNS for every train and test trajectory and records filtered
/// states every `stride` solver steps after the burn-in.
///
/// Trajectory `k` draws its initial condition from the `dns/k` substream of
/// `ns.seed` (test trajectories continue the index after the training ones),
/// so the output is independent of scheduling.
pub fn generate_dataset(ns: &NsConfig, gen: &DataGenConfig) -> Result<GeneratedData> {
    gen.validate(ns)?;
    let solver = Solver::new(*ns)?;
    let jobs: Vec<(u64, usize)> = (0..gen.n_train_traj)
        .map(|k| (k as u64, gen.n_train_steps))
        .chain((0..gen.n_test_traj).map(|k| ((gen.n_train_traj + k) as u64, gen.n_test_steps)))
        .collect();
    let mut trajectories = jobs
        .par_iter()
        .map(|&(index, steps)| simulate(&solver, gen, index, steps))
        .collect::<Result<Vec<_>>>()?;
    let test = trajectories.split_off(gen.n_train_traj);
    let coarse = Grid::new(ns.grid.n() / gen.coarsen_factor)?;
    let dt = gen.stride as f64 * ns.dt;
    Ok(GeneratedData {
        train: TrajectoryDataset::new(coarse.state_shape(), dt, trajectories)?,
        test: TrajectoryDataset::new(coarse.state_shape(), dt, test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::divergence;

    fn small() -> (NsConfig, DataGenConfig) {
        let ns = NsConfig {
            grid: Grid::new(32).unwrap(),
            re: 1000.0,
            dt: 5e-3,
            forcing_on: true,
            seed: 9,
        };
        let gen = DataGenConfig {
            burn_in: 0.1,
            stride: 2,
            n_train_traj: 1,
            n_test_traj: 1,
            n_train_steps: 3,
            n_test_steps: 2,
            coarsen_factor: 4,
        };
        (ns, gen)
    }

    #[test]
    fn initial_condition_is_solenoidal_with_unit_rms() {
        let g = Grid::new(32).unwrap();
        let q = initial_condition(g, 4.0, &mut rng::substream(0, "t", 0));
        assert!(divergence(&q).max_abs() < 1e-10);
        let rms = (q.norm_sq() / (2 * g.cells()) as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generates_divergence_free_coarse_states() {
        let (ns, gen) = small();
        let data = generate_dataset(&ns, &gen).unwrap();
        assert_eq!(data.train.n_trajectories(), 1);
        assert_eq!(data.train.trajectories[0].len(), 3);
        assert_eq!(data.test.trajectories[0].len(), 2);
        assert_eq!(data.train.shape.height, 8);
        assert!((data.train.dt - 0.01).abs() < 1e-15);
        for s in 0..3 {
            assert!(divergence(&data.train.field(0, s).unwrap()).max_abs() <= 1e-9);
        }
    }

    #[test]
    fn same_seed_gives_identical_data() {
        let (ns, gen) = small();
        assert_eq!(
            generate_dataset(&ns, &gen).unwrap(),
            generate_dataset(&ns, &gen).unwrap()
        );
    }

    #[test]
    fn coarse_shape_follows_factor() {
        let ns = NsConfig {
            grid: Grid::new(256).unwrap(),
            ..NsConfig::default()
        };
        let gen = DataGenConfig {
            coarsen_factor: 8,
            ..DataGenConfig::default()
        };
        gen.validate(&ns).unwrap();
        assert_eq!(ns.grid.n() / gen.coarsen_factor, 32);
        assert!(DataGenConfig {
            coarsen_factor: 3,
            ..gen
        }
        .validate(&ns)
        .is_err());
        assert!(DataGenConfig { stride: 0, ..gen }.validate(&ns).is_err());
    }
}
