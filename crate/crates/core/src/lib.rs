//! Energy-consistent stochastic interpolants for probabilistic surrogate
//! modelling of 2D incompressible turbulence.
//!
//! The crate covers the whole pipeline:
//!
//! * [`fields`]: MAC-grid velocity fields, divergence, the discrete Leray
//!   projection, the face-averaging filter and per-channel standardization;
//! * [`nsolve`]: Kolmogorov-flow DNS used to generate filtered trajectories;
//! * [`interpolant`]: the stochastic interpolant, its energy-rate functional
//!   and the Newton optimizer for its Fourier coefficients;
//! * [`drift`]: a residual periodic conv net approximating the SDE drift,
//!   with hand-written reverse-mode gradients;
//! * [`train`]: drift training with AdamW, warmup + cosine schedule and
//!   rollout-based early stopping;
//! * [`sample`]: Heun integration of the generative SDE and autoregressive
//!   rollouts with optional divergence-free projection;
//! * [`metrics`]: MSE, energy, rate of change, Wasserstein-1, correlation time
//!   and energy spectra.

pub mod dataset;
pub mod drift;
pub mod error;
pub mod fields;
pub mod interpolant;
pub mod metrics;
pub mod nsolve;
pub mod rng;
pub mod sample;
pub mod spectral;
pub mod train;

pub use dataset::{PairIndex, Trajectory, TrajectoryDataset};
pub use drift::{DriftArch, DriftNet};
pub use error::{Error, Result};
pub use fields::{ChannelStats, Grid, ScalarField, StateShape, VelocityField};
pub use interpolant::{CoeffEval, InterpolantCoeffs, PairBatch};
pub use metrics::{MetricOptions, MetricReport};
pub use nsolve::{NsConfig, Solver};
pub use sample::{Generator, RolloutEnsemble, SdeConfig};
pub use train::{TrainConfig, TrainingReport};
