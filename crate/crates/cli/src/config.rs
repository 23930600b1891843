//! JSON pipeline configuration. Every section and key is optional; unknown
//! keys are rejected.

use std::path::Path;

use anyhow::Context;
use ecsi_core::drift::DriftArch;
use ecsi_core::interpolant::{
    Basis, InterpolantCoeffs, LossWeights, OptimizeOptions, DEFAULT_GAMMA_SCALE, DEFAULT_N_COEFFS,
};
use ecsi_core::metrics::MetricOptions;
use ecsi_core::nsolve::{DataGenConfig, NsConfig};
use ecsi_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolantSection {
    pub basis: Basis,
    /// Fourier coefficients per series (`N_α = N_β`).
    pub n_coeffs: usize,
    pub gamma_scale: f64,
    /// Cap on the number of consecutive pairs used by the optimizer.
    pub max_pairs: Option<usize>,
    pub weights: LossWeights,
    pub optimizer: OptimizeOptions,
}

impl Default for InterpolantSection {
    fn default() -> Self {
        Self {
            basis: Basis::Fourier,
            n_coeffs: DEFAULT_N_COEFFS,
            gamma_scale: DEFAULT_GAMMA_SCALE,
            max_pairs: None,
            weights: LossWeights::default(),
            optimizer: OptimizeOptions::default(),
        }
    }
}

impl InterpolantSection {
    pub fn initial_coeffs(&self) -> InterpolantCoeffs {
        match self.basis {
            Basis::Fourier => {
                InterpolantCoeffs::zeros(self.n_coeffs).with_gamma_scale(self.gamma_scale)
            }
            Basis::Quadratic => InterpolantCoeffs::quadratic(self.gamma_scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub n_pseudo_steps: usize,
    /// Project every generated state onto divergence-free fields.
    pub project: bool,
    /// Realizations per test trajectory.
    pub n_realizations: usize,
    /// Generated steps per trajectory; defaults to the rest of the reference.
    pub n_steps: Option<usize>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            n_pseudo_steps: 25,
            project: true,
            n_realizations: 5,
            n_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; overrides the per-section seeds.
    pub seed: u64,
    pub ns: NsConfig,
    pub datagen: DataGenConfig,
    pub interpolant: InterpolantSection,
    pub drift: DriftArch,
    pub train: TrainConfig,
    pub sample: SampleSection,
    pub metrics: MetricOptions,
}

impl PipelineConfig {
    /// Reads `path` (or defaults when `None`), applies the seed override and
    /// validates.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> CliResult<Self> {
        let mut cfg: PipelineConfig = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))
                    .map_err(CliError::Config)?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
                    .map_err(CliError::Config)?
            }
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.ns.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.ns.validate()?;
        self.datagen.validate(&self.ns)?;
        self.drift.validate()?;
        self.train.validate()?;
        self.interpolant.optimizer.validate()?;
        self.interpolant.initial_coeffs().validate()?;
        if self.sample.n_pseudo_steps == 0 || self.sample.n_realizations == 0 {
            return Err(CliError::config(
                "sample.n_pseudo_steps and sample.n_realizations must be positive",
            ));
        }
        Ok(())
    }
}
