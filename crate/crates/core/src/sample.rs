//! Heun integration of the generative SDE in pseudo-time and autoregressive
//! rollout in physical time.
//!
//! One physical step integrates
//!
//! ```text
//! dX_τ = b_θ(X_τ, history, τ) dτ + γ_τ dW_τ,   X₀ = current state,
//! ```
//!
//! from `τ = 0` to `τ = 1` on a uniform grid. With projection enabled the
//! result is mapped to physical units, projected onto divergence-free fields
//! and re-standardized before it joins the conditioning window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::DriftNet;
use crate::error::{Error, Result};
use crate::fields::{ChannelStats, Projector, StateShape, VelocityField};
use crate::interpolant::InterpolantCoeffs;
use crate::rng::{fill_normal, substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    pub n_pseudo_steps: usize,
    pub seed: u64,
    pub project: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            n_pseudo_steps: 25,
            seed: 0,
            project: true,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pseudo_steps == 0 {
            return Err(Error::Config("n_pseudo_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One Heun step with additive noise `γ √dτ z`; the corrector reuses `z`.
pub fn heun_step<F>(
    mut drift: F,
    x: &[f64],
    tau: f64,
    dtau: f64,
    gamma: f64,
    z: &[f64],
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    if !(dtau > 0.0) {
        return Err(Error::Config(format!(
            "pseudo-time step must be positive, got {dtau}"
        )));
    }
    let noise = gamma * dtau.sqrt();
    let b0 = drift(x, tau)?;
    let pred: Vec<f64> = x
        .iter()
        .zip(&b0)
        .zip(z)
        .map(|((x, b), z)| x + b * dtau + noise * z)
        .collect();
    let b1 = drift(&pred, tau + dtau)?;
    Ok(x.iter()
        .zip(&b0)
        .zip(&b1)
        .zip(z)
        .map(|(((x, a), b), z)| x + 0.5 * (a + b) * dtau + noise * z)
        .collect())
}

/// Integrates from `τ = 0` to `τ = 1` in `n_steps` Heun steps with the
/// interpolant's noise schedule.
pub fn integrate_sde<F>(
    mut drift: F,
    x0: &[f64],
    coeffs: &InterpolantCoeffs,
    n_steps: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    if n_steps == 0 {
        return Err(Error::Config("n_pseudo_steps must be at least 1".into()));
    }
    let dtau = 1.0 / n_steps as f64;
    let mut x = x0.to_vec();
    let mut z = vec![0.0; x.len()];
    for k in 0..n_steps {
        let tau = k as f64 / n_steps as f64;
        let gamma = coeffs.eval(tau)?.gamma;
        fill_normal(rng, &mut z);
        x = heun_step(&mut drift, &x, tau, dtau, gamma, &z)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!(
                "SDE state after pseudo-step {k}"
            )));
        }
    }
    Ok(x)
}

/// Result of one physical step.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStep {
    /// Next state in physical units.
    pub physical: Vec<f64>,
    /// Next state in standardized units, for the conditioning window.
    pub standardized: Vec<f64>,
}

/// Everything needed to advance standardized states in physical time.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    net: &'a DriftNet,
    coeffs: &'a InterpolantCoeffs,
    stats: ChannelStats,
    cfg: SdeConfig,
    projector: Option<Projector>,
}

impl<'a> Generator<'a> {
    pub fn new(
        net: &'a DriftNet,
        coeffs: &'a InterpolantCoeffs,
        stats: ChannelStats,
        cfg: SdeConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        coeffs.validate()?;
        let projector = if cfg.project {
            Some(Projector::new(net.shape().grid()?))
        } else {
            None
        };
        Ok(Self {
            net,
            coeffs,
            stats,
            cfg,
            projector,
        })
    }

    pub fn shape(&self) -> StateShape {
        self.net.shape()
    }

    pub fn config(&self) -> &SdeConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    /// Samples the next state given a standardized conditioning window
    /// (oldest first, current state last).
    pub fn step(&self, history: &[&[f64]], rng: &mut StreamRng) -> Result<GeneratedStep> {
        let current = *history.last().ok_or(Error::Empty("conditioning history"))?;
        let next = integrate_sde(
            |x, tau| self.net.forward(x, history, tau),
            current,
            self.coeffs,
            self.cfg.n_pseudo_steps,
            rng,
        )?;
        let mut physical = next;
        self.stats.destandardize_state(&mut physical);
        if let Some(p) = &self.projector {
            let mut field = VelocityField::from_flat(p.grid(), &physical)?;
            p.project_in_place(&mut field);
            physical = field.to_flat();
        }
        let mut standardized = physical.clone();
        self.stats.standardize_state(&mut standardized);
        Ok(GeneratedStep {
            physical,
            standardized,
        })
    }

    /// One autoregressive trajectory of `n_steps` physical states.
    pub fn trajectory(
        &self,
        init_history: &[Vec<f64>],
        n_steps: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<Vec<f64>>> {
        let mut window: Vec<Vec<f64>> = init_history.to_vec();
        let mut out = Vec::with_capacity(n_steps);
        for step in 0..n_steps {
            let refs: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
            let next = self.step(&refs, rng).map_err(|e| match e {
                Error::NonFinite { context } => {
                    Error::non_finite(format!("physical step {step}: {context}"))
                }
                other => other,
            })?;
            window.remove(0);
            window.push(next.standardized);
            out.push(next.physical);
        }
        Ok(out)
    }
}

/// `generate_step` for callers holding the pieces separately.
pub fn generate_step(
    net: &DriftNet,
    coeffs: &InterpolantCoeffs,
    stats: &ChannelStats,
    history: &[&[f64]],
    cfg: &SdeConfig,
    rng: &mut StreamRng,
) -> Result<GeneratedStep> {
    Generator::new(net, coeffs, *stats, *cfg)?.step(history, rng)
}

/// Independent stochastic rollouts from one initial history.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutEnsemble {
    pub shape: StateShape,
    pub dt: f64,
    /// Initial conditioning window in physical units.
    pub initial: Vec<Vec<f64>>,
    /// `[realization][step]`, physical units, excluding the initial window.
    pub realizations: Vec<Vec<Vec<f64>>>,
    /// Reference trajectory aligned with the realizations, if known.
    pub reference: Option<Vec<Vec<f64>>>,
}

impl RolloutEnsemble {
    pub fn n_steps(&self) -> usize {
        self.realizations.first().map_or(0, Vec::len)
    }

    pub fn with_reference(mut self, reference: Vec<Vec<f64>>) -> Result<Self> {
        if reference.len() != self.n_steps() {
            return Err(Error::shape(
                format!("{} reference steps", self.n_steps()),
                reference.len(),
            ));
        }
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn field(&self, realization: usize, step: usize) -> Result<VelocityField> {
        VelocityField::from_flat(self.shape.grid()?, &self.realizations[realization][step])
    }
}

/// Runs `n_realizations` independent rollouts of `n_steps` from a
/// standardized initial window. Realization `r` draws its noise from the
/// substream `("rollout", r)` of `cfg.seed`.
pub fn rollout(
    gen: &Generator<'_>,
    init_history: &[Vec<f64>],
    n_steps: usize,
    n_realizations: usize,
    dt: f64,
) -> Result<RolloutEnsemble> {
    let window = gen.net.arch().window();
    if init_history.len() != window {
        return Err(Error::shape(
            format!("{window} initial states"),
            init_history.len(),
        ));
    }
    for s in init_history {
        gen.shape().check(s)?;
    }
    let realizations = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(gen.cfg.seed, "rollout", r as u64);
            gen.trajectory(init_history, n_steps, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let initial = init_history
        .iter()
        .map(|s| {
            let mut p = s.clone();
            gen.stats.destandardize_state(&mut p);
            p
        })
        .collect();
    Ok(RolloutEnsemble {
        shape: gen.shape(),
        dt,
        initial,
        realizations,
        reference: None,
    })
}
