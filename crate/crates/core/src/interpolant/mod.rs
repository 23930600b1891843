//! The stochastic interpolant `I_τ = α_τ x₀ + β_τ x₁ + γ_τ W_τ` and its
//! pseudo-time derivative `R_τ = α̇_τ x₀ + β̇_τ x₁ + γ̇_τ W_τ`.
//!
//! `α` and `β` are a fixed trigonometric base plus a sine series,
//!
//! ```text
//! α_τ = cos(πτ/2) + Σᵢ α̂ᵢ sin(iπτ),   β_τ = sin(πτ/2) + Σᵢ β̂ᵢ sin(iπτ),
//! ```
//!
//! so the boundary conditions `α₀ = β₁ = 1`, `α₁ = β₀ = 0` hold for every
//! coefficient vector. The noise schedule is `γ_τ = γ_s (1 − τ)`.
//!
//! Wiener increments are passed as standard-normal draws `z`; the interpolant
//! uses `W_τ = √τ z`.

mod energy;
mod optimize;

pub use energy::{
    energy_loss, energy_loss_grad, energy_rate, energy_rate_h, transport_loss, transport_loss_grad,
    zero_rate, NoiseMode, PairBatch, PairMoments, Quadrature,
};
pub use optimize::{
    optimize_coeffs, optimize_coeffs_with_target, LossWeights, OptimizeOptions, OptimizeReport,
};

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA_SCALE: f64 = 0.1;
pub const DEFAULT_N_COEFFS: usize = 5;

/// Functional form of `α` and `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Trigonometric base plus sine series (optimizable).
    #[default]
    Fourier,
    /// The fixed baseline `α = 1 − τ`, `β = τ²`.
    Quadratic,
}

/// Coefficients defining `α_τ`, `β_τ` and `γ_τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoeffsRepr", into = "CoeffsRepr")]
pub struct InterpolantCoeffs {
    pub alpha_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub gamma_scale: f64,
    pub basis: Basis,
}

/// On-disk representation: `{"n_alpha", "alpha_hat", "beta_hat", "gamma_scale"}`
/// (plus `"basis"` for the non-default quadratic baseline).
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoeffsRepr {
    n_alpha: usize,
    alpha_hat: Vec<f64>,
    beta_hat: Vec<f64>,
    gamma_scale: f64,
    #[serde(default, skip_serializing_if = "is_fourier")]
    basis: Basis,
}

fn is_fourier(b: &Basis) -> bool {
    *b == Basis::Fourier
}

impl TryFrom<CoeffsRepr> for InterpolantCoeffs {
    type Error = Error;

    fn try_from(r: CoeffsRepr) -> Result<Self> {
        if r.n_alpha != r.alpha_hat.len() {
            return Err(Error::Config(format!(
                "n_alpha = {} but {} alpha coefficients",
                r.n_alpha,
                r.alpha_hat.len()
            )));
        }
        let c = InterpolantCoeffs {
            alpha_hat: r.alpha_hat,
            beta_hat: r.beta_hat,
            gamma_scale: r.gamma_scale,
            basis: r.basis,
        };
        c.validate()?;
        Ok(c)
    }
}

impl From<InterpolantCoeffs> for CoeffsRepr {
    fn from(c: InterpolantCoeffs) -> Self {
        CoeffsRepr {
            n_alpha: c.alpha_hat.len(),
            alpha_hat: c.alpha_hat,
            beta_hat: c.beta_hat,
            gamma_scale: c.gamma_scale,
            basis: c.basis,
        }
    }
}

impl Default for InterpolantCoeffs {
    fn default() -> Self {
        Self::zeros(DEFAULT_N_COEFFS)
    }
}

/// `α, β, γ` and their τ-derivatives at one pseudo-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffEval {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_dot: f64,
    pub beta_dot: f64,
    pub gamma_dot: f64,
}

impl InterpolantCoeffs {
    pub fn new(alpha_hat: Vec<f64>, beta_hat: Vec<f64>, gamma_scale: f64) -> Result<Self> {
        let c = Self {
            alpha_hat,
            beta_hat,
            gamma_scale,
            basis: Basis::Fourier,
        };
        c.validate()?;
        Ok(c)
    }

    /// Unoptimized Fourier interpolant with `n` zero coefficients per series.
    pub fn zeros(n: usize) -> Self {
        Self {
            alpha_hat: vec![0.0; n],
            beta_hat: vec![0.0; n],
            gamma_scale: DEFAULT_GAMMA_SCALE,
            basis: Basis::Fourier,
        }
    }

    /// Baseline `α = 1 − τ`, `β = τ²`.
    pub fn quadratic(gamma_scale: f64) -> Self {
        Self {
            alpha_hat: vec![],
            beta_hat: vec![],
            gamma_scale,
            basis: Basis::Quadratic,
        }
    }

    pub fn with_gamma_scale(mut self, gamma_scale: f64) -> Self {
        self.gamma_scale = gamma_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_scale >= 0.0 && self.gamma_scale.is_finite()) {
            return Err(Error::Config(format!(
                "gamma_scale must be finite and >= 0, got {}",
                self.gamma_scale
            )));
        }
        if self
            .alpha_hat
            .iter()
            .chain(&self.beta_hat)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Config(
                "interpolant coefficients must be finite".into(),
            ));
        }
        if self.basis == Basis::Quadratic
            && !(self.alpha_hat.is_empty() && self.beta_hat.is_empty())
        {
            return Err(Error::Config(
                "the quadratic interpolant has no Fourier coefficients".into(),
            ));
        }
        Ok(())
    }

    /// Number of free parameters `N_α + N_β`.
    pub fn n_params(&self) -> usize {
        self.alpha_hat.len() + self.beta_hat.len()
    }

    /// Free parameters as `[α̂..., β̂...]`.
    pub fn params(&self) -> Vec<f64> {
        self.alpha_hat
            .iter()
            .chain(&self.beta_hat)
            .copied()
            .collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.n_params());
        let (a, b) = params.split_at(self.alpha_hat.len());
        Self {
            alpha_hat: a.to_vec(),
            beta_hat: b.to_vec(),
            ..self.clone()
        }
    }

    /// Evaluates the schedule at `τ ∈ [0, 1]`.
    pub fn eval(&self, tau: f64) -> Result<CoeffEval> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("pseudo-time {tau} outside [0, 1]")));
        }
        Ok(self.eval_unchecked(tau))
    }

    pub(crate) fn eval_unchecked(&self, tau: f64) -> CoeffEval {
        let gamma = self.gamma_scale * (1.0 - tau);
        let gamma_dot = -self.gamma_scale;
        match self.basis {
            Basis::Quadratic => CoeffEval {
                alpha: 1.0 - tau,
                beta: tau * tau,
                gamma,
                alpha_dot: -1.0,
                beta_dot: 2.0 * tau,
                gamma_dot,
            },
            Basis::Fourier => {
                let (s, c) = (FRAC_PI_2 * tau).sin_cos();
                let mut e = CoeffEval {
                    alpha: c,
                    beta: s,
                    gamma,
                    alpha_dot: -FRAC_PI_2 * s,
                    beta_dot: FRAC_PI_2 * c,
                    gamma_dot,
                };
                for (k, a) in self.alpha_hat.iter().enumerate() {
                    let w = (k + 1) as f64 * PI;
                    let (sk, ck) = (w * tau).sin_cos();
                    e.alpha += a * sk;
                    e.alpha_dot += a * w * ck;
                }
                for (k, b) in self.beta_hat.iter().enumerate() {
                    let w = (k + 1) as f64 * PI;
                    let (sk, ck) = (w * tau).sin_cos();
                    e.beta += b * sk;
                    e.beta_dot += b * w * ck;
                }
                e
            }
        }
    }

    /// Basis functions of the free parameters at `τ`: `(sin(iπτ), iπ cos(iπτ))`
    /// for `i = 1..=n`, i.e. `∂α/∂α̂ᵢ` and `∂α̇/∂α̂ᵢ` (identically for `β`).
    pub(crate) fn basis_at(n: usize, tau: f64) -> Vec<(f64, f64)> {
        (1..=n)
            .map(|i| {
                let w = i as f64 * PI;
                let (s, c) = (w * tau).sin_cos();
                (s, w * c)
            })
            .collect()
    }
}

fn check_lengths(x0: &[f64], x1: &[f64], z: &[f64]) -> Result<()> {
    if x0.len() != x1.len() || x0.len() != z.len() {
        return Err(Error::shape(
            format!("equal lengths (x0: {})", x0.len()),
            format!("x1: {}, z: {}", x1.len(), z.len()),
        ));
    }
    Ok(())
}

/// `I_τ = α x₀ + β x₁ + γ √τ z`.
pub fn interpolate(
    c: &InterpolantCoeffs,
    tau: f64,
    x0: &[f64],
    x1: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    check_lengths(x0, x1, z)?;
    let e = c.eval(tau)?;
    let g = e.gamma * tau.sqrt();
    Ok(x0
        .iter()
        .zip(x1)
        .zip(z)
        .map(|((a, b), w)| e.alpha * a + e.beta * b + g * w)
        .collect())
}

/// `R_τ = α̇ x₀ + β̇ x₁ + γ̇ √τ z`, sharing `z` with [`interpolate`].
pub fn drift_target(
    c: &InterpolantCoeffs,
    tau: f64,
    x0: &[f64],
    x1: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    check_lengths(x0, x1, z)?;
    let e = c.eval(tau)?;
    let g = e.gamma_dot * tau.sqrt();
    Ok(x0
        .iter()
        .zip(x1)
        .zip(z)
        .map(|((a, b), w)| e.alpha_dot * a + e.beta_dot * b + g * w)
        .collect())
}
