//! Energy rate of the interpolant and the coefficient losses built on it.

use rayon::prelude::*;

use super::{CoeffEval, InterpolantCoeffs};
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::rng::{fill_normal, substream};

/// Squared norms and inner product of one `(x₀, x₁)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub norm0: f64,
    pub norm1: f64,
    pub inner: f64,
    pub dim: usize,
}

impl PairMoments {
    pub fn of(x0: &[f64], x1: &[f64]) -> Self {
        let mut m = PairMoments {
            norm0: 0.0,
            norm1: 0.0,
            inner: 0.0,
            dim: x0.len(),
        };
        for (a, b) in x0.iter().zip(x1) {
            m.norm0 += a * a;
            m.norm1 += b * b;
            m.inner += a * b;
        }
        m
    }
}

/// Pairs `(x₀, x₁)` with their moments precomputed.
#[derive(Debug, Clone)]
pub struct PairBatch {
    x0: Vec<Vec<f64>>,
    x1: Vec<Vec<f64>>,
    moments: Vec<PairMoments>,
}

impl PairBatch {
    pub fn new(x0: Vec<Vec<f64>>, x1: Vec<Vec<f64>>) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(Error::shape(
                format!("{} x1 states", x0.len()),
                format!("{}", x1.len()),
            ));
        }
        let dim = x0.first().map_or(0, Vec::len);
        if let Some(bad) = x0.iter().chain(&x1).find(|x| x.len() != dim) {
            return Err(Error::shape(
                format!("states of length {dim}"),
                format!("length {}", bad.len()),
            ));
        }
        let moments = x0
            .iter()
            .zip(&x1)
            .map(|(a, b)| PairMoments::of(a, b))
            .collect();
        Ok(Self { x0, x1, moments })
    }

    /// Consecutive-state pairs `(x_t, x_{t+1})` from every trajectory. When
    /// `max_pairs` is set, an evenly spaced subset of that size is kept.
    pub fn from_dataset(ds: &TrajectoryDataset, max_pairs: Option<usize>) -> Result<Self> {
        let all: Vec<(usize, usize)> = ds
            .trajectories
            .iter()
            .enumerate()
            .flat_map(|(t, traj)| (0..traj.len().saturating_sub(1)).map(move |s| (t, s)))
            .collect();
        let chosen: Vec<(usize, usize)> = match max_pairs {
            Some(m) if m < all.len() => (0..m).map(|k| all[k * all.len() / m]).collect(),
            _ => all,
        };
        let x0 = chosen
            .iter()
            .map(|&(t, s)| ds.trajectories[t][s].clone())
            .collect();
        let x1 = chosen
            .iter()
            .map(|&(t, s)| ds.trajectories[t][s + 1].clone())
            .collect();
        Self::new(x0, x1)
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.moments.first().map_or(0, |m| m.dim)
    }

    pub fn x0(&self) -> &[Vec<f64>] {
        &self.x0
    }

    pub fn x1(&self) -> &[Vec<f64>] {
        &self.x1
    }

    pub fn moments(&self) -> &[PairMoments] {
        &self.moments
    }

    /// Batch-mean moments.
    pub fn mean_moments(&self) -> Result<PairMoments> {
        if self.is_empty() {
            return Err(Error::Empty("pair batch"));
        }
        let n = self.len() as f64;
        let mut m = PairMoments {
            norm0: 0.0,
            norm1: 0.0,
            inner: 0.0,
            dim: self.dim(),
        };
        for p in &self.moments {
            m.norm0 += p.norm0;
            m.norm1 += p.norm1;
            m.inner += p.inner;
        }
        m.norm0 /= n;
        m.norm1 /= n;
        m.inner /= n;
        Ok(m)
    }

    /// Batch mean of the target rate at `τ`.
    pub(crate) fn mean_target(
        &self,
        tau: f64,
        k: &(dyn Fn(f64, &PairMoments) -> f64 + Sync),
    ) -> f64 {
        self.moments.iter().map(|m| k(tau, m)).sum::<f64>() / self.len() as f64
    }
}

/// The energy-conserving target `k_τ ≡ 0`.
pub fn zero_rate(_tau: f64, _m: &PairMoments) -> f64 {
    0.0
}

/// Quadrature rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn midpoint(n: usize) -> Self {
        let h = 1.0 / n as f64;
        Self {
            nodes: (0..n).map(|q| (q as f64 + 0.5) * h).collect(),
            weights: vec![h; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::midpoint(64)
    }
}

/// `½ d/dτ E_z ‖I_τ‖²` for one pair with moments `m`.
pub fn energy_rate_h(e: &CoeffEval, tau: f64, m: &PairMoments) -> f64 {
    let d = m.dim as f64;
    e.alpha_dot * e.alpha * m.norm0
        + e.beta_dot * e.beta * m.norm1
        + (e.beta_dot * e.alpha + e.alpha_dot * e.beta) * m.inner
        + e.gamma_dot * e.gamma * tau * d
        + 0.5 * d * e.gamma * e.gamma
}

/// [`energy_rate_h`] for an explicit pair.
pub fn energy_rate(c: &InterpolantCoeffs, tau: f64, x0: &[f64], x1: &[f64]) -> Result<f64> {
    if x0.len() != x1.len() {
        return Err(Error::shape(
            format!("length {}", x0.len()),
            format!("length {}", x1.len()),
        ));
    }
    Ok(energy_rate_h(&c.eval(tau)?, tau, &PairMoments::of(x0, x1)))
}

/// `E_z ‖R_τ‖²` for one pair.
fn transport_density(e: &CoeffEval, tau: f64, m: &PairMoments) -> f64 {
    e.alpha_dot * e.alpha_dot * m.norm0
        + e.beta_dot * e.beta_dot * m.norm1
        + 2.0 * e.alpha_dot * e.beta_dot * m.inner
        + e.gamma_dot * e.gamma_dot * tau * m.dim as f64
}

/// `Σ_q w_q (mean_batch[H_τq − k_τq])²`.
pub fn energy_loss(
    c: &InterpolantCoeffs,
    batch: &PairBatch,
    quad: &Quadrature,
    k: &(dyn Fn(f64, &PairMoments) -> f64 + Sync),
) -> Result<f64> {
    Ok(energy_loss_grad(c, batch, quad, k)?.0)
}

/// Energy loss and its gradient with respect to `[α̂..., β̂...]`.
pub fn energy_loss_grad(
    c: &InterpolantCoeffs,
    batch: &PairBatch,
    quad: &Quadrature,
    k: &(dyn Fn(f64, &PairMoments) -> f64 + Sync),
) -> Result<(f64, Vec<f64>)> {
    let m = batch.mean_moments()?;
    let targets: Vec<f64> = quad
        .nodes
        .iter()
        .map(|&t| batch.mean_target(t, k))
        .collect();
    Ok(energy_loss_grad_moments(c, &m, quad, &targets))
}

/// Energy loss from batch-mean moments; `H` is linear in the moments, so the
/// batch mean of `H` is `H` of the mean moments.
pub(crate) fn energy_loss_grad_moments(
    c: &InterpolantCoeffs,
    m: &PairMoments,
    quad: &Quadrature,
    targets: &[f64],
) -> (f64, Vec<f64>) {
    let (na, nb) = (c.alpha_hat.len(), c.beta_hat.len());
    let mut grad = vec![0.0; na + nb];
    let mut loss = 0.0;
    for ((&tau, &w), &k) in quad.nodes.iter().zip(&quad.weights).zip(targets) {
        let e = c.eval_unchecked(tau);
        let disc = energy_rate_h(&e, tau, m) - k;
        loss += w * disc * disc;
        let scale = 2.0 * w * disc;
        let basis = InterpolantCoeffs::basis_at(na.max(nb), tau);
        for (i, &(s, cd)) in basis.iter().enumerate().take(na) {
            grad[i] += scale
                * ((cd * e.alpha + e.alpha_dot * s) * m.norm0
                    + (e.beta_dot * s + cd * e.beta) * m.inner);
        }
        for (i, &(s, cd)) in basis.iter().enumerate().take(nb) {
            grad[na + i] += scale
                * ((cd * e.beta + e.beta_dot * s) * m.norm1
                    + (cd * e.alpha + e.alpha_dot * s) * m.inner);
        }
    }
    (loss, grad)
}

/// How the noise expectation in the transport loss is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `E‖γ̇√τ z‖² = γ̇²τd`, cross terms dropped.
    Analytic,
    /// Average over `n_noise` sampled `z` per pair and node.
    MonteCarlo { n_noise: usize, seed: u64 },
}

/// `Σ_q w_q mean_{batch, z} ‖α̇x₀ + β̇x₁ + γ̇√τ z‖²`.
pub fn transport_loss(
    c: &InterpolantCoeffs,
    batch: &PairBatch,
    quad: &Quadrature,
    noise: NoiseMode,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    match noise {
        NoiseMode::Analytic => Ok(transport_loss_grad_moments(c, &batch.mean_moments()?, quad).0),
        NoiseMode::MonteCarlo { n_noise, seed } => {
            if n_noise == 0 {
                return Err(Error::Config("n_noise must be at least 1".into()));
            }
            let per_node: Vec<f64> = (0..quad.len())
                .into_par_iter()
                .map(|q| {
                    let tau = quad.nodes[q];
                    let e = c.eval_unchecked(tau);
                    let g = e.gamma_dot * tau.sqrt();
                    let mut rng = substream(seed, "transport", q as u64);
                    let mut z = vec![0.0; batch.dim()];
                    let mut acc = 0.0;
                    for (x0, x1) in batch.x0.iter().zip(&batch.x1) {
                        for _ in 0..n_noise {
                            fill_normal(&mut rng, &mut z);
                            acc += x0
                                .iter()
                                .zip(x1)
                                .zip(&z)
                                .map(|((a, b), w)| {
                                    let r = e.alpha_dot * a + e.beta_dot * b + g * w;
                                    r * r
                                })
                                .sum::<f64>();
                        }
                    }
                    quad.weights[q] * acc / (batch.len() * n_noise) as f64
                })
                .collect();
            Ok(per_node.iter().sum())
        }
    }
}

/// Analytic transport loss and its gradient with respect to `[α̂..., β̂...]`.
pub fn transport_loss_grad(
    c: &InterpolantCoeffs,
    batch: &PairBatch,
    quad: &Quadrature,
) -> Result<(f64, Vec<f64>)> {
    Ok(transport_loss_grad_moments(c, &batch.mean_moments()?, quad))
}

pub(crate) fn transport_loss_grad_moments(
    c: &InterpolantCoeffs,
    m: &PairMoments,
    quad: &Quadrature,
) -> (f64, Vec<f64>) {
    let (na, nb) = (c.alpha_hat.len(), c.beta_hat.len());
    let mut grad = vec![0.0; na + nb];
    let mut loss = 0.0;
    for (&tau, &w) in quad.nodes.iter().zip(&quad.weights) {
        let e = c.eval_unchecked(tau);
        loss += w * transport_density(&e, tau, m);
        let da = 2.0 * w * (e.alpha_dot * m.norm0 + e.beta_dot * m.inner);
        let db = 2.0 * w * (e.beta_dot * m.norm1 + e.alpha_dot * m.inner);
        let basis = InterpolantCoeffs::basis_at(na.max(nb), tau);
        for (i, &(_, cd)) in basis.iter().enumerate().take(na) {
            grad[i] += da * cd;
        }
        for (i, &(_, cd)) in basis.iter().enumerate().take(nb) {
            grad[na + i] += db * cd;
        }
    }
    (loss, grad)
}
