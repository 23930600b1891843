//! Damped Newton optimization of the interpolant coefficients.

use serde::{Deserialize, Serialize};

use super::energy::{
    energy_loss_grad_moments, transport_loss_grad_moments, PairBatch, PairMoments, Quadrature,
};
use super::InterpolantCoeffs;
use crate::error::{Error, Result};

/// Relative weights of the energy and transport terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub energy: f64,
    pub transport: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            energy: 1.0,
            transport: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub quadrature_points: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Relative step for the finite-difference Hessian.
    pub fd_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            quadrature_points: 64,
            max_iter: 200,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            fd_step: 1e-6,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_points == 0 {
            return Err(Error::Config("quadrature_points must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config("armijo_c must lie in (0, 1)".into()));
        }
        if !(self.fd_step > 0.0 && self.grad_tol >= 0.0) {
            return Err(Error::Config(
                "fd_step must be positive and grad_tol non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub grad_inf_norm: f64,
    pub converged: bool,
    /// Set when the optimizer stopped without meeting the gradient tolerance.
    pub warning: Option<String>,
}

struct Objective<'a> {
    template: &'a InterpolantCoeffs,
    moments: PairMoments,
    quad: Quadrature,
    targets: Vec<f64>,
    weights: LossWeights,
}

impl Objective<'_> {
    fn value_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let c = self.template.with_params(theta);
        let (le, ge) = energy_loss_grad_moments(&c, &self.moments, &self.quad, &self.targets);
        let (lt, gt) = transport_loss_grad_moments(&c, &self.moments, &self.quad);
        let g = ge
            .iter()
            .zip(&gt)
            .map(|(a, b)| self.weights.energy * a + self.weights.transport * b)
            .collect();
        (self.weights.energy * le + self.weights.transport * lt, g)
    }

    fn hessian(&self, theta: &[f64], rel_step: f64) -> Vec<Vec<f64>> {
        let n = theta.len();
        let mut h = vec![vec![0.0; n]; n];
        let mut p = theta.to_vec();
        for j in 0..n {
            let eps = rel_step * theta[j].abs().max(1.0);
            p[j] = theta[j] + eps;
            let (_, hi) = self.value_grad(&p);
            p[j] = theta[j] - eps;
            let (_, lo) = self.value_grad(&p);
            p[j] = theta[j];
            for i in 0..n {
                h[i][j] = (hi[i] - lo[i]) / (2.0 * eps);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (h[i][j] + h[j][i]);
                h[i][j] = s;
                h[j][i] = s;
            }
        }
        h
    }
}

/// Solves `(H + λI) p = −g` by Cholesky; `None` if not positive definite.
fn damped_newton_direction(h: &[Vec<f64>], g: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = h[i][j] + if i == j { lambda } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (-g[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `w_e·energy_loss + w_t·transport_loss` over `(α̂, β̂)` with
/// `γ` held fixed. The energy target is `k ≡ 0`.
pub fn optimize_coeffs(
    init: &InterpolantCoeffs,
    batch: &PairBatch,
    weights: LossWeights,
    opts: &OptimizeOptions,
) -> Result<(InterpolantCoeffs, OptimizeReport)> {
    optimize_coeffs_with_target(init, batch, weights, opts, &super::zero_rate)
}

/// [`optimize_coeffs`] with an arbitrary target rate `k_τ`.
pub fn optimize_coeffs_with_target(
    init: &InterpolantCoeffs,
    batch: &PairBatch,
    weights: LossWeights,
    opts: &OptimizeOptions,
    k: &(dyn Fn(f64, &PairMoments) -> f64 + Sync),
) -> Result<(InterpolantCoeffs, OptimizeReport)> {
    opts.validate()?;
    init.validate()?;
    let quad = Quadrature::midpoint(opts.quadrature_points);
    let targets = quad
        .nodes
        .iter()
        .map(|&t| batch.mean_target(t, k))
        .collect();
    let obj = Objective {
        template: init,
        moments: batch.mean_moments()?,
        quad,
        targets,
        weights,
    };

    let mut theta = init.params();
    let (mut f, mut g) = obj.value_grad(&theta);
    if !f.is_finite() {
        return Err(Error::non_finite("initial interpolant loss"));
    }
    let initial_loss = f;
    let mut lambda = 0.0_f64;
    let mut iterations = 0;
    let mut warning = None;

    while inf_norm(&g) >= opts.grad_tol {
        if iterations == opts.max_iter {
            warning = Some(format!(
                "stopped after {} iterations with |g|_inf = {:.3e}",
                iterations,
                inf_norm(&g)
            ));
            break;
        }
        let h = obj.hessian(&theta, opts.fd_step);
        let diag_scale = 1.0
            + h.iter()
                .enumerate()
                .fold(0.0_f64, |m, (i, row)| m.max(row[i].abs()));
        let mut accepted = None;
        for _ in 0..40 {
            let Some(p) = damped_newton_direction(&h, &g, lambda) else {
                lambda = (lambda * 10.0).max(1e-10 * diag_scale);
                continue;
            };
            let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                lambda = (lambda * 10.0).max(1e-10 * diag_scale);
                continue;
            }
            let mut t = 1.0;
            for _ in 0..opts.max_backtracks {
                let trial: Vec<f64> = theta.iter().zip(&p).map(|(x, d)| x + t * d).collect();
                let (ft, gt) = obj.value_grad(&trial);
                if ft.is_finite() && ft <= f + opts.armijo_c * t * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                t *= opts.backtrack_factor;
            }
            if accepted.is_some() {
                break;
            }
            lambda = (lambda * 10.0).max(1e-10 * diag_scale);
        }
        iterations += 1;
        match accepted {
            Some((trial, ft, gt)) => {
                theta = trial;
                f = ft;
                g = gt;
                lambda /= 10.0;
                if lambda < 1e-12 * diag_scale {
                    lambda = 0.0;
                }
            }
            None => {
                warning = Some(format!(
                    "line search failed at |g|_inf = {:.3e}",
                    inf_norm(&g)
                ));
                break;
            }
        }
    }
    if let Some(w) = &warning {
        log::warn!("interpolant optimization: {w}");
    }
    let report = OptimizeReport {
        iterations,
        initial_loss,
        final_loss: f,
        grad_inf_norm: inf_norm(&g),
        converged: warning.is_none(),
        warning,
    };
    Ok((init.with_params(&theta), report))
}
