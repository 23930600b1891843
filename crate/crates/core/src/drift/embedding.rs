//! Sinusoidal pseudo-time embedding and the GELU nonlinearity.

use std::f64::consts::PI;

const HIGHEST_FREQUENCY: f64 = 100.0;

/// `[sin(f₀τ), …, sin(f_{m−1}τ), cos(f₀τ), …]` with frequencies on a
/// geometric ladder from 1 to 100.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    frequencies: Vec<f64>,
}

impl TimeEmbedding {
    /// `dim` must be even and positive.
    pub fn new(dim: usize) -> Self {
        assert!(
            dim >= 2 && dim % 2 == 0,
            "embedding dimension must be even, got {dim}"
        );
        let half = dim / 2;
        let frequencies = (0..half)
            .map(|j| {
                if half == 1 {
                    1.0
                } else {
                    HIGHEST_FREQUENCY.powf(j as f64 / (half - 1) as f64)
                }
            })
            .collect();
        Self { frequencies }
    }

    pub fn dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    pub fn embed(&self, tau: f64) -> Vec<f64> {
        let (s, c): (Vec<f64>, Vec<f64>) =
            self.frequencies.iter().map(|f| (f * tau).sin_cos()).unzip();
        [s, c].concat()
    }
}

const GELU_C: f64 = 0.044_715;

fn gelu_inner_scale() -> f64 {
    (2.0 / PI).sqrt()
}

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (gelu_inner_scale() * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let k = gelu_inner_scale();
    let t = (k * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * GELU_C * x * x)
}
