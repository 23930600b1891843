use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::{divergence, Grid, ScalarField, VelocityField};
use crate::spectral::Fft2;

/// Discrete Leray projection `Π = I − Mᵀ (M Mᵀ)⁺ M` on a periodic grid.
///
/// The pressure Poisson problem is solved spectrally with the eigenvalues of
/// the 5-point Laplacian, which is exactly `−M Mᵀ` on the MAC grid, so the
/// projection is idempotent up to rounding. The constant mode of the
/// potential is fixed to zero.
#[derive(Debug, Clone)]
pub struct Projector {
    grid: Grid,
    fft: Fft2,
    inv_symbol: Vec<f64>,
}

impl Projector {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let h = grid.h();
        let mut inv_symbol = vec![0.0; grid.cells()];
        for ky in 0..n {
            let sy = (PI * ky as f64 / n as f64).sin();
            for kx in 0..n {
                if kx == 0 && ky == 0 {
                    continue;
                }
                let sx = (PI * kx as f64 / n as f64).sin();
                let lambda = -4.0 / (h * h) * (sx * sx + sy * sy);
                inv_symbol[ky * n + kx] = 1.0 / lambda;
            }
        }
        Self {
            grid,
            fft: Fft2::new(n),
            inv_symbol,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Zero-mean potential `φ` with `Δ_h φ = div q`.
    pub fn potential(&self, q: &VelocityField) -> ScalarField {
        let div = divergence(q);
        let mut data = self.fft.forward_real(&div.values);
        for (c, s) in data.iter_mut().zip(&self.inv_symbol) {
            *c *= *s;
        }
        self.fft.inverse(&mut data);
        let scale = 1.0 / self.grid.cells() as f64;
        ScalarField::new(
            self.grid,
            data.iter().map(|c: &Complex64| c.re * scale).collect(),
        )
        .expect("shape preserved")
    }

    pub fn project_in_place(&self, q: &mut VelocityField) {
        assert_eq!(q.grid(), self.grid, "projector built for a different grid");
        let phi = self.potential(q);
        let n = self.grid.n();
        let inv_h = 1.0 / self.grid.h();
        for j in 0..n {
            let jp = (j + 1) % n;
            for i in 0..n {
                let ip = (i + 1) % n;
                let k = j * n + i;
                let c = phi.values[k];
                q.u[k] -= (phi.values[j * n + ip] - c) * inv_h;
                q.v[k] -= (phi.values[jp * n + i] - c) * inv_h;
            }
        }
    }

    pub fn project(&self, q: &VelocityField) -> VelocityField {
        let mut out = q.clone();
        self.project_in_place(&mut out);
        out
    }
}

/// Divergence-free part of `q`. Builds FFT plans on every call; hold a
/// [`Projector`] in loops.
pub fn project(q: &VelocityField) -> VelocityField {
    Projector::new(q.grid()).project(q)
}
