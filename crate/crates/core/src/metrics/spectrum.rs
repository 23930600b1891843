use crate::fields::VelocityField;
use crate::spectral::{wavenumber, Fft2};

/// Radial shell energy `E(k) = Σ_{k ≤ |κ| < k+1} ½(|û(κ)|² + |v̂(κ)|²)`.
///
/// Coefficients are normalized by `1/n²`, so `Σ_k E(k)` equals the mean of
/// `½(u² + v²)` over the grid. Shells run up to `⌊√2 · n/2⌋` so that corner
/// modes are counted.
pub fn energy_spectrum(q: &VelocityField) -> Vec<f64> {
    let n = q.grid().n();
    let fft = Fft2::new(n);
    let norm = 1.0 / (n * n) as f64;
    let (uh, vh) = (fft.forward_real(&q.u), fft.forward_real(&q.v));
    let n_shells = (std::f64::consts::SQRT_2 * (n / 2) as f64).floor() as usize + 1;
    let mut shells = vec![0.0; n_shells];
    for ky in 0..n {
        let wy = wavenumber(ky, n) as f64;
        for kx in 0..n {
            let wx = wavenumber(kx, n) as f64;
            let shell = (wx * wx + wy * wy).sqrt().floor() as usize;
            let k = ky * n + kx;
            shells[shell] += 0.5 * (uh[k].norm_sqr() + vh[k].norm_sqr()) * norm * norm;
        }
    }
    shells
}
