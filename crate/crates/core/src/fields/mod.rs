//! Periodic MAC grids, staggered velocity fields and the discrete operators
//! acting on them.
//!
//! Layout conventions, for a grid with `n` cells per side and width `h`:
//!
//! * arrays are `n × n`, row-major with the row index `j` running along `y`:
//!   entry `(i, j)` lives at `j * n + i`;
//! * `u(i, j)` sits on the right face of cell `(i, j)`, at `((i+1)h, (j+½)h)`;
//! * `v(i, j)` sits on the top face of cell `(i, j)`, at `((i+½)h, (j+1)h)`;
//! * scalars live at cell centres `((i+½)h, (j+½)h)`.
//!
//! Flattened states (used by the generative model) are `[u..., v...]`, i.e.
//! channel-major with each channel in the row-major layout above.

mod filter;
mod projection;
mod standardize;

pub use filter::face_average;
pub use projection::{project, Projector};
pub use standardize::{destandardize, standardize, ChannelStats};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square periodic grid on `[0, 2π]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size must be a power of two >= 4, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Cell width `2π / n`.
    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Number of cells.
    #[inline]
    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Periodic index with signed offsets.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    pub fn state_shape(&self) -> StateShape {
        StateShape {
            height: self.n,
            width: self.n,
        }
    }
}

impl TryFrom<usize> for Grid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Grid::new(n)
    }
}

impl From<Grid> for usize {
    fn from(g: Grid) -> usize {
        g.n
    }
}

/// Spatial shape of a two-channel state as seen by the generative model.
///
/// Unlike [`Grid`] this does not need to be square; small toy problems use
/// shapes such as `1 × 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateShape {
    pub height: usize,
    pub width: usize,
}

impl StateShape {
    pub const CHANNELS: usize = 2;

    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Length of a flattened state, `2 · height · width`.
    pub fn len(&self) -> usize {
        Self::CHANNELS * self.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The square grid this shape corresponds to, if any.
    pub fn grid(&self) -> Result<Grid> {
        if self.height != self.width {
            return Err(Error::Config(format!(
                "state shape {}x{} is not a square grid",
                self.height, self.width
            )));
        }
        Grid::new(self.height)
    }

    pub(crate) fn check(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.len() {
            return Err(Error::shape(
                format!("state of length {}", self.len()),
                state.len(),
            ));
        }
        Ok(())
    }
}

/// Staggered two-component velocity field.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.cells()],
            v: vec![0.0; grid.cells()],
        }
    }

    pub fn new(grid: Grid, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.cells() || v.len() != grid.cells() {
            return Err(Error::shape(
                format!("{} values per component", grid.cells()),
                format!("u: {}, v: {}", u.len(), v.len()),
            ));
        }
        Ok(Self { grid, u, v })
    }

    /// Samples `fu` at u-face positions and `fv` at v-face positions.
    pub fn from_fn(grid: Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let h = grid.h();
        let mut q = Self::zeros(grid);
        for j in 0..n {
            for i in 0..n {
                let k = grid.idx(i, j);
                q.u[k] = fu((i as f64 + 1.0) * h, (j as f64 + 0.5) * h);
                q.v[k] = fv((i as f64 + 0.5) * h, (j as f64 + 1.0) * h);
            }
        }
        q
    }

    pub fn from_flat(grid: Grid, state: &[f64]) -> Result<Self> {
        grid.state_shape().check(state)?;
        let (u, v) = state.split_at(grid.cells());
        Ok(Self {
            grid,
            u: u.to_vec(),
            v: v.to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.grid.cells());
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Squared Euclidean norm of all face values.
    pub fn norm_sq(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.u
            .iter_mut()
            .chain(self.v.iter_mut())
            .for_each(|x| *x *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &VelocityField) {
        debug_assert_eq!(self.grid, other.grid);
        for (x, y) in self.u.iter_mut().zip(&other.u) {
            *x += a * y;
        }
        for (x, y) in self.v.iter_mut().zip(&other.v) {
            *x += a * y;
        }
    }
}

/// Cell-centred scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells()],
        }
    }

    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::shape(grid.cells(), values.len()));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Discrete divergence `M q`, evaluated at cell centres.
pub fn divergence(q: &VelocityField) -> ScalarField {
    let grid = q.grid();
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let mut out = ScalarField::zeros(grid);
    for j in 0..n {
        let jm = (j + n - 1) % n;
        for i in 0..n {
            let im = (i + n - 1) % n;
            out.values[grid.idx(i, j)] = (q.u[grid.idx(i, j)] - q.u[grid.idx(im, j)]
                + q.v[grid.idx(i, j)]
                - q.v[grid.idx(i, jm)])
                * inv_h;
        }
    }
    out
}

/// Forward-difference gradient of a cell-centred scalar onto the faces.
///
/// This is `-Mᵀ`, so `divergence(gradient(φ))` is the 5-point Laplacian.
pub fn gradient(phi: &ScalarField) -> VelocityField {
    let grid = phi.grid();
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let mut out = VelocityField::zeros(grid);
    for j in 0..n {
        let jp = (j + 1) % n;
        for i in 0..n {
            let ip = (i + 1) % n;
            let c = phi.values[grid.idx(i, j)];
            out.u[grid.idx(i, j)] = (phi.values[grid.idx(ip, j)] - c) * inv_h;
            out.v[grid.idx(i, j)] = (phi.values[grid.idx(i, jp)] - c) * inv_h;
        }
    }
    out
}

/// Kinetic energy `‖q‖² / (2h²)`.
pub fn kinetic_energy(q: &VelocityField) -> f64 {
    let h = q.grid().h();
    q.norm_sq() / (2.0 * h * h)
}
