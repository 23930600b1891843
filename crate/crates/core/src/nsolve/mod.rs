//! Incompressible Navier–Stokes DNS on the periodic MAC grid with Kolmogorov
//! forcing `f(q) = sin(4y) e_x − 0.1 q`.
//!
//! Convection uses the divergence form with interpolated face fluxes, which
//! conserves kinetic energy on the staggered grid for discretely
//! divergence-free fields. Pressure is handled by projecting every RK4 stage.

mod datagen;

pub use datagen::{generate_dataset, initial_condition, DataGenConfig, GeneratedData};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, Projector, VelocityField};

/// Wavenumber of the sinusoidal body force.
pub const FORCING_WAVENUMBER: f64 = 4.0;
/// Linear drag coefficient of the dissipative forcing term.
pub const FORCING_DRAG: f64 = 0.1;
/// Advective CFL number enforced by [`Solver::step`].
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsConfig {
    pub grid: Grid,
    /// Reynolds number; `f64::INFINITY` gives the inviscid equations.
    pub re: f64,
    pub dt: f64,
    pub forcing_on: bool,
    pub seed: u64,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            grid: Grid::new(256).expect("valid"),
            re: 1.0e3,
            dt: 2.0e-3,
            forcing_on: true,
            seed: 0,
        }
    }
}

impl NsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.re > 0.0) {
            return Err(Error::Config(format!(
                "Reynolds number must be positive, got {}",
                self.re
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    fn viscosity(&self) -> f64 {
        1.0 / self.re
    }
}

/// Right-hand side `−∇·(q⊗q) + Re⁻¹ ∇²q + f(q)` without the pressure term.
pub fn rhs(q: &VelocityField, cfg: &NsConfig) -> VelocityField {
    let grid = q.grid();
    let n = grid.n();
    let h = grid.h();
    let inv_h = 1.0 / h;
    let nu_h2 = cfg.viscosity() / (h * h);
    let cells = grid.cells();

    // Cell-centre interpolants and corner fluxes.
    let mut uc = vec![0.0; cells];
    let mut vc = vec![0.0; cells];
    let mut corner = vec![0.0; cells];
    for j in 0..n {
        let jm = (j + n - 1) % n;
        let jp = (j + 1) % n;
        for i in 0..n {
            let im = (i + n - 1) % n;
            let ip = (i + 1) % n;
            let k = j * n + i;
            uc[k] = 0.5 * (q.u[j * n + im] + q.u[k]);
            vc[k] = 0.5 * (q.v[jm * n + i] + q.v[k]);
            // Top-right corner of cell (i, j): u averaged in y, v averaged in x.
            corner[k] = 0.5 * (q.u[k] + q.u[jp * n + i]) * 0.5 * (q.v[k] + q.v[j * n + ip]);
        }
    }

    let mut out = VelocityField::zeros(grid);
    for j in 0..n {
        let jm = (j + n - 1) % n;
        let jp = (j + 1) % n;
        let y_u = (j as f64 + 0.5) * h;
        let force = if cfg.forcing_on {
            (FORCING_WAVENUMBER * y_u).sin()
        } else {
            0.0
        };
        for i in 0..n {
            let im = (i + n - 1) % n;
            let ip = (i + 1) % n;
            let k = j * n + i;

            let conv_u =
                (uc[j * n + ip].powi(2) - uc[k].powi(2) + corner[k] - corner[jm * n + i]) * inv_h;
            let conv_v =
                (corner[k] - corner[j * n + im] + vc[jp * n + i].powi(2) - vc[k].powi(2)) * inv_h;

            let lap_u = q.u[j * n + ip] + q.u[j * n + im] + q.u[jp * n + i] + q.u[jm * n + i]
                - 4.0 * q.u[k];
            let lap_v = q.v[j * n + ip] + q.v[j * n + im] + q.v[jp * n + i] + q.v[jm * n + i]
                - 4.0 * q.v[k];

            let mut du = -conv_u + nu_h2 * lap_u;
            let mut dv = -conv_v + nu_h2 * lap_v;
            if cfg.forcing_on {
                du += force - FORCING_DRAG * q.u[k];
                dv -= FORCING_DRAG * q.v[k];
            }
            out.u[k] = du;
            out.v[k] = dv;
        }
    }
    out
}

/// Explicit RK4 integrator with a projection after every stage.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: NsConfig,
    projector: Projector,
}

impl Solver {
    pub fn new(cfg: NsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            projector: Projector::new(cfg.grid),
        })
    }

    pub fn config(&self) -> &NsConfig {
        &self.cfg
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn check_cfl(&self, q: &VelocityField) -> Result<()> {
        let max_velocity = q.max_abs();
        if !max_velocity.is_finite() {
            return Err(Error::non_finite("in DNS velocity field"));
        }
        let limit = CFL_LIMIT * self.cfg.grid.h() / max_velocity;
        if self.cfg.dt > limit {
            return Err(Error::Cfl {
                dt: self.cfg.dt,
                limit,
                max_velocity,
            });
        }
        Ok(())
    }

    pub fn step(&self, q: &VelocityField) -> Result<VelocityField> {
        if q.grid() != self.cfg.grid {
            return Err(Error::shape(
                format!("grid {}", self.cfg.grid.n()),
                format!("grid {}", q.grid().n()),
            ));
        }
        self.check_cfl(q)?;
        let dt = self.cfg.dt;
        let stage = |base: &VelocityField, k: &VelocityField, a: f64| {
            let mut s = base.clone();
            s.axpy(a, k);
            self.projector.project_in_place(&mut s);
            s
        };
        let k1 = rhs(q, &self.cfg);
        let k2 = rhs(&stage(q, &k1, 0.5 * dt), &self.cfg);
        let k3 = rhs(&stage(q, &k2, 0.5 * dt), &self.cfg);
        let k4 = rhs(&stage(q, &k3, dt), &self.cfg);
        let mut out = q.clone();
        out.axpy(dt / 6.0, &k1);
        out.axpy(dt / 3.0, &k2);
        out.axpy(dt / 3.0, &k3);
        out.axpy(dt / 6.0, &k4);
        self.projector.project_in_place(&mut out);
        Ok(out)
    }

    /// Advances `steps` solver steps.
    pub fn advance(&self, q: &VelocityField, steps: usize) -> Result<VelocityField> {
        let mut state = q.clone();
        for _ in 0..steps {
            state = self.step(&state)?;
        }
        Ok(state)
    }
}

/// One RK4 step; see [`Solver::step`].
pub fn step(q: &VelocityField, cfg: &NsConfig) -> Result<VelocityField> {
    Solver::new(*cfg)?.step(q)
}
