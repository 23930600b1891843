//! Criteria that check analytic identities and numerical properties.

use ecsi_core::drift::{DriftArch, DriftNet};
use ecsi_core::fields::{divergence, kinetic_energy, Grid, Projector, StateShape, VelocityField};
use ecsi_core::interpolant::{
    energy_rate, optimize_coeffs, Basis, InterpolantCoeffs, LossWeights, OptimizeOptions, PairBatch,
};
use ecsi_core::metrics::{correlation_time, energy_spectrum, mse, wasserstein1};
use ecsi_core::nsolve::{initial_condition, NsConfig, Solver};
use ecsi_core::rng::{normal_vec, substream, StreamRng};
use ecsi_core::sample::heun_step;
use nalgebra::DMatrix;
use rand::Rng;

use crate::{CheckResult, Verdict};

fn random_coeffs(rng: &mut StreamRng, n: usize, spread: f64) -> InterpolantCoeffs {
    let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-spread..spread)).collect::<Vec<_>>();
    let alpha_hat = draw(n);
    let beta_hat = draw(n);
    let gamma_scale = rng.random_range(0.05..1.0);
    InterpolantCoeffs::new(alpha_hat, beta_hat, gamma_scale).expect("valid coefficients")
}

fn random_field(grid: Grid, rng: &mut StreamRng) -> VelocityField {
    VelocityField::from_flat(grid, &normal_vec(rng, 2 * grid.cells())).expect("shape")
}

/// Central differences of `½‖I_τ‖²` along shared noise paths, compared to
/// the analytic rate in units of the Monte-Carlo standard error.
pub fn energy_rate_identity() -> CheckResult {
    const VECTORS: usize = 20;
    const TAUS: usize = 16;
    const DRAWS: usize = 100_000;
    const DIM: usize = 16;
    const DELTA: f64 = 1e-4;
    let mut rng = substream(1, "acceptance-energy-rate", 0);
    let mut worst = 0.0f64;
    let mut outside = 0;
    let mut sum_z_sq = 0.0;
    for _ in 0..VECTORS {
        let coeffs = random_coeffs(&mut rng, 5, 0.5);
        let x0 = normal_vec(&mut rng, DIM);
        let x1 = normal_vec(&mut rng, DIM);
        let taus: Vec<f64> = (0..TAUS).map(|k| (k as f64 + 0.5) / TAUS as f64).collect();
        let ends: Vec<_> = taus
            .iter()
            .map(|&t| Ok((coeffs.eval(t - DELTA)?, coeffs.eval(t + DELTA)?)))
            .collect::<ecsi_core::Result<_>>()?;
        let mut sum = vec![0.0; TAUS];
        let mut sum_sq = vec![0.0; TAUS];
        let mut z = vec![0.0; DIM];
        for _ in 0..DRAWS {
            ecsi_core::rng::fill_normal(&mut rng, &mut z);
            for (k, (lo, hi)) in ends.iter().enumerate() {
                let half_energy = |c: &ecsi_core::CoeffEval, t: f64| {
                    let g = c.gamma * t.sqrt();
                    0.5 * (0..DIM).map(|i| (c.alpha * x0[i] + c.beta * x1[i] + g * z[i]).powi(2)).sum::<f64>()
                };
                let d = (half_energy(hi, taus[k] + DELTA) - half_energy(lo, taus[k] - DELTA)) / (2.0 * DELTA);
                sum[k] += d;
                sum_sq[k] += d * d;
            }
        }
        for (k, &t) in taus.iter().enumerate() {
            let n = DRAWS as f64;
            let mean = sum[k] / n;
            let se = ((sum_sq[k] / n - mean * mean) * n / (n - 1.0) / n).sqrt();
            let score = (mean - energy_rate(&coeffs, t, &x0, &x1)?).abs() / se;
            worst = worst.max(score);
            sum_z_sq += score * score;
            if score > 3.0 {
                outside += 1;
            }
        }
    }
    Ok(Verdict::new(
        outside == 0,
        format!(
            "{outside} of {} points beyond 3 SE, max |z| = {worst:.2}, mean z^2 = {:.2}",
            VECTORS * TAUS,
            sum_z_sq / (VECTORS * TAUS) as f64
        ),
    ))
}

pub fn boundary_conditions() -> CheckResult {
    let mut rng = substream(2, "acceptance-boundary", 0);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = rng.random_range(1..=8);
        let coeffs = if k % 100 == 0 {
            InterpolantCoeffs::quadratic(rng.random_range(0.0..2.0))
        } else {
            random_coeffs(&mut rng, n, 3.0)
        };
        let (start, end) = (coeffs.eval(0.0)?, coeffs.eval(1.0)?);
        for err in [start.alpha - 1.0, end.alpha, start.beta, end.beta - 1.0, end.gamma] {
            worst = worst.max(err.abs());
        }
    }
    Ok(Verdict::new(worst <= 1e-12, format!("max boundary error {worst:.1e} over 1000 vectors")))
}

/// `x₁ = ρ x₀ + √(1−ρ²) ξ` with standard normal `x₀`, `ξ`.
fn stationary_batch(n: usize, dim: usize, rho: f64, rng: &mut StreamRng) -> ecsi_core::Result<PairBatch> {
    let mut x0s = vec![];
    let mut x1s = vec![];
    for _ in 0..n {
        let x0 = normal_vec(rng, dim);
        let xi = normal_vec(rng, dim);
        x1s.push(x0.iter().zip(&xi).map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b).collect());
        x0s.push(x0);
    }
    PairBatch::new(x0s, x1s)
}

fn max_mean_rate(coeffs: &InterpolantCoeffs, batch: &PairBatch) -> ecsi_core::Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..=200 {
        let tau = k as f64 / 200.0;
        let mut mean = 0.0;
        for (x0, x1) in batch.x0().iter().zip(batch.x1()) {
            mean += energy_rate(coeffs, tau, x0, x1)?;
        }
        worst = worst.max((mean / batch.len() as f64).abs());
    }
    Ok(worst)
}

pub fn optimizer_efficacy() -> CheckResult {
    let mut rng = substream(3, "acceptance-optimizer", 0);
    let batch = stationary_batch(256, 64, 0.9, &mut rng)?;
    let baseline = InterpolantCoeffs::quadratic(0.1);
    assert_eq!(baseline.basis, Basis::Quadratic);
    let init = InterpolantCoeffs::zeros(5).with_gamma_scale(0.1);
    let (optimized, report) =
        optimize_coeffs(&init, &batch, LossWeights::default(), &OptimizeOptions::default())?;
    let (opt, base) = (max_mean_rate(&optimized, &batch)?, max_mean_rate(&baseline, &batch)?);
    Ok(Verdict::new(
        opt <= 0.1 * base,
        format!(
            "max |mean H| {opt:.3e} optimized vs {base:.3e} quadratic (ratio {:.3}, {} Newton iterations)",
            opt / base,
            report.iterations
        ),
    ))
}

/// Columns of the dense discrete divergence operator.
fn dense_divergence(grid: Grid) -> DMatrix<f64> {
    let dim = 2 * grid.cells();
    let mut m = DMatrix::zeros(grid.cells(), dim);
    for col in 0..dim {
        let mut e = vec![0.0; dim];
        e[col] = 1.0;
        let div = divergence(&VelocityField::from_flat(grid, &e).expect("shape"));
        for (row, v) in div.values.iter().enumerate() {
            m[(row, col)] = *v;
        }
    }
    m
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

pub fn projection() -> CheckResult {
    let mut rng = substream(4, "acceptance-projection", 0);
    let mut div_worst = 0.0f64;
    let mut idem_worst = 0.0f64;
    for n in [4, 8, 32, 128] {
        let grid = Grid::new(n)?;
        let projector = Projector::new(grid);
        let q = random_field(grid, &mut rng);
        let p = projector.project(&q);
        div_worst = div_worst.max(divergence(&p).max_abs() * grid.h() / q.max_abs());
        idem_worst = idem_worst.max(rel_diff(&projector.project(&p).to_flat(), &p.to_flat()));
    }

    let grid = Grid::new(4)?;
    let m = dense_divergence(grid);
    let dim = 2 * grid.cells();
    let pinv = (&m * m.transpose()).pseudo_inverse(1e-12)?;
    let oracle = DMatrix::identity(dim, dim) - m.transpose() * pinv * &m;
    let projector = Projector::new(grid);
    let mut oracle_worst = 0.0f64;
    for col in 0..dim {
        let mut e = vec![0.0; dim];
        e[col] = 1.0;
        let p = projector.project(&VelocityField::from_flat(grid, &e)?).to_flat();
        for (row, v) in p.iter().enumerate() {
            oracle_worst = oracle_worst.max((v - oracle[(row, col)]).abs());
        }
    }
    Ok(Verdict::new(
        div_worst <= 1e-10 && idem_worst <= 1e-10 && oracle_worst <= 1e-10,
        format!(
            "relative divergence {div_worst:.1e}, idempotence {idem_worst:.1e}, 4x4 dense oracle {oracle_worst:.1e}"
        ),
    ))
}

pub fn dns_validation() -> CheckResult {
    let cfg = NsConfig { grid: Grid::new(64)?, re: 100.0, dt: 1e-3, forcing_on: false, seed: 0 };
    let q0 = VelocityField::from_fn(cfg.grid, |x, y| x.cos() * y.sin(), |x, y| -x.sin() * y.cos());
    let q = Solver::new(cfg)?.advance(&q0, 500)?;
    let expected = (-4.0 * 0.5 / cfg.re).exp();
    let decay_err = ((kinetic_energy(&q) / kinetic_energy(&q0)) - expected).abs() / expected;

    let inviscid = NsConfig { re: f64::INFINITY, ..cfg };
    let solver = Solver::new(inviscid)?;
    let mut state = initial_condition(inviscid.grid, 4.0, &mut substream(5, "acceptance-dns", 0));
    let e0 = kinetic_energy(&state);
    let mut drift = 0.0f64;
    for _ in 0..100 {
        state = solver.step(&state)?;
        drift = drift.max((kinetic_energy(&state) - e0).abs() / e0);
    }
    Ok(Verdict::new(
        decay_err <= 1e-3 && drift <= 1e-5,
        format!("Taylor-Green relative error {decay_err:.2e}, inviscid energy drift {drift:.2e} over 100 steps"),
    ))
}

fn layer_type(group: &str) -> &'static str {
    if group.starts_with("time.") {
        "time embedding"
    } else if group.ends_with("time_proj") {
        "time projection"
    } else if group.ends_with("bias") {
        "conv bias"
    } else {
        "conv weight"
    }
}

pub fn drift_gradients() -> CheckResult {
    const PER_TYPE: usize = 60;
    const EPS: f64 = 1e-5;
    let shape = StateShape::new(8, 8);
    let arch = DriftArch { channels: 16, depth: 2, kernel: 3, embed_dim: 16, history_len: 1 };
    let mut rng = substream(6, "acceptance-gradients", 0);
    let mut net = DriftNet::init(arch, shape, 6)?;
    // The head starts at zero; perturb everything so every layer sees a gradient.
    for p in net.params_mut() {
        *p += 0.05 * rng.random_range(-1.0..1.0);
    }
    let x = normal_vec(&mut rng, shape.len());
    let history: Vec<Vec<f64>> = (0..arch.window()).map(|_| normal_vec(&mut rng, shape.len())).collect();
    let history: Vec<&[f64]> = history.iter().map(Vec::as_slice).collect();
    let target = normal_vec(&mut rng, shape.len());
    let tau = 0.37;
    let (_, grad) = net.loss_and_grad(&x, &history, tau, &target)?;
    let floor = 1e-6 * grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));

    let mut by_type: Vec<(&str, Vec<usize>)> = vec![];
    for group in net.param_groups() {
        let kind = layer_type(&group.name);
        match by_type.iter_mut().find(|(k, _)| *k == kind) {
            Some((_, idx)) => idx.extend(group.range.clone()),
            None => by_type.push((kind, group.range.clone().collect())),
        }
    }
    let mut probe = net.clone();
    let mut summary = vec![];
    let mut passed = true;
    for (kind, indices) in &by_type {
        let coords: Vec<usize> = if indices.len() <= PER_TYPE {
            indices.clone()
        } else {
            (0..PER_TYPE).map(|_| indices[rng.random_range(0..indices.len())]).collect()
        };
        let mut worst = 0.0f64;
        for &i in &coords {
            let orig = net.params()[i];
            probe.params_mut()[i] = orig + EPS;
            let hi = probe.loss_and_grad(&x, &history, tau, &target)?.0;
            probe.params_mut()[i] = orig - EPS;
            let lo = probe.loss_and_grad(&x, &history, tau, &target)?.0;
            probe.params_mut()[i] = orig;
            let fd = (hi - lo) / (2.0 * EPS);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(floor));
        }
        passed &= coords.len() >= 50 && worst <= 1e-5;
        summary.push(format!("{kind} {worst:.1e} ({} coords)", coords.len()));
    }
    Ok(Verdict::new(passed, format!("max relative error: {}", summary.join(", "))))
}

pub fn heun_integrator() -> CheckResult {
    // Deterministic decay dX = −X dτ over τ ∈ [0, 1] with the default 25 steps.
    let steps = 25;
    let dtau = 1.0 / steps as f64;
    let mut x = vec![1.0];
    for k in 0..steps {
        x = heun_step(|x, _| Ok(vec![-x[0]]), &x, k as f64 * dtau, dtau, 0.0, &[0.0])?;
    }
    let decay_err = (x[0] - (-1.0f64).exp()).abs();

    // dX = −X dτ + dW from X₀ = 1; E[X₁²] = e⁻² + (1 − e⁻²)/2. Coarse paths
    // reuse the fine Brownian increments.
    const PATHS: usize = 400_000;
    const LEVELS: [usize; 4] = [2, 4, 8, 16];
    let exact = (-2.0f64).exp() + 0.5 * (1.0 - (-2.0f64).exp());
    let finest = *LEVELS.last().expect("levels");
    let mut rng = substream(7, "acceptance-heun", 0);
    let fine: Vec<Vec<f64>> = (0..finest).map(|_| normal_vec(&mut rng, PATHS)).collect();
    let mut second_moments = vec![];
    for &n in &LEVELS {
        let group = finest / n;
        let dtau = 1.0 / n as f64;
        let mut x = vec![1.0; PATHS];
        for k in 0..n {
            let z: Vec<f64> = (0..PATHS)
                .map(|p| (0..group).map(|g| fine[k * group + g][p]).sum::<f64>() / (group as f64).sqrt())
                .collect();
            x = heun_step(|x, _| Ok(x.iter().map(|v| -v).collect()), &x, k as f64 * dtau, dtau, 1.0, &z)?;
        }
        second_moments.push(x.iter().map(|v| v * v).collect::<Vec<f64>>());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut passed = decay_err <= 1e-3;
    let mut errors = vec![];
    for w in second_moments.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let e_coarse = mean(coarse) - exact;
        let sign = e_coarse.signum();
        // Weak order >= 1 means |e(dτ/2)| <= |e(dτ)|/2; test it per path.
        let excess: Vec<f64> = coarse.iter().zip(fine).map(|(c, f)| sign * (f - exact) - 0.5 * sign * (c - exact)).collect();
        let m = mean(&excess);
        let se = (excess.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (PATHS as f64 * (PATHS - 1) as f64)).sqrt();
        passed &= m <= 3.0 * se;
        errors.push(format!("{e_coarse:.1e}"));
    }
    let last = second_moments.last().expect("levels");
    errors.push(format!("{:.1e}", mean(last) - exact));
    Ok(Verdict::new(
        passed,
        format!(
            "decay error {decay_err:.1e}, E[X^2] errors at {LEVELS:?} steps: [{}], halving excess within 3 SE",
            errors.join(", ")
        ),
    ))
}

pub fn metric_consistency() -> CheckResult {
    let mut rng = substream(10, "acceptance-metrics", 0);
    let mut axiom_violation = 0.0f64;
    for _ in 0..200 {
        let sample = |rng: &mut StreamRng| {
            let n = rng.random_range(1..40);
            let shift = rng.random_range(-2.0..2.0);
            (0..n).map(|_| shift + rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()
        };
        let (a, b, c) = (sample(&mut rng), sample(&mut rng), sample(&mut rng));
        let (ab, ba, bc, ac) = (wasserstein1(&a, &b)?, wasserstein1(&b, &a)?, wasserstein1(&b, &c)?, wasserstein1(&a, &c)?);
        axiom_violation = axiom_violation
            .max(-ab)
            .max((ab - ba).abs())
            .max(wasserstein1(&a, &a)?)
            .max(ac - ab - bc - 1e-12);
        let shift = 0.75;
        let moved: Vec<f64> = a.iter().map(|v| v + shift).collect();
        axiom_violation = axiom_violation.max((wasserstein1(&a, &moved)? - shift).abs() - 1e-12);
    }

    let grid = Grid::new(32)?;
    let mut parseval = 0.0f64;
    for _ in 0..5 {
        let q = random_field(grid, &mut rng);
        let total: f64 = energy_spectrum(&q).iter().sum();
        let mean_energy = 0.5 * q.norm_sq() / grid.cells() as f64;
        parseval = parseval.max((total - mean_energy).abs() / mean_energy);
    }

    let traj: Vec<Vec<f64>> = (0..10).map(|_| normal_vec(&mut rng, 50)).collect();
    let offset: Vec<Vec<f64>> = traj.iter().map(|s| s.iter().map(|v| v + 0.5).collect()).collect();
    let negated: Vec<Vec<f64>> = traj.iter().map(|s| s.iter().map(|v| -v).collect()).collect();
    let identities = [
        mse(&traj, &traj, 10)?,
        (mse(&traj, &offset, 10)? - 0.25).abs(),
        (correlation_time(&traj, &traj, 0.8)? - 1.0).abs(),
        correlation_time(&traj, &negated, 0.8)?,
    ];
    let identity_err = identities.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(Verdict::new(
        axiom_violation <= 1e-12 && parseval <= 1e-10 && identity_err <= 1e-12,
        format!("W-1 axiom violation {axiom_violation:.1e}, Parseval {parseval:.1e}, mse/corr identities {identity_err:.1e}"),
    ))
}
