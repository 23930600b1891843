use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ecsi_core::fields::{ChannelStats, Grid, Projector, VelocityField};
use ecsi_core::nsolve::{initial_condition, NsConfig, Solver};
use ecsi_core::rng::{normal_vec, substream};
use ecsi_core::{DriftArch, DriftNet, Generator, InterpolantCoeffs, SdeConfig};

fn random_field(n: usize) -> VelocityField {
    let grid = Grid::new(n).unwrap();
    let flat = normal_vec(&mut substream(0, "bench", n as u64), 2 * grid.cells());
    VelocityField::from_flat(grid, &flat).unwrap()
}

fn projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("projection");
    for n in [32, 64, 128, 256] {
        let projector = Projector::new(Grid::new(n).unwrap());
        let q = random_field(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| projector.project(black_box(&q)))
        });
    }
    group.finish();
}

fn ns_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("ns_step");
    for n in [64, 128] {
        let cfg = NsConfig { grid: Grid::new(n).unwrap(), dt: 1e-3, ..NsConfig::default() };
        let solver = Solver::new(cfg).unwrap();
        let q = initial_condition(cfg.grid, 4.0, &mut substream(1, "bench", 0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solver.step(black_box(&q)).unwrap())
        });
    }
    group.finish();
}

fn drift(c: &mut Criterion) {
    let shape = Grid::new(32).unwrap().state_shape();
    let net = DriftNet::init(DriftArch::default(), shape, 0).unwrap();
    let x = normal_vec(&mut substream(2, "bench", 0), shape.len());
    let history = vec![x.as_slice(); net.arch().window()];
    let mut group = c.benchmark_group("drift_32x32");
    group.bench_function("forward", |b| b.iter(|| net.forward(black_box(&x), &history, 0.3).unwrap()));
    group.bench_function("forward_backward", |b| {
        b.iter(|| net.loss_and_grad(black_box(&x), &history, 0.3, &x).unwrap())
    });
    group.finish();
}

fn heun_rollout_step(c: &mut Criterion) {
    let shape = Grid::new(32).unwrap().state_shape();
    let arch = DriftArch { channels: 16, depth: 2, ..DriftArch::default() };
    let net = DriftNet::init(arch, shape, 0).unwrap();
    let coeffs = InterpolantCoeffs::zeros(5);
    let x = normal_vec(&mut substream(3, "bench", 0), shape.len());
    let history = vec![x.as_slice(); arch.window()];
    let mut group = c.benchmark_group("generator_step");
    group.sample_size(10);
    for n_pseudo_steps in [5, 25] {
        let cfg = SdeConfig { n_pseudo_steps, ..SdeConfig::default() };
        let gen = Generator::new(&net, &coeffs, ChannelStats::identity(), cfg).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n_pseudo_steps), &n_pseudo_steps, |b, _| {
            let mut rng = substream(4, "bench", 0);
            b.iter(|| gen.step(black_box(&history), &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, projection, ns_step, drift, heun_rollout_step);
criterion_main!(benches);
