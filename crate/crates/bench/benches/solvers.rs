use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rpde::flows::{solve_joint_rde, FlowOptions};
use rpde::pdesolve::{solve_parabolic, SolverConfig};
use rpde::roughpath::pvar_distance;
use rpde::transform::solve_transformed;
use rpde::zakai::{dyadic, prior_on_grid, robust_filter, simulate_signal_observation, FilteringModel};
use rpde_bench::{brownian, bump, grid, smoke_pde};

fn rough(c: &mut Criterion) {
    let mut g = c.benchmark_group("rough");
    for level in [8u32, 12] {
        let path = brownian(1, 2, level);
        g.bench_with_input(BenchmarkId::new("lift", level), &path, |b, p| b.iter(|| black_box(p.lift())));
    }
    let a = brownian(1, 2, 7).lift();
    let b2 = brownian(2, 2, 7).lift();
    g.bench_function("pvar_distance/128", |b| b.iter(|| pvar_distance(black_box(&a), black_box(&b2), 2.5).unwrap()));
    g.finish();
}

fn flows(c: &mut Criterion) {
    let (_, noise) = smoke_pde();
    let driver = brownian(3, 3, 8).lift();
    let grid = grid(241);
    c.bench_function("flows/joint_rde/241", |b| {
        b.iter(|| solve_joint_rde(&noise, &driver, &grid, &[1.0], &FlowOptions::default(), true).unwrap())
    });
}

fn pde(c: &mut Criterion) {
    let (op, noise) = smoke_pde();
    let grid = grid(241);
    let h = grid.spacing(0);
    let u0 = bump(&grid);
    let cfg = SolverConfig::new(grid.clone(), 0.4 * h * h / 0.125, 0.25).adaptive(true);
    let mut g = c.benchmark_group("pde");
    g.sample_size(10);
    g.bench_function("parabolic/241", |b| b.iter(|| solve_parabolic(&mut op.clone(), &u0, &cfg).unwrap()));
    let driver = brownian(4, 3, 8).lift().coarsen(&(0..=64).map(|k| 4 * k).collect::<Vec<_>>()).unwrap();
    let cfg = SolverConfig::new(grid, 0.4 * h * h / 0.125, 1.0).adaptive(true);
    g.bench_function("transformed/241", |b| {
        b.iter(|| solve_transformed(&op, &noise, &driver, &u0, &cfg, FlowOptions::default()).unwrap())
    });
    g.finish();
}

fn zakai(c: &mut Criterion) {
    let model = FilteringModel::smoke();
    let obs = simulate_signal_observation(&model, 1, dyadic(8)).unwrap().observation.lift();
    let grid = rpde::grid::Grid::uniform(-5.0, 5.0, 201, 1).unwrap();
    let u0 = prior_on_grid(&model, &grid);
    let cfg = SolverConfig::new(grid, 1e-3, 1.0).adaptive(true);
    let mut g = c.benchmark_group("zakai");
    g.sample_size(10);
    g.bench_function("robust_filter/201", |b| {
        b.iter(|| robust_filter(&model, &obs, &u0, &cfg, FlowOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, rough, flows, pde, zakai);
criterion_main!(benches);
