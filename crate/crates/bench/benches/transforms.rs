use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridbesov::besov::holder_norm;
use gridbesov::dipole_decomp::{build_dipole_basis, dc_decompose, dc_to_dist, AnchorRule};
use gridbesov::haar::{analyze, synthesize};
use gridbesov::particles::dirac_coeffs;
use gridbesov::scalar::Rational;
use gridbesov::Address;
use gridbesov_bench::{coeffs, grids, particles, step};

const S: f64 = 0.5;

fn haar(c: &mut Criterion) {
    let mut group = c.benchmark_group("haar");
    for (name, grid) in grids(8) {
        let f = step::<f64>(&grid);
        group.bench_with_input(BenchmarkId::new("analyze/float", name), &f, |b, f| b.iter(|| analyze(black_box(f), S)));
        let c = coeffs::<f64>(&grid, S);
        group.bench_with_input(BenchmarkId::new("synthesize/float", name), &c, |b, c| {
            b.iter(|| synthesize(black_box(c), grid.depth()))
        });
    }
    for (name, grid) in grids(5) {
        let f = step::<Rational>(&grid);
        group.bench_with_input(BenchmarkId::new("analyze/rational", name), &f, |b, f| b.iter(|| analyze(black_box(f), S)));
    }
    group.finish();
}

fn norms(c: &mut Criterion) {
    let mut group = c.benchmark_group("norms");
    for (name, grid) in grids(8) {
        let f = step::<f64>(&grid);
        group.bench_with_input(BenchmarkId::new("holder", name), &f, |b, f| b.iter(|| holder_norm(black_box(f), S)));
    }
    group.finish();
}

fn particles_and_dipoles(c: &mut Criterion) {
    let mut group = c.benchmark_group("dipoles");
    for (name, grid) in grids(8) {
        let x = grid.leftmost_address(*grid.level_nodes(grid.depth()).unwrap().last().unwrap());
        group.bench_with_input(BenchmarkId::new("dirac", name), &x, |b, x: &Address| {
            b.iter(|| dirac_coeffs::<f64>(&grid, black_box(x), S, grid.depth()))
        });
        let basis = Arc::new(build_dipole_basis(grid.clone(), AnchorRule::Leftmost));
        let phi = particles::<f64>(&grid, S);
        group.bench_with_input(BenchmarkId::new("dc_decompose", name), &phi, |b, phi| {
            b.iter(|| dc_decompose(black_box(phi), &basis, None))
        });
        let dc = dc_decompose(&phi, &basis, None).unwrap();
        group.bench_with_input(BenchmarkId::new("dc_to_dist", name), &dc, |b, dc| {
            b.iter(|| dc_to_dist(black_box(dc), grid.depth()))
        });
    }
    group.finish();
}

criterion_group!(benches, haar, norms, particles_and_dipoles);
criterion_main!(benches);
