use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use structsel_bench::fixture;
use structsel_core::selection::{bhat_table, select, select_index, KappaCalibration, ThetaGrid};

fn bench_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("theta_grid_build");
    group.sample_size(10);
    for n in [97, 161] {
        let fx = fixture(n, 3, 0.1);
        let config = fx.grid.config().cloned().expect("built from a config");
        let spec = *fx.grid.grid();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ThetaGrid::build(black_box(&config), 0.1, spec).unwrap())
        });
    }
    group.finish();
}

fn bench_pair_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("pair_diff_norms");
    group.sample_size(10);
    for n in [97, 161] {
        let fx = fixture(n, 3, 0.1);
        let bank = fx.grid.bank();
        let spec = bank.spectrum(fx.obs.values()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| bank.pair_diff_norms(black_box(&spec), f64::INFINITY))
        });
    }
    group.finish();
}

fn bench_select(c: &mut Criterion) {
    let fx = fixture(129, 4, 0.1);
    let cal = KappaCalibration::analytic(&fx.grid, f64::INFINITY, 0.1, 0.1, 8.0).unwrap();
    let mut group = c.benchmark_group("selection");
    group.sample_size(10);
    group.bench_function("bhat_table", |b| {
        b.iter(|| bhat_table(&fx.grid, black_box(&fx.obs), &cal, f64::INFINITY).unwrap())
    });
    group.bench_function("select_full", |b| {
        b.iter(|| select(&fx.grid, black_box(&fx.obs), f64::INFINITY, &cal).unwrap())
    });
    group.bench_function("select_pruned", |b| {
        b.iter(|| select_index(&fx.grid, black_box(&fx.obs), f64::INFINITY, &cal).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_build, bench_pair_scan, bench_select);
criterion_main!(benches);
