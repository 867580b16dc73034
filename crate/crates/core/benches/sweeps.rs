use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use kds_core::charts::{build_extension, default_delta};
use kds_core::flow::experiments::{conservation_runs, mode_no_trapping_experiment};
use kds_core::par::{map_indexed, Exec};
use kds_core::trapping::{scan_row, unit_circle};
use kds_core::Spacetime;

const BACKENDS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn xi_sweep(c: &mut Criterion) {
    let st = Spacetime::from_triple(0.02, 1.0, 0.9).unwrap();
    let mut group = c.benchmark_group("xi_sweep");
    for n in [256usize, 2048] {
        let dirs = unit_circle(n);
        for (name, exec) in BACKENDS {
            group.bench_with_input(BenchmarkId::new(name, n), &dirs, |b, dirs| {
                b.iter(|| {
                    map_indexed(exec, dirs.len(), |i| {
                        let (xt, xp) = dirs[i];
                        scan_row(&st, xt, xp, 1e-12).map(|r| r.r_trap).unwrap_or(f64::NAN)
                    })
                })
            });
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let st = Spacetime::from_triple(0.02, 1.0, 0.9).unwrap();
    let pr = build_extension(&st, default_delta(&st)).unwrap();
    let eps = 0.05 * (st.horizons.r_c - st.horizons.r_e);
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for (name, exec) in BACKENDS {
        group.bench_function(BenchmarkId::new("mode_escape", name), |b| {
            b.iter(|| black_box(mode_no_trapping_experiment(&pr, eps, 64, 7, exec).unwrap().pass))
        });
        group.bench_function(BenchmarkId::new("conservation", name), |b| {
            b.iter(|| black_box(conservation_runs(&pr, 16, 7, 20.0, 1e-10, exec).unwrap().pass))
        });
    }
    group.finish();
}

criterion_group!(benches, xi_sweep, monte_carlo);
criterion_main!(benches);
