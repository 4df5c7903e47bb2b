use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pmc_core::ambient::Epsilon;
use pmc_core::correspondence::{extract_cmc_data, integrate_cmc_frenet};
use pmc_core::diffgeo::{analyze_chart, default_grid, JetMode};
use pmc_core::families::{cmc_torus, invariant_pmc_chart};
use pmc_core::par::Execution;
use pmc_core::profile::ProfileParams;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn invariants(c: &mut Criterion) {
    let p = ProfileParams::new(Epsilon::Hyperbolic, -2.0, 1.0, 0.0).unwrap();
    let chart = invariant_pmc_chart(p, (-0.5, 0.5), (-1.0, 1.0)).unwrap();
    let mut group = c.benchmark_group("analyze_chart");
    for n in [81, 161] {
        let grid = default_grid(&chart, n, n, JetMode::Analytic).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &grid, |b, g| {
                b.iter(|| analyze_chart(&chart, g, JetMode::Analytic, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn reconstruction(c: &mut Criterion) {
    let (chart, _) = cmc_torus(2.0, 1.0).unwrap();
    let grid = default_grid(&chart, 81, 81, JetMode::Analytic).unwrap();
    let data = extract_cmc_data(&chart, &grid, JetMode::Analytic, Execution::Parallel, 1e-4).unwrap();
    let mut group = c.benchmark_group("integrate_cmc_frenet");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| integrate_cmc_frenet(&data, exec, 1e-3).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, invariants, reconstruction);
criterion_main!(benches);
