use criterion::{criterion_group, criterion_main, Criterion};
use rand::rngs::StdRng;
use rand::SeedableRng;

use gridcheck_core::corpus::{sample_attach, sample_grid_with, SampleOptions};
use gridcheck_core::solver::{solve_power_flow, SolverOptions};
use gridcheck_core::{check_thm1, check_thm6, testdata, CertifiedGrid, DEFAULT_EPSILON};

fn bench_certificates(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(3);
    let sample = sample_grid_with(
        &mut rng,
        &SampleOptions {
            max_loads: 30,
            max_microgrids: 3,
            tightness: (0.2, 0.2),
        },
    );
    let mut group = c.benchmark_group("certificates");
    group.bench_function("thm1", |b| {
        b.iter(|| check_thm1(&sample.grid, DEFAULT_EPSILON).unwrap())
    });
    group.bench_function("thm6", |b| {
        b.iter(|| check_thm6(&sample.grid, &sample.graph, DEFAULT_EPSILON).unwrap())
    });
    group.bench_function("solve", |b| {
        b.iter(|| solve_power_flow(&sample.grid, &SolverOptions::default()).unwrap())
    });
    group.finish();
}

fn bench_attach(c: &mut Criterion) {
    let mut group = c.benchmark_group("attach");

    // The worked two-microgrid example.
    let (g1, p1) = testdata::microgrid1_island();
    let candidate1 =
        gridcheck_core::AttachCandidate::new(g1, p1, testdata::microgrid1_ledger()).unwrap();
    let certified = CertifiedGrid::establish(candidate1, DEFAULT_EPSILON).unwrap();
    let (g2, p2) = testdata::microgrid2_island();
    let candidate2 =
        gridcheck_core::AttachCandidate::new(g2, p2, testdata::microgrid2_ledger()).unwrap();
    let spec = testdata::interconnection_spec();
    group.bench_function("figure_example", |b| {
        b.iter(|| {
            certified
                .attach(&candidate2, &spec, DEFAULT_EPSILON)
                .unwrap()
        })
    });

    // A randomized admission instance.
    let mut rng = StdRng::seed_from_u64(4);
    let sample = sample_attach(&mut rng);
    let certified = CertifiedGrid::establish(sample.grid.clone(), DEFAULT_EPSILON).unwrap();
    group.bench_function("randomized", |b| {
        b.iter(|| {
            certified
                .attach(&sample.microgrid, &sample.spec, DEFAULT_EPSILON)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_certificates, bench_attach);
criterion_main!(benches);
