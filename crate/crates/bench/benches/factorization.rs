use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use gridcheck_core::linalg::{block_cholesky, BlockStructure};
use gridcheck_core::nalgebra::DMatrix;

/// A strictly diagonally dominant symmetric M-matrix of size n.
fn dominant_matrix(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    let mut a: DMatrix<f64> = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            if rng.gen_bool(0.3) {
                let w = rng.gen_range(0.2..3.0);
                a[(i, j)] = -w;
                a[(j, i)] = -w;
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        a[(i, i)] = off + rng.gen_range(0.1..1.0);
    }
    a
}

fn even_blocks(n: usize, k: usize) -> BlockStructure {
    let base = n / k;
    let mut sizes = vec![base; k];
    sizes[k - 1] += n - base * k;
    BlockStructure::new(sizes).unwrap()
}

fn bench_block_cholesky(c: &mut Criterion) {
    let mut group = c.benchmark_group("block_cholesky");
    let mut rng = StdRng::seed_from_u64(1);
    for &n in &[20usize, 60, 120] {
        let a = dominant_matrix(&mut rng, n);
        for &k in &[1usize, 4] {
            let structure = even_blocks(n, k);
            group.bench_with_input(
                BenchmarkId::new(format!("n{n}"), format!("k{k}")),
                &(&a, &structure),
                |b, (a, structure)| b.iter(|| block_cholesky(a, structure).unwrap()),
            );
        }
    }
    group.finish();
}

fn bench_extension_vs_refactorization(c: &mut Criterion) {
    // The plug-and-play payoff: extending existing factors by one block
    // versus refactoring the bordered matrix from scratch.
    let mut group = c.benchmark_group("extend_vs_refactor");
    let mut rng = StdRng::seed_from_u64(2);
    for &n in &[40usize, 120] {
        let extra = 6usize;
        let big = dominant_matrix(&mut rng, n + extra);
        let base_matrix = big.view((0, 0), (n, n)).into_owned();
        let coupling = big.view((n, 0), (extra, n)).into_owned();
        let trailing = big.view((n, n), (extra, extra)).into_owned();
        let base = block_cholesky(&base_matrix, &even_blocks(n, 4)).unwrap();

        group.bench_with_input(BenchmarkId::new("extend", n), &n, |b, _| {
            b.iter(|| {
                gridcheck_core::extend_bcd(&base, &coupling, &trailing)
                    .unwrap()
                    .assemble(&base)
                    .unwrap()
            })
        });
        let mut sizes = even_blocks(n, 4).sizes().to_vec();
        sizes.push(extra);
        let full_structure = BlockStructure::new(sizes).unwrap();
        group.bench_with_input(BenchmarkId::new("refactor", n), &n, |b, _| {
            b.iter(|| block_cholesky(&big, &full_structure).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_block_cholesky,
    bench_extension_vs_refactorization
);
criterion_main!(benches);
