//! Sequential vs rayon ensembles of rescaled paths. With the `parallel`
//! feature off both arms run inline.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hopf_critic::polyfield::{PolyMap, PolyMatrix};
use hopf_critic::sde::{run_ensemble, NoiseStream, RescaledSimulator};
use hopf_critic::spectral::Tolerances;
use hopf_critic::HopfSystem;
use nalgebra::DMatrix;

fn system() -> hopf_critic::PreparedSystem {
    let drift = PolyMap::from_terms(
        3,
        2,
        4,
        vec![
            (0, vec![0, 1, 0], -1.0),
            (0, vec![1, 0, 1], 1.0),
            (0, vec![3, 0, 0], -1.0),
            (0, vec![1, 2, 0], -1.0),
            (1, vec![1, 0, 0], 1.0),
            (1, vec![0, 1, 1], 1.0),
            (1, vec![2, 1, 0], -1.0),
            (1, vec![0, 3, 0], -1.0),
        ],
    )
    .unwrap();
    HopfSystem::new(drift, PolyMatrix::constant(&DMatrix::identity(2, 2), 2), true)
        .unwrap()
        .prepare(&Tolerances::default())
        .unwrap()
}

fn bench_ensemble(c: &mut Criterion) {
    let sys = system();
    let sim = RescaledSimulator::new(&sys.transformed, 1e-2, 1e-3, 0.5).unwrap();
    let x0 = sys.initial_state(1.0);
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for paths in [64usize, 256] {
        group.throughput(Throughput::Elements(paths as u64));
        for (label, workers) in [("sequential", 1usize), ("parallel", 0)] {
            group.bench_with_input(BenchmarkId::new(label, paths), &paths, |b, &n| {
                b.iter(|| {
                    let ends = run_ensemble(n, workers, |i| {
                        let p = sim.run(&x0, &mut NoiseStream::new(7, i, sim.channels())).unwrap();
                        p.last()[0]
                    });
                    black_box(ends)
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_ensemble);
criterion_main!(benches);
