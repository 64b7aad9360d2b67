//! Sequential versus rayon execution on the three data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relubridge::data::synth_gaussian;
use relubridge::network::{he_init, Architecture};
use relubridge::pathwalk::{dense_node_oracle, walk_path, LinearPath};
use relubridge::stats::{bridge_simulate, GaussianIncrements};
use relubridge::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bridge(c: &mut Criterion) {
    let mut g = c.benchmark_group("bridge_simulate");
    let inc = GaussianIncrements { sigma: 1.0 };
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "K=100,trials=20000"), |b| {
            b.iter(|| bridge_simulate(&inc, 100, (0.0, 0.0), 20_000, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn pair_walks(c: &mut Criterion) {
    let net = he_init(&Architecture::mlp(64, &[128], 10), 2).unwrap();
    let pts = synth_gaussian(64, 64, 3).unwrap();
    let mut g = c.benchmark_group("pair_walks");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "32 pairs, 64-128-10"), |b| {
            b.iter(|| {
                exec.map(32, |i| {
                    let x0 = pts.row(2 * i).to_vec();
                    let x1 = pts.row(2 * i + 1).to_vec();
                    walk_path(&net, &LinearPath::new(&x0, &x1).unwrap())
                        .unwrap()
                        .node_count()
                })
            })
        });
    }
    g.finish();
}

fn grid_oracle(c: &mut Criterion) {
    let net = he_init(&Architecture::mlp(8, &[32, 32], 4), 4).unwrap();
    let pts = synth_gaussian(2, 8, 5).unwrap();
    let path = LinearPath::new(&pts.row(0).to_vec(), &pts.row(1).to_vec()).unwrap();
    let mut g = c.benchmark_group("dense_node_oracle");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "grid=200000"), |b| {
            b.iter(|| dense_node_oracle(&net, &path, 200_000, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bridge, pair_walks, grid_oracle);
criterion_main!(benches);
