use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hge_core::optimizer::{batch_gradient, Gate, GateTask};
use hge_core::signals::presets;
use hge_core::validation::{gradient_scatter, Oracle, ScatterConfig};
use hge_core::{DeviceModel, LossKind, NoiseModel};

// Runs `f` on the global rayon pool and on a one-thread pool, or only
// sequentially when the crate is built without the `parallel` feature.
fn both<F: Fn() + Sync>(c: &mut Criterion, group: &str, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        g.bench_function(BenchmarkId::new("rayon_global", rayon::current_num_threads()), |b| b.iter(&f));
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::new("rayon_single", 1), |b| b.iter(|| single.install(&f)));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function(BenchmarkId::new("sequential", 1), |b| b.iter(&f));
    g.finish();
}

fn scatter(c: &mut Criterion) {
    let device = DeviceModel::reference_surrogate();
    let plan = presets::dnn_model();
    let config = ScatterConfig { n_points: 64, input_range: (-1.0, 1.0), oracle: Oracle::Analytic, seed: 1 };
    let noise = NoiseModel::white(0.05, 3);
    both(c, "scatter_64", || {
        black_box(gradient_scatter(&device, &plan, &config, Some(&noise)).unwrap());
    });
}

fn gate_batch(c: &mut Criterion) {
    let device = DeviceModel::reference_surrogate();
    let plan = presets::fig3_high_freq();
    let task = GateTask::new(Gate::Xor, 7);
    let controls = vec![0.1; task.control_terminals.len()];
    both(c, "batch_gradient", || {
        black_box(batch_gradient(&device, &task, &controls, &plan, &LossKind::CorrSigmoid, None).unwrap());
    });
}

criterion_group!(benches, scatter, gate_batch);
criterion_main!(benches);
