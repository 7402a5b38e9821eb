use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kbr::metrics::{sample_points, TestFunction};
use kbr::par::{set_execution, Execution};
use kbr::{KernelModel, TrainingSet};

fn data(n: usize) -> TrainingSet {
    let f = TestFunction::Camel1d;
    let xs = sample_points(f, n, 1, 0);
    let v: Vec<f64> = xs.iter().map(|&x| f.value(&[x])).collect();
    TrainingSet::from_1d(&xs, &v).unwrap()
}

fn bench(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    g.sample_size(10);
    let set = data(4000);
    let queries: Vec<f64> = (0..2000).map(|i| 0.05 + 0.9 * i as f64 / 1999.0).collect();
    for (name, mode) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        set_execution(mode);
        g.bench_with_input(BenchmarkId::new("train", name), &set, |b, s| {
            b.iter(|| KernelModel::new(s.clone(), 2e-5).unwrap())
        });
        let model = KernelModel::new(set.clone(), 2e-5).unwrap();
        g.bench_with_input(BenchmarkId::new("predict", name), &queries, |b, q| {
            b.iter(|| model.predict_order2_batch(q))
        });
    }
    set_execution(Execution::Parallel);
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
