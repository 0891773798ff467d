use criterion::{black_box, criterion_group, criterion_main, Criterion};

use shapmon::predictor::{ModelSpec, RecurrentConfig};
use shapmon::shapley::{exact_shapley, sampled_shapley, ValueFunction};
use shapmon_bench::fixture;

fn linear(c: &mut Criterion) {
    let f = fixture(1000, ModelSpec::Linear { l2: 0.0 });
    let x = f.instance(4);
    let mut group = c.benchmark_group("linear");
    group.bench_function("exact closed form", |b| {
        b.iter(|| {
            let vf = ValueFunction::new(&f.model, &f.background, x).unwrap();
            black_box(exact_shapley(&vf, usize::MAX).unwrap())
        })
    });
    group.bench_function("sampled 2000 permutations", |b| {
        b.iter(|| {
            let vf = ValueFunction::new(&f.model, &f.background, x).unwrap();
            black_box(sampled_shapley(&vf, 2000, 7).unwrap())
        })
    });
    group.finish();
}

fn recurrent(c: &mut Criterion) {
    let config = RecurrentConfig {
        epochs: 5,
        ..RecurrentConfig::default()
    };
    let f = fixture(300, ModelSpec::Recurrent(config));
    let x = f.instance(1);
    let mut group = c.benchmark_group("recurrent");
    group.sample_size(10);
    group.bench_function("exact", |b| {
        b.iter(|| {
            let vf = ValueFunction::new(&f.model, &f.background, x).unwrap();
            black_box(exact_shapley(&vf, 20).unwrap())
        })
    });
    group.bench_function("sampled 100 permutations", |b| {
        b.iter(|| {
            let vf = ValueFunction::new(&f.model, &f.background, x).unwrap();
            black_box(sampled_shapley(&vf, 100, 7).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, linear, recurrent);
criterion_main!(benches);
