use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lottery_lens::attribution::{self, AttributionMap, AttributionOptions, AttributionSettings, Baseline, Method};
use lottery_lens::data::generate_shapes;
use lottery_lens::metrics::{self, NeighborImputer};
use lottery_lens::model::{ModelConfig, Network};
use lottery_lens::par;
use lottery_lens::train::predict;

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", true), ("sequential", false)]
}

fn bench(c: &mut Criterion) {
    let data = generate_shapes(0, 6, 32).unwrap();
    let net = Network::<f32>::new(ModelConfig::default()).unwrap();
    let dims = data.dims();

    let mut g = c.benchmark_group("forward_batch_60");
    for (name, on) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_parallel(on);
            b.iter(|| predict(&net, &data).unwrap())
        });
    }
    g.finish();

    let small = data.head(4);
    let settings = AttributionSettings {
        method: Method::Ig,
        ig_steps: 16,
        baseline: Baseline::zero(dims),
        opts: AttributionOptions::default(),
    };
    let mut g = c.benchmark_group("integrated_gradients_4x16");
    g.sample_size(10);
    for (name, on) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_parallel(on);
            b.iter(|| attribution::attribute_dataset(&net, &small, &settings).unwrap())
        });
    }
    g.finish();

    let maps: Vec<AttributionMap> = (0..data.len())
        .map(|i| AttributionMap::random(dims, data.label(i), i as u64))
        .collect();
    let fractions = [0.0, 0.3, 0.6, 0.9];
    let mut g = c.benchmark_group("road_morf_60x4");
    g.sample_size(10);
    for (name, on) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_parallel(on);
            b.iter(|| metrics::road_morf(&net, &data, &maps, &fractions, &NeighborImputer::default()).unwrap())
        });
    }
    g.finish();
    par::set_parallel(true);
}

criterion_group!(benches, bench);
criterion_main!(benches);
