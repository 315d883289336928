use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use tspn_bench::{joints, model, striped_matrix, video};
use tspn_core::complexity::{emit_cost_table, sweep};
use tspn_core::geometry::viou;
use tspn_core::model::{predict, relationness, span_relation, InferenceConfig, SyntheticDescriptor};
use tspn_core::tempspan::SpanDecoder;

fn bench_viou(c: &mut Criterion) {
    let mut group = c.benchmark_group("viou");
    for frames in [100, 1000] {
        let v = video(frames, 1);
        let (a, b) = (&v.trajectories()[0], &v.trajectories()[1]);
        group.bench_with_input(BenchmarkId::from_parameter(frames), &frames, |bench, _| {
            bench.iter(|| viou(black_box(a), black_box(b)))
        });
    }
    group.finish();
}

fn bench_heads(c: &mut Criterion) {
    let model = model(16);
    let v = video(120, 2);
    let pairs = joints(&v, &model.config);
    let j = &pairs[0];
    c.bench_function("relationness/pair", |b| b.iter(|| relationness(&model.params, black_box(j))));
    c.bench_function("span_head/pair", |b| {
        b.iter(|| span_relation(&model.params, &model.config, black_box(j)))
    });
    let inference = InferenceConfig::default();
    c.bench_function("predict/video_120", |b| {
        b.iter(|| predict(black_box(&v), &model.params, &model.config, &inference, &SyntheticDescriptor))
    });
}

fn bench_decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode");
    let decoder = SpanDecoder::default();
    for k in [16, 64] {
        let (grid, z) = striped_matrix(1000, 4, k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| decoder.decode(black_box(&grid), black_box(&z)))
        });
    }
    group.finish();
}

fn bench_cost_table(c: &mut Criterion) {
    let inputs = sweep((100, 1000, 100), (10, 100, 10), (5, 50, 5));
    c.bench_function("cost_table/sweep", |b| b.iter(|| emit_cost_table(black_box(&inputs))));
}

criterion_group!(benches, bench_viou, bench_heads, bench_decode, bench_cost_table);
criterion_main!(benches);
