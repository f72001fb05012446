use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hoitg_core::{HoiModel, LossWeights, ModelAssets, ModelConfig};
use hoitg_diffcore::Exec;
use hoitg_harness::{batch_gradients, evaluate};
use hoitg_scenegen::dataset::generate_samples;
use hoitg_scenegen::{DatasetConfig, SceneSample, World, WorldConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_generation(c: &mut Criterion) {
    let world = World::new(WorldConfig::default()).unwrap();
    let cfg = DatasetConfig { num: 16, ..DatasetConfig::default() };
    let mut group = c.benchmark_group("generate_16_scenes");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_samples(&world, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_training_step(c: &mut Criterion) {
    let world = World::new(WorldConfig::default()).unwrap();
    let assets = Arc::new(ModelAssets::from_world(&world).unwrap());
    let model = HoiModel::<f32>::new(ModelConfig::default(), assets).unwrap();
    let samples = generate_samples(&world, &DatasetConfig { num: 4, ..DatasetConfig::default() }, Exec::Sequential).unwrap();
    let batch: Vec<&SceneSample> = samples.iter().collect();
    let ids: Vec<usize> = (0..batch.len()).collect();
    let weights = LossWeights::default();

    let mut group = c.benchmark_group("batch4_gradients");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| batch_gradients(&model, &batch, &weights, exec).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate_4_scenes");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(&model, &batch, &ids, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_generation, bench_training_step);
criterion_main!(benches);
