use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use umfdet::data::synth_toy_corpus;
use umfdet::evalkit::evaluate;
use umfdet::model::ModelConfig;
use umfdet::par::Exec;
use umfdet::trainer::{init_model, prepare_targets, TrainConfig, Trainer};

fn small_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            hidden: 32,
            visual_width: 32,
            ..ModelConfig::default()
        },
        batch_size: 8,
        ..TrainConfig::default()
    }
}

fn train_step(c: &mut Criterion) {
    let corpus = synth_toy_corpus(60, 0.9, 1).unwrap();
    let cfg = small_config();
    let model = init_model(&cfg, &corpus).unwrap();
    let targets = prepare_targets(&model, &corpus, &cfg).unwrap();
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        group.bench_function(name, |b| {
            b.iter_batched(
                || Trainer::new(cfg.clone(), model.clone(), exec).unwrap(),
                |mut t| t.step(&corpus, &targets).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn greedy_eval(c: &mut Criterion) {
    let corpus = synth_toy_corpus(30, 0.9, 2).unwrap();
    let model = init_model(&small_config(), &corpus).unwrap();
    let mut group = c.benchmark_group("greedy_eval");
    group.sample_size(10);
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        group.bench_function(name, |b| b.iter(|| evaluate(&model, &corpus[..8], 24, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, train_step, greedy_eval);
criterion_main!(benches);
