//! Hot-path timings: exact min-cut solves, the appearance unary, simulator
//! forward passes, and one full training step.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use crfsim_core::datagen::{
    derive_seed, generate_scene, histogram_unary, saliency_like_unary, SampleRecord, UnaryKind,
};
use crfsim_core::energy::{compute_pairwise_weights, unary_from_prob, CrfInstance, SigmaParam};
use crfsim_core::maxflow::optimize;
use crfsim_core::nn::{trainer, AdamState};
use crfsim_core::simulator::{record_input_tensor, record_target_tensor, SimulatorModel};

fn instance_64(lambda: f64) -> CrfInstance {
    let scene = generate_scene(7, 64, 64);
    let prob = saliency_like_unary(&scene.mask, derive_seed(7, 1));
    let unary = unary_from_prob(&prob, 1e-6);
    let pairwise = compute_pairwise_weights(&scene.image, lambda, SigmaParam::Auto).unwrap();
    CrfInstance::new(unary, pairwise).unwrap()
}

fn bench_maxflow(c: &mut Criterion) {
    let mut group = c.benchmark_group("maxflow");
    for lambda in [1.0, 15.0, 400.0] {
        let instance = instance_64(lambda);
        group.bench_function(format!("optimize_64x64_lambda{lambda}"), |b| {
            b.iter(|| optimize(black_box(&instance)).unwrap())
        });
    }
    group.finish();
}

fn bench_datagen(c: &mut Criterion) {
    let scene = generate_scene(3, 64, 64);
    c.bench_function("histogram_unary_64x64", |b| {
        b.iter(|| histogram_unary(black_box(&scene.image), &scene.mask, 16).unwrap())
    });
    c.bench_function("generate_scene_64x64", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            generate_scene(black_box(seed), 64, 64)
        })
    });
}

fn sample_record() -> SampleRecord {
    let scene = generate_scene(11, 64, 64);
    let prob = saliency_like_unary(&scene.mask, derive_seed(11, 1));
    let pairwise = compute_pairwise_weights(&scene.image, 15.0, SigmaParam::Auto).unwrap();
    let record = SampleRecord::encode(64, 64, 15.0, UnaryKind::SaliencyLike, 11, &prob, &pairwise);
    let cut = optimize(&record.to_instance().unwrap()).unwrap();
    record.with_target(cut.labeling)
}

fn bench_simulator(c: &mut Criterion) {
    let record = sample_record();
    let input = record_input_tensor(&record);
    let model = SimulatorModel::new(64, 64, 5);
    c.bench_function("simulator_forward_64x64", |b| {
        b.iter(|| model.net.forward(black_box(&input)).unwrap())
    });

    let sample = (input, record_target_tensor(&record));
    c.bench_function("simulator_train_step_64x64", |b| {
        let mut model = SimulatorModel::new(64, 64, 5);
        let mut adam = AdamState::new(1e-4, &model.net.param_lens());
        let batch = [&sample];
        b.iter(|| trainer::bce_batch_step(&mut model.net, black_box(&batch), &mut adam).unwrap())
    });
}

criterion_group!(benches, bench_maxflow, bench_datagen, bench_simulator);
criterion_main!(benches);
