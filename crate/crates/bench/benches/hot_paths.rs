use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skyharvest_bench::default_setup;
use skyharvest_core::d3qn::{ReplayBuffer, Trainer, TrainerConfig, Transition};
use skyharvest_core::environment::{observe, reset, step};
use skyharvest_core::nn::{ArchSpec, NetworkParams};
use skyharvest_core::orca::{step_others, OrcaParams, OthersPolicy, OtherUav};
use skyharvest_core::statecodec::{compute_normalizer, parameterize, CodecConfig, Normalizer};
use skyharvest_core::world::{UavBody, Vec2};

fn bench_env_step(c: &mut Criterion) {
    let (mut sim, space) = default_setup();
    sim.episode.n_others_range = (10, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let state = reset(&sim, &mut rng).unwrap();
    c.bench_function("env_step_j10", |b| {
        b.iter(|| {
            let (next, out) = step(black_box(&state), 17, &space, &sim, &mut rng);
            black_box((next.typical.position, out.reward.total()))
        })
    });
}

fn bench_parameterize(c: &mut Criterion) {
    let (mut sim, _) = default_setup();
    sim.episode.n_others_range = (10, 10);
    let codec = CodecConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = reset(&sim, &mut rng).unwrap();
    let obs = observe(&state, &sim);
    c.bench_function("parameterize", |b| {
        b.iter(|| black_box(parameterize(black_box(&obs), &codec, &sim)))
    });
}

fn bench_normalizer(c: &mut Criterion) {
    let (sim, _) = default_setup();
    let codec = CodecConfig::default();
    c.bench_function("normalizer_1k_snapshots", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            black_box(compute_normalizer(&sim, &codec, 1000, &mut rng))
        })
    });
}

fn bench_orca_crowd(c: &mut Criterion) {
    let (sim, _) = default_setup();
    let params = OrcaParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let agents: Vec<OtherUav> = (0..20)
        .map(|_| {
            let p = Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let goal = Vec2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            OtherUav {
                body: UavBody::new(p, 0.3, 5.0),
                goal,
            }
        })
        .collect();
    c.bench_function("orca_step_j20", |b| {
        b.iter(|| {
            black_box(step_others(
                black_box(&agents),
                None,
                &params,
                OthersPolicy::Orca,
                &sim.world,
                1.0,
                &mut rng,
            ))
        })
    });
}

fn bench_forward_eval(c: &mut Criterion) {
    let arch = ArchSpec {
        state_dim: 59,
        widths: vec![256, 256],
        action_count: 36,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = NetworkParams::init(&mut rng, &arch);
    let single = Array2::from_shape_fn((1, 59), |_| rng.gen_range(-1.0..1.0));
    c.bench_function("forward_eval_single", |b| {
        b.iter(|| black_box(params.forward_eval(black_box(&single))))
    });
}

fn bench_train_step(c: &mut Criterion) {
    let (mut sim, space) = default_setup();
    sim.episode.n_others_range = (2, 4);
    let codec = CodecConfig::default();
    let cfg = TrainerConfig {
        learn_start: 256,
        ..TrainerConfig::default()
    };
    let normalizer = Normalizer::identity(codec.state_dim());
    let mut trainer = Trainer::new(sim, codec, cfg, space, normalizer, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut buffer = ReplayBuffer::new(4096);
    for _ in 0..2048 {
        buffer.push(Transition {
            state: (0..59).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: rng.gen_range(0..36),
            reward: rng.gen_range(-1.0..1.0),
            next_state: (0..59).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminal: rng.gen_bool(0.05),
        });
    }
    trainer.buffer = buffer;
    c.bench_function("train_step_b256", |b| {
        b.iter(|| black_box(trainer.train_step()))
    });
}

criterion_group!(
    benches,
    bench_env_step,
    bench_parameterize,
    bench_normalizer,
    bench_orca_crowd,
    bench_forward_eval,
    bench_train_step
);
criterion_main!(benches);
