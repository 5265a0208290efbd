//! Trajectory sampling and training rounds, sequential versus parallel.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cmab_gfn::env::bitseq::DEFAULT_PATTERNS;
use cmab_gfn::env::{ArmSpace, BitSeqConfig, BitSeqEnv, Environment, Restriction, SuperArm};
use cmab_gfn::exec::Execution;
use cmab_gfn::gfn::{sample_batch, Provenance, TrainConfig, Trainer};
use cmab_gfn::policy::PolicyModel;
use cmab_gfn::rng::stream;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setup() -> (BitSeqEnv, PolicyModel<<BitSeqEnv as Environment>::State>) {
    let mut rng = stream(0, "bench", 0, 0);
    let patterns: Vec<String> = DEFAULT_PATTERNS.iter().map(|s| s.to_string()).collect();
    let cfg = BitSeqConfig::from_patterns(64, 4, &patterns, 10, 8, &mut rng).unwrap();
    let env = BitSeqEnv::new(cfg).unwrap();
    let model = PolicyModel::mlp(&env, 64, 0.1, &mut rng);
    (env, model)
}

fn sampling(c: &mut Criterion) {
    let (env, model) = setup();
    let space = ArmSpace::new(env.alphabet_size(), 1).unwrap();
    let restriction = Restriction::new(space, SuperArm::subset(vec![0, 3, 12, 15])).unwrap();
    let mut g = c.benchmark_group("sample_batch_64");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sample_batch(&model, &env, &restriction, 0.01, Provenance::Train, 64, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let (env, model) = setup();
    let space = ArmSpace::new(env.alphabet_size(), 1).unwrap();
    let all = Restriction::all(space);
    let cfg = TrainConfig { batch_size: 16, beta: 2.0, epsilon: 0.01, eval_epsilon: None, lr: 1e-3, z_lr: 1e-3 };
    let mut g = c.benchmark_group("train_round_16");
    for (name, exec) in MODES {
        let mut tr = Trainer::new(model.clone(), cfg.clone(), exec);
        let mut seed = 0;
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                seed += 1;
                tr.train_round(&env, &all, seed).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sampling, training);
criterion_main!(benches);
