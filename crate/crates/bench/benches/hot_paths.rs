use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::Rng as _;
use synrl_core::datasets::{generate_boundary_task, BoundaryTaskSpec};
use synrl_core::mlp::chain;
use synrl_core::rng::seeded;
use synrl_core::{
    train, ActionSign, Activation, Dataset, EpsilonGreedy, InitScheme, LossKind, Mlp, QTable,
    RewardSign, TdRule, TrainerConfig,
};

fn ocr_like(rows: usize, hidden: &[usize]) -> (Mlp, Dataset) {
    let mut rng = seeded(7);
    let x = Array2::from_shape_fn((rows, 784), |_| rng.random::<f64>());
    let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..10)).collect();
    let data = Dataset::from_class_labels(x, &labels, 10).unwrap();
    let layers = chain(784, hidden, 10, Activation::Relu, Activation::Identity);
    let net = Mlp::init(
        layers,
        LossKind::SoftmaxCrossEntropy,
        InitScheme::Uniform { lo: -0.1, hi: 0.1 },
        1,
    )
    .unwrap();
    (net, data)
}

fn loss(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_5000_rows");
    for hidden in [vec![], vec![32]] {
        let (net, data) = ocr_like(5000, &hidden);
        g.bench_function(format!("{}hu", hidden.first().unwrap_or(&0)), |b| {
            b.iter(|| black_box(net.loss(&data).unwrap()))
        });
    }
    g.finish();
}

fn policy(c: &mut Criterion) {
    let mut q = QTable::new(0.9, 0.01).unwrap();
    let mut rng = seeded(3);
    for s in 0..36 {
        for a in ActionSign::ALL {
            q.set(s, a, rng.random_range(-1.0..1.0));
        }
    }
    let greedy = EpsilonGreedy::new(0.1).unwrap();
    c.bench_function("select_action", |b| {
        let mut state = 0;
        b.iter(|| {
            state = (state + 7) % 36;
            black_box(q.select_action(state, greedy, &mut rng))
        })
    });
    c.bench_function("td_update", |b| {
        let mut s = 0;
        b.iter(|| {
            let next = (s * 5 + 3) % 36;
            q.td_update(s, ActionSign::Inc, RewardSign::Pos, next);
            s = next;
        })
    });
}

fn trainer(c: &mut Criterion) {
    let task = generate_boundary_task(&BoundaryTaskSpec {
        hidden_units: 16,
        n_points: 500,
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    let cfg = TrainerConfig {
        iterations: 100,
        epsilon: 0.25,
        alpha_s: 0.001,
        alpha_q: 0.01,
        gamma: 0.9,
        train_policy: true,
        minibatch: None,
        alpha_s_schedule: vec![],
        seed: 0,
        metrics_every: 100,
        td_rule: TdRule::Standard,
        threads: 1,
    };
    c.bench_function("boundary_2_16_1_100_iterations", |b| {
        b.iter_batched(
            || {
                Mlp::init(
                    task.target.layers().to_vec(),
                    LossKind::MeanSquaredEuclidean,
                    InitScheme::Uniform { lo: -0.1, hi: 0.1 },
                    1,
                )
                .unwrap()
            },
            |net| train(net, QTable::new(0.9, 0.01).unwrap(), &task.data, None, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, loss, policy, trainer);
criterion_main!(benches);
