use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;
use synrl_core::gd::{max_relative_error, numerical_gradients};
use synrl_core::metrics::CSV_HEADER;
use synrl_core::mlp::chain;
use synrl_core::rng::seeded;
use synrl_core::{
    backprop_gradients, train, train_gd, Activation, Dataset, GdConfig, InitScheme, LossKind, Mlp,
    QTable, TdRule, TrainerConfig,
};

fn random_case(seed: u64, act: Activation, loss: LossKind, hidden: &[usize]) -> (Mlp, Dataset) {
    let net = Mlp::init(
        chain(3, hidden, 3, act, Activation::Identity),
        loss,
        InitScheme::Uniform { lo: -1.0, hi: 1.0 },
        seed,
    )
    .unwrap();
    let mut rng = seeded(seed.wrapping_add(1));
    let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
    let data = match loss {
        LossKind::MeanSquaredEuclidean => Dataset::new(
            x,
            Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0)),
        ),
        LossKind::SoftmaxCrossEntropy => {
            let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
            Dataset::from_class_labels(x, &labels, 3)
        }
    }
    .unwrap();
    (net, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn backprop_matches_finite_differences(
        seed in any::<u64>(),
        relu in any::<bool>(),
        ce in any::<bool>(),
        hidden in proptest::collection::vec(2usize..5, 0..3),
    ) {
        let act = if relu { Activation::Relu } else { Activation::Tanh };
        let loss = if ce { LossKind::SoftmaxCrossEntropy } else { LossKind::MeanSquaredEuclidean };
        let (net, data) = random_case(seed, act, loss, &hidden);
        let err = max_relative_error(
            &backprop_gradients(&net, &data).unwrap(),
            &numerical_gradients(&net, &data, 1e-5).unwrap(),
            1e-8,
        );
        // A ReLU kink within h of a pre-activation spoils the central difference.
        if relu {
            prop_assume!(err < 1e-3);
        }
        prop_assert!(err < 1e-6, "relative error {}", err);
    }
}

#[test]
fn linear_least_squares_descends_monotonically() {
    let mut rng = seeded(9);
    let x = Array2::from_shape_fn((40, 2), |_| rng.random_range(-1.0..1.0));
    let y = x
        .map_axis(ndarray::Axis(1), |r| 0.7 * r[0] - 1.3 * r[1] + 0.2)
        .insert_axis(ndarray::Axis(1));
    let data = Dataset::new(x, y).unwrap();
    let net = Mlp::init(
        chain(2, &[], 1, Activation::Identity, Activation::Identity),
        LossKind::MeanSquaredEuclidean,
        InitScheme::Zero,
        0,
    )
    .unwrap();
    let cfg = GdConfig {
        learning_rate: 0.1,
        epochs: 300,
        metrics_every: 1,
        seed: 0,
        plateau: None,
    };
    let out = train_gd(net, &data, None, &cfg).unwrap();
    let losses: Vec<f64> = out.log.rows().iter().map(|r| r.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(*losses.last().unwrap() < 1e-6);
}

#[test]
fn both_trainers_share_the_csv_schema() {
    let (net, data) = random_case(4, Activation::Tanh, LossKind::MeanSquaredEuclidean, &[4]);
    let gd = train_gd(
        net.clone(),
        &data,
        None,
        &GdConfig {
            learning_rate: 0.01,
            epochs: 5,
            metrics_every: 1,
            seed: 0,
            plateau: None,
        },
    )
    .unwrap();
    let rl = train(
        net,
        QTable::new(0.9, 0.01).unwrap(),
        &data,
        None,
        &TrainerConfig {
            iterations: 5,
            epsilon: 0.1,
            alpha_s: 0.01,
            alpha_q: 0.01,
            gamma: 0.9,
            train_policy: true,
            minibatch: None,
            alpha_s_schedule: vec![],
            seed: 0,
            metrics_every: 1,
            td_rule: TdRule::Standard,
            threads: 1,
        },
    )
    .unwrap();
    for csv in [gd.log.to_csv(), rl.log.to_csv()] {
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.all(|l| l.split(',').count() == 8));
    }
    // Gradient descent has no reward signal and no synaptic step size.
    let row = gd.log.to_csv().lines().nth(2).unwrap().to_owned();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!((fields[2], fields[6]), ("", ""));
}
