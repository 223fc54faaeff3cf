use ndarray::{array, Array2};
use synrl_core::datasets::{generate_boundary_task, BoundaryTaskSpec};
use synrl_core::mlp::LayerSpec;
use synrl_core::policy::STATE_COUNT;
use synrl_core::trainer::{MinibatchConfig, ScheduleStep};
use synrl_core::{
    train, ActionSign, Activation, Dataset, InitScheme, LossKind, Mlp, QTable, RewardSign,
    SynapseHistory, TdRule, TrainerConfig,
};

fn config(iterations: usize) -> TrainerConfig {
    TrainerConfig {
        iterations,
        epsilon: 0.25,
        alpha_s: 0.001,
        alpha_q: 0.01,
        gamma: 0.9,
        train_policy: true,
        minibatch: None,
        alpha_s_schedule: vec![],
        seed: 5,
        metrics_every: 1,
        td_rule: TdRule::Standard,
        threads: 1,
    }
}

fn boundary(seed: u64) -> (Mlp, Dataset) {
    let task = generate_boundary_task(&BoundaryTaskSpec {
        hidden_units: 8,
        n_points: 300,
        seed,
        ..Default::default()
    })
    .unwrap();
    let net = Mlp::init(
        task.target.layers().to_vec(),
        LossKind::MeanSquaredEuclidean,
        InitScheme::Uniform { lo: -0.1, hi: 0.1 },
        seed + 1,
    )
    .unwrap();
    (net, task.data)
}

fn state(a1: ActionSign, a2: ActionSign, r1: RewardSign, r2: RewardSign) -> usize {
    SynapseHistory {
        a_prev1: a1,
        a_prev2: a2,
        r_prev1: r1,
        r_prev2: r2,
    }
    .encode()
}

/// Two iterations of a 1 -> 1 identity net worked out by hand.
#[test]
fn two_iteration_trace() {
    use ActionSign::*;
    use RewardSign::*;
    let net = Mlp::from_weights(
        vec![LayerSpec::new(1, 1, Activation::Identity)],
        vec![Array2::zeros((1, 2))],
        LossKind::MeanSquaredEuclidean,
    )
    .unwrap();
    let data = Dataset::new(array![[1.0]], array![[1.0]]).unwrap();

    let start = state(Null, Null, Neg, Neg);
    let after_inc = state(Inc, Null, Pos, Neg);
    let after_dec = state(Dec, Inc, Neg, Pos);
    let mut q = QTable::new(0.5, 0.5).unwrap();
    q.set(start, Inc, 1.0);
    q.set(after_inc, Dec, 1.0);
    q.set(after_dec, Null, 0.25);

    let cfg = TrainerConfig {
        epsilon: 0.0,
        alpha_s: 0.25,
        alpha_q: 0.5,
        gamma: 0.5,
        ..config(2)
    };
    let out = train(net, q.clone(), &data, None, &cfg).unwrap();

    // Both synapses step up (output 0.5, loss 0.25), then back down (loss 1).
    let rows = out.log.rows();
    let losses: Vec<f64> = rows.iter().map(|r| r.train_loss).collect();
    assert_eq!(losses, vec![1.0, 0.25, 1.0]);
    let rewards: Vec<_> = rows.iter().map(|r| r.reward).collect();
    assert_eq!(rewards, vec![None, Some(Pos), Some(Neg)]);
    assert_eq!(out.net.synapses().collect::<Vec<_>>(), vec![0.0, 0.0]);

    // Iteration 1 learns nothing; iteration 2 updates (after_inc, Dec) twice,
    // once per synapse: 1 + 0.5 (-1 + 0.5 * 0.25 - 1) = 0.0625, then
    // 0.0625 + 0.5 (-1 + 0.125 - 0.0625) = -0.40625.
    let mut expected = q;
    expected.set(after_inc, Dec, -0.40625);
    assert_eq!(out.policy.values(), expected.values());
}

#[test]
fn frozen_weights_give_constant_loss_and_negative_rewards() {
    let (net, data) = boundary(1);
    let cfg = TrainerConfig {
        epsilon: 0.0,
        alpha_s: 0.0,
        ..config(50)
    };
    let out = train(
        net.clone(),
        QTable::new(0.9, 0.01).unwrap(),
        &data,
        None,
        &cfg,
    )
    .unwrap();
    assert_eq!(out.net, net);
    let first = out.log.rows()[0].train_loss;
    for row in &out.log.rows()[1..] {
        assert_eq!(row.train_loss, first);
        assert_eq!(row.reward, Some(RewardSign::Neg));
    }
}

#[test]
fn static_run_leaves_policy_bitwise_unchanged() {
    let (net, data) = boundary(2);
    let mut q = QTable::new(0.9, 0.01).unwrap();
    for s in 0..STATE_COUNT {
        q.set(s, ActionSign::Inc, s as f64 * 0.01 - 0.2);
        q.set(s, ActionSign::Dec, 0.1 - s as f64 * 0.003);
    }
    let cfg = TrainerConfig {
        train_policy: false,
        ..config(300)
    };
    let out = train(net, q.clone(), &data, None, &cfg).unwrap();
    let bits = |t: &QTable| {
        t.values()
            .iter()
            .flatten()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&out.policy), bits(&q));
}

fn assert_rewards_follow_log(cfg: &TrainerConfig, seed: u64) -> usize {
    let (net, data) = boundary(seed);
    let out = train(net, QTable::new(0.9, 0.01).unwrap(), &data, None, cfg).unwrap();
    let rows = out.log.rows();
    assert_eq!(rows.len(), cfg.iterations + 1);
    let mut boundaries = 0;
    for pair in rows.windows(2) {
        let (prev, row) = (&pair[0], &pair[1]);
        if row.batch_boundary {
            boundaries += 1;
            continue;
        }
        let expected = RewardSign::from_losses(prev.train_loss, row.train_loss).unwrap();
        assert_eq!(row.reward, Some(expected), "iteration {}", row.iteration);
    }
    boundaries
}

#[test]
fn rewards_match_logged_losses() {
    assert_eq!(assert_rewards_follow_log(&config(400), 3), 0);
}

#[test]
fn rewards_match_logged_losses_between_batch_boundaries() {
    let cfg = TrainerConfig {
        minibatch: Some(MinibatchConfig {
            size: 100,
            reselect_every: 50,
        }),
        ..config(400)
    };
    assert_eq!(assert_rewards_follow_log(&cfg, 4), 7);
}

#[test]
fn boundary_and_schedule_rows_are_forced() {
    let (net, data) = boundary(5);
    let cfg = TrainerConfig {
        minibatch: Some(MinibatchConfig {
            size: 120,
            reselect_every: 100,
        }),
        alpha_s_schedule: vec![ScheduleStep {
            at_iteration: 250,
            alpha_s: 0.0005,
        }],
        metrics_every: 1000,
        ..config(450)
    };
    let out = train(net, QTable::new(0.9, 0.01).unwrap(), &data, None, &cfg).unwrap();
    let logged: Vec<(usize, bool)> = out
        .log
        .rows()
        .iter()
        .map(|r| (r.iteration, r.batch_boundary))
        .collect();
    assert_eq!(
        logged,
        vec![
            (0, false),
            (101, true),
            (201, true),
            (250, false),
            (301, true),
            (401, true),
            (450, false)
        ]
    );
    let alphas: Vec<f64> = out.log.rows().iter().map(|r| r.alpha_s.unwrap()).collect();
    assert_eq!(
        alphas,
        vec![0.001, 0.001, 0.001, 0.0005, 0.0005, 0.0005, 0.0005]
    );
}

#[test]
fn identical_inputs_give_identical_runs() {
    let cfg = TrainerConfig {
        minibatch: Some(MinibatchConfig {
            size: 150,
            reselect_every: 40,
        }),
        ..config(500)
    };
    let run = || {
        let (net, data) = boundary(6);
        train(net, QTable::new(0.9, 0.01).unwrap(), &data, None, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    let bits = |n: &Mlp| n.synapses().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(&a.net), bits(&b.net));
    assert_eq!(a.policy, b.policy);

    let other = train(
        boundary(6).0,
        QTable::new(0.9, 0.01).unwrap(),
        &boundary(6).1,
        None,
        &TrainerConfig {
            seed: 6,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_ne!(a.log.to_csv(), other.log.to_csv());
}

#[test]
fn parallel_mode_is_repeatable() {
    let (net, data) = boundary(7);
    let cfg = TrainerConfig {
        threads: 3,
        ..config(200)
    };
    let a = train(
        net.clone(),
        QTable::new(0.9, 0.01).unwrap(),
        &data,
        None,
        &cfg,
    )
    .unwrap();
    let b = train(net, QTable::new(0.9, 0.01).unwrap(), &data, None, &cfg).unwrap();
    assert_eq!(a.log.to_csv(), b.log.to_csv());
}

#[test]
fn validation_metrics_on_every_row() {
    let (net, data) = boundary(8);
    let val = data.select(&(0..50).collect::<Vec<_>>()).unwrap();
    let cfg = TrainerConfig {
        metrics_every: 25,
        ..config(100)
    };
    let out = train(
        net,
        QTable::new(0.9, 0.01).unwrap(),
        &data,
        Some(&val),
        &cfg,
    )
    .unwrap();
    assert_eq!(out.log.rows().len(), 5);
    let last = out.log.last().unwrap();
    assert_eq!(last.val_accuracy, Some(out.net.accuracy(&val).unwrap()));
    assert_eq!(last.val_loss, Some(out.net.loss(&val).unwrap()));
}
