//! Synchronized synaptic training loop.
//!
//! Each iteration every synapse picks an action from the shared policy using
//! its own history and applies it; the network loss is then re-evaluated once,
//! and the sign of the change is broadcast to all synapses as their reward.
//! When the policy is being trained, every synapse then contributes one
//! temporal-difference update for the transition it just experienced.

use std::borrow::Cow;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, MetricsRow};
use crate::mlp::Mlp;
use crate::policy::{ActionSign, EpsilonGreedy, QTable, RewardSign, SynapseHistory, TdRule};
use crate::rng::{self, derive_seed, Rng};

const ACTION_STREAM: u64 = 1;
const BATCH_STREAM: u64 = 2;
/// Rows per parallel loss chunk. Fixed so results do not depend on the thread count.
const LOSS_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinibatchConfig {
    pub size: usize,
    pub reselect_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub at_iteration: usize,
    pub alpha_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub iterations: usize,
    pub epsilon: f64,
    pub alpha_s: f64,
    pub alpha_q: f64,
    pub gamma: f64,
    pub train_policy: bool,
    #[serde(default)]
    pub minibatch: Option<MinibatchConfig>,
    #[serde(default)]
    pub alpha_s_schedule: Vec<ScheduleStep>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metrics_every")]
    pub metrics_every: usize,
    #[serde(default)]
    pub td_rule: TdRule,
    /// 1 selects reproducibility mode. Larger values evaluate the loss in
    /// parallel row chunks; results are then deterministic per chunking but
    /// not bit-identical to reproducibility mode.
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_metrics_every() -> usize {
    100
}

fn default_threads() -> usize {
    1
}

impl TrainerConfig {
    pub fn validate(&self, train_rows: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        EpsilonGreedy::new(self.epsilon)?;
        if !(self.alpha_s.is_finite() && self.alpha_s >= 0.0) {
            return bad(format!(
                "alpha_s must be finite and non-negative, got {}",
                self.alpha_s
            ));
        }
        if !(self.alpha_q.is_finite() && self.alpha_q >= 0.0) {
            return bad(format!(
                "alpha_q must be finite and non-negative, got {}",
                self.alpha_q
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if let Some(mb) = self.minibatch {
            if mb.size == 0 || mb.size > train_rows {
                return bad(format!(
                    "minibatch size {} must be in 1..={train_rows}",
                    mb.size
                ));
            }
            if mb.reselect_every == 0 {
                return bad("minibatch reselect_every must be positive".into());
            }
        }
        for pair in self.alpha_s_schedule.windows(2) {
            if pair[0].at_iteration >= pair[1].at_iteration {
                return bad("alpha_s schedule iterations must be strictly increasing".into());
            }
        }
        if let Some(step) = self
            .alpha_s_schedule
            .iter()
            .find(|s| !(s.alpha_s.is_finite() && s.alpha_s >= 0.0))
        {
            return bad(format!("scheduled alpha_s {} is invalid", step.alpha_s));
        }
        if self.metrics_every == 0 {
            return bad("metrics_every must be positive".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Synaptic step size in effect at `iteration`.
    pub fn alpha_s_at(&self, iteration: usize) -> f64 {
        self.alpha_s_schedule
            .iter()
            .take_while(|s| s.at_iteration <= iteration)
            .last()
            .map_or(self.alpha_s, |s| s.alpha_s)
    }
}

/// Rows drawn uniformly without replacement.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub indices: Vec<usize>,
    pub data: Dataset,
}

pub fn reselect_minibatch(data: &Dataset, size: usize, rng: &mut Rng) -> Result<Minibatch> {
    if size == 0 || size > data.len() {
        return Err(Error::InvalidConfig(format!(
            "minibatch size {size} must be in 1..={}",
            data.len()
        )));
    }
    let indices = index::sample(rng, data.len(), size).into_vec();
    let data = data.select(&indices)?;
    Ok(Minibatch { indices, data })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    pub policy: QTable,
    pub log: MetricsLog,
}

/// Per-synapse agent state, parallel to the canonical synapse order.
#[derive(Debug, Clone)]
pub struct SynapseAgentField {
    pub history: Vec<SynapseHistory>,
    pub last_action: Vec<ActionSign>,
}

impl SynapseAgentField {
    pub fn new(synapses: usize) -> Self {
        Self {
            history: vec![SynapseHistory::default(); synapses],
            last_action: vec![ActionSign::Null; synapses],
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

/// Runs the synaptic training loop for exactly `cfg.iterations` iterations.
///
/// With `cfg.train_policy` false the returned policy is the input policy,
/// untouched. With it true, the policy's discount, learning rate and update
/// rule are taken from `cfg`.
pub fn train(
    mut net: Mlp,
    policy: QTable,
    data: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainerConfig,
) -> Result<TrainOutcome> {
    cfg.validate(data.len())?;
    net.check_data(data)?;
    if let Some(v) = val {
        net.check_data(v)?;
    }
    let mut q = if cfg.train_policy {
        QTable::with_values(*policy.values(), cfg.gamma, cfg.alpha_q)?.with_rule(cfg.td_rule)
    } else {
        policy
    };
    let greedy = EpsilonGreedy::new(cfg.epsilon)?;
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let eval_loss = |net: &Mlp, batch: &Dataset| match &pool {
        Some(pool) => pool.install(|| chunked_loss(net, batch)),
        None => net.loss_unchecked(batch),
    };

    let mut action_rng = rng::seeded(derive_seed(cfg.seed, ACTION_STREAM));
    let mut batch_rng = rng::seeded(derive_seed(cfg.seed, BATCH_STREAM));
    let mut batch: Cow<'_, Dataset> = match cfg.minibatch {
        Some(mb) => Cow::Owned(reselect_minibatch(data, mb.size, &mut batch_rng)?.data),
        None => Cow::Borrowed(data),
    };

    let mut agents = SynapseAgentField::new(net.synapse_count());
    let mut log = MetricsLog::new();
    let mut old_loss = eval_loss(&net, &batch);
    check_finite(&net, &batch, old_loss, 0)?;
    log.push(snapshot(
        &net,
        data,
        val,
        0,
        old_loss,
        None,
        cfg.alpha_s,
        false,
    ));

    for t in 1..=cfg.iterations {
        let alpha_s = cfg.alpha_s_at(t);
        let schedule_change = alpha_s.to_bits() != cfg.alpha_s_at(t - 1).to_bits();
        let boundary = match cfg.minibatch {
            Some(mb) => t > 1 && (t - 1) % mb.reselect_every == 0,
            None => false,
        };
        if boundary {
            let mb = cfg.minibatch.expect("boundary implies minibatching");
            batch = Cow::Owned(reselect_minibatch(data, mb.size, &mut batch_rng)?.data);
            old_loss = eval_loss(&net, &batch);
        }

        for ((w, h), a) in net
            .synapses_mut()
            .zip(&agents.history)
            .zip(agents.last_action.iter_mut())
        {
            *a = q.select_action(h.encode(), greedy, &mut action_rng);
            *w = a.apply(*w, alpha_s);
        }

        let new_loss = eval_loss(&net, &batch);
        check_finite(&net, &batch, new_loss, t)?;
        let reward = RewardSign::from_losses(old_loss, new_loss)?;
        old_loss = new_loss;

        // The first iteration starts from the synthetic initial history, so it
        // yields no complete transition to learn from.
        let learn = cfg.train_policy && t > 1;
        for (h, &a) in agents.history.iter_mut().zip(&agents.last_action) {
            let s_prev = h.encode();
            *h = h.shifted(a, reward);
            if learn {
                q.td_update(s_prev, a, reward, h.encode());
            }
        }

        if t % cfg.metrics_every == 0 || t == cfg.iterations || boundary || schedule_change {
            log.push(snapshot(
                &net,
                data,
                val,
                t,
                new_loss,
                Some(reward),
                alpha_s,
                boundary,
            ));
        }
        if t % 10_000 == 0 {
            log::debug!("iteration {t}: loss {new_loss:.6}");
        }
    }

    Ok(TrainOutcome {
        net,
        policy: q,
        log,
    })
}

#[allow(clippy::too_many_arguments)]
fn snapshot(
    net: &Mlp,
    train: &Dataset,
    val: Option<&Dataset>,
    iteration: usize,
    train_loss: f64,
    reward: Option<RewardSign>,
    alpha_s: f64,
    batch_boundary: bool,
) -> MetricsRow {
    let train_out = net.forward_view(train.x().view());
    let (val_loss, val_accuracy) = match val {
        Some(v) => {
            let out = net.forward_view(v.x().view());
            (
                Some(net.loss_sum(out.view(), v.y().view()) / v.len() as f64),
                Some(crate::mlp::accuracy_of(out.view(), v.y().view())),
            )
        }
        None => (None, None),
    };
    MetricsRow {
        iteration,
        train_loss,
        reward,
        train_accuracy: Some(crate::mlp::accuracy_of(train_out.view(), train.y().view())),
        val_loss,
        val_accuracy,
        alpha_s: Some(alpha_s),
        batch_boundary,
    }
}

fn check_finite(net: &Mlp, batch: &Dataset, loss: f64, iteration: usize) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    Err(Error::Divergence {
        iteration,
        layer: offending_layer(net, batch),
    })
}

/// First layer with non-finite weights, else first layer whose activations go non-finite.
pub(crate) fn offending_layer(net: &Mlp, batch: &Dataset) -> Option<usize> {
    net.first_non_finite_layer().or_else(|| {
        net.forward_trace(batch.x().view())
            .iter()
            .position(|(_, a)| a.iter().any(|v| !v.is_finite()))
    })
}

fn chunked_loss(net: &Mlp, data: &Dataset) -> f64 {
    let x = data.x();
    let y = data.y();
    let partial: Vec<f64> = (0..data.len())
        .step_by(LOSS_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + LOSS_CHUNK).min(data.len());
            let xs = x.slice(ndarray::s![start..end, ..]);
            let out = net.forward_view(xs);
            net.loss_sum(out.view(), y.slice(ndarray::s![start..end, ..]))
        })
        .collect();
    partial.iter().sum::<f64>() / data.len() as f64
}
