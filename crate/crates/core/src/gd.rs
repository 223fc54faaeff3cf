//! Full-batch gradient descent with backpropagation: the comparison baseline.

use ndarray::{s, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, MetricsRow};
use crate::mlp::{accuracy_of, softmax_rows, LossKind, Mlp};

/// Stop once the monitored loss has failed to improve by `min_delta` for
/// `patience` consecutive epochs. The monitored loss is the validation loss
/// when a validation set is given, otherwise the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            patience: 50,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdConfig {
    pub learning_rate: f64,
    /// Hard cap on the number of full-batch updates.
    pub epochs: usize,
    #[serde(default = "default_metrics_every")]
    pub metrics_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_plateau")]
    pub plateau: Option<Plateau>,
}

fn default_metrics_every() -> usize {
    10
}

fn default_plateau() -> Option<Plateau> {
    Some(Plateau::default())
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.metrics_every == 0 {
            return Err(Error::InvalidConfig(
                "epochs and metrics_every must be positive".into(),
            ));
        }
        if let Some(p) = self.plateau {
            if p.patience == 0 || !(p.min_delta.is_finite() && p.min_delta >= 0.0) {
                return Err(Error::InvalidConfig("invalid plateau criterion".into()));
            }
        }
        Ok(())
    }
}

/// Gradient of the mean loss with respect to every weight, one matrix per layer.
pub fn backprop_gradients(net: &Mlp, data: &Dataset) -> Result<Vec<Array2<f64>>> {
    net.check_data(data)?;
    Ok(gradients_unchecked(net, data))
}

fn gradients_unchecked(net: &Mlp, data: &Dataset) -> Vec<Array2<f64>> {
    let x = data.x().view();
    let y = data.y().view();
    let n = data.len() as f64;
    let trace = net.forward_trace(x);
    let (_, out) = trace.last().expect("non-empty net");

    // dL/d(output)
    let mut upstream = match net.loss_kind() {
        LossKind::MeanSquaredEuclidean => (out - &y) * (2.0 / n),
        LossKind::SoftmaxCrossEntropy => {
            let mut p = softmax_rows(out.view());
            let mass = y.sum_axis(Axis(1));
            for (mut row, &m) in p.axis_iter_mut(Axis(0)).zip(mass.iter()) {
                row *= m;
            }
            (p - y) / n
        }
    };

    let mut grads = vec![Array2::zeros((0, 0)); net.layers().len()];
    for k in (0..net.layers().len()).rev() {
        let act = net.layers()[k].activation;
        let (z, a) = &trace[k];
        let mut delta = upstream;
        Zip::from(&mut delta)
            .and(z)
            .and(a)
            .for_each(|d, &zv, &av| *d *= act.derivative(zv, av));

        let input = if k == 0 { x } else { trace[k - 1].1.view() };
        let w = &net.weights()[k];
        let mut g = Array2::zeros(w.dim());
        g.column_mut(0).assign(&delta.sum_axis(Axis(0)));
        g.slice_mut(s![.., 1..]).assign(&delta.t().dot(&input));
        grads[k] = g;

        upstream = delta.dot(&w.slice(s![.., 1..]));
    }
    grads
}

/// Central-difference estimate of the loss gradient, perturbing one weight at a time.
pub fn numerical_gradients(net: &Mlp, data: &Dataset, h: f64) -> Result<Vec<Array2<f64>>> {
    net.check_data(data)?;
    let mut probe = net.clone();
    let mut grads: Vec<Array2<f64>> = net
        .weights()
        .iter()
        .map(|w| Array2::zeros(w.dim()))
        .collect();
    for (k, g) in grads.iter_mut().enumerate() {
        for (idx, gv) in g.indexed_iter_mut() {
            let orig = probe.weights()[k][idx];
            probe.weights_mut()[k][idx] = orig + h;
            let plus = probe.loss_unchecked(data);
            probe.weights_mut()[k][idx] = orig - h;
            let minus = probe.loss_unchecked(data);
            probe.weights_mut()[k][idx] = orig;
            *gv = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over all entries.
pub fn max_relative_error(a: &[Array2<f64>], b: &[Array2<f64>], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub net: Mlp,
    pub log: MetricsLog,
    pub epochs_run: usize,
}

/// Full-batch descent `w ← w − α ∇L` until the plateau criterion or the epoch cap.
pub fn train_gd(
    mut net: Mlp,
    data: &Dataset,
    val: Option<&Dataset>,
    cfg: &GdConfig,
) -> Result<GdOutcome> {
    cfg.validate()?;
    net.check_data(data)?;
    if let Some(v) = val {
        net.check_data(v)?;
    }
    let mut log = MetricsLog::new();
    let initial = record(&net, data, val, 0);
    let mut best = initial.val_loss.unwrap_or(initial.train_loss);
    let mut last_improvement = 0;
    log.push(initial);

    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        let grads = gradients_unchecked(&net, data);
        for (w, g) in net.weights_mut().iter_mut().zip(&grads) {
            w.scaled_add(-cfg.learning_rate, g);
        }
        epochs_run = epoch;
        let row = record(&net, data, val, epoch);
        if !row.train_loss.is_finite() || row.val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: epoch,
                layer: crate::trainer::offending_layer(&net, data),
            });
        }
        let monitored = row.val_loss.unwrap_or(row.train_loss);
        if monitored < best - cfg.plateau.map_or(0.0, |p| p.min_delta) {
            best = monitored;
            last_improvement = epoch;
        }
        let stop = cfg
            .plateau
            .is_some_and(|p| epoch - last_improvement >= p.patience);
        if epoch % cfg.metrics_every == 0 || epoch == cfg.epochs || stop {
            log.push(row);
        }
        if stop {
            log::info!("plateau reached after {epoch} epochs");
            break;
        }
    }
    Ok(GdOutcome {
        net,
        log,
        epochs_run,
    })
}

fn record(net: &Mlp, data: &Dataset, val: Option<&Dataset>, epoch: usize) -> MetricsRow {
    let out = net.forward_view(data.x().view());
    let train_loss = net.loss_sum(out.view(), data.y().view()) / data.len() as f64;
    let (val_loss, val_accuracy) = match val {
        Some(v) => {
            let vo = net.forward_view(v.x().view());
            (
                Some(net.loss_sum(vo.view(), v.y().view()) / v.len() as f64),
                Some(accuracy_of(vo.view(), v.y().view())),
            )
        }
        None => (None, None),
    };
    MetricsRow {
        iteration: epoch,
        train_loss,
        reward: None,
        train_accuracy: Some(accuracy_of(out.view(), data.y().view())),
        val_loss,
        val_accuracy,
        alpha_s: None,
        batch_boundary: false,
    }
}
