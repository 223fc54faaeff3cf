//! Dense feedforward networks with bias-augmented weight matrices.
//!
//! Layer `k` holds an `output_dim × (input_dim + 1)` matrix whose column 0 is
//! the bias. Every entry of every matrix is one synapse; the canonical synapse
//! order is layer-major, then row (neuron), then column (weight index), which is
//! exactly the row-major storage order of the matrices.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, target_class, Dataset};
use crate::error::{Error, Result};
use crate::rng;

pub const NET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a = apply(z)`.
    /// The ReLU subgradient at exactly zero is 0.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(1/N) Σ ||ŷ − y||²`
    MeanSquaredEuclidean,
    /// `(1/N) Σ −Σ_c y_c log softmax(ŷ)_c`, softmax fused into the loss.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    pub fn synapse_count(&self) -> usize {
        self.output_dim * (self.input_dim + 1)
    }
}

/// Builds the layer chain `input → hidden... → output`, hidden layers using
/// `hidden_activation` and the output layer `output_activation`.
pub fn chain(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    hidden_activation: Activation,
    output_activation: Activation,
) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(k, w)| {
            let act = if k == last {
                output_activation
            } else {
                hidden_activation
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Zero,
    Uniform { lo: f64, hi: f64 },
}

impl InitScheme {
    fn validate(self) -> Result<()> {
        match self {
            InitScheme::Zero => Ok(()),
            InitScheme::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    Err(Error::InvalidConfig(
                        "uniform init bounds must be finite".into(),
                    ))
                } else if lo >= hi {
                    Err(Error::InvalidConfig(format!(
                        "uniform init requires lo < hi, got [{lo}, {hi}]"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    weights: Vec<Array2<f64>>,
    loss: LossKind,
}

impl Mlp {
    /// Wraps explicit weight matrices after checking shapes and finiteness.
    pub fn from_weights(
        layers: Vec<LayerSpec>,
        weights: Vec<Array2<f64>>,
        loss: LossKind,
    ) -> Result<Self> {
        validate_chain(&layers)?;
        if layers.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} layer specs but {} weight matrices",
                layers.len(),
                weights.len()
            )));
        }
        for (k, (spec, w)) in layers.iter().zip(&weights).enumerate() {
            let want = (spec.output_dim, spec.input_dim + 1);
            if w.dim() != want {
                return Err(Error::Shape(format!(
                    "layer {k}: weight matrix is {:?}, expected {want:?}",
                    w.dim()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} weights")));
            }
        }
        let weights = weights
            .into_iter()
            .map(|w| w.as_standard_layout().into_owned())
            .collect();
        Ok(Self {
            layers,
            weights,
            loss,
        })
    }

    /// Deterministic initialization from `(layers, scheme, seed)`.
    pub fn init(
        layers: Vec<LayerSpec>,
        loss: LossKind,
        scheme: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        validate_chain(&layers)?;
        scheme.validate()?;
        let mut rng = rng::seeded(seed);
        let weights = layers
            .iter()
            .map(|spec| {
                let shape = (spec.output_dim, spec.input_dim + 1);
                match scheme {
                    InitScheme::Zero => Array2::zeros(shape),
                    InitScheme::Uniform { lo, hi } => {
                        Array2::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
                    }
                }
            })
            .collect();
        Ok(Self {
            layers,
            weights,
            loss,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn synapse_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::synapse_count).sum()
    }

    /// All synapses in canonical order.
    pub fn synapses(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().flat_map(|w| w.iter().copied())
    }

    /// Mutable access to all synapses in canonical order.
    pub fn synapses_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights.iter_mut().flat_map(|w| w.iter_mut())
    }

    /// Index of the first layer holding a non-finite weight.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.weights
            .iter()
            .position(|w| w.iter().any(|v| !v.is_finite()))
    }

    /// Output matrix `N × output_dim` for the un-augmented inputs `x`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward input".into()));
        }
        Ok(self.forward_view(x.view()))
    }

    pub(crate) fn forward_view(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut layers = self.layers.iter().zip(&self.weights);
        let (spec, w) = layers.next().expect("at least one layer");
        let mut a = layer_output(x, spec, w.view());
        for (spec, w) in layers {
            a = layer_output(a.view(), spec, w.view());
        }
        a
    }

    /// Pre-activations and activations of every layer, for backpropagation.
    pub(crate) fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Vec<(Array2<f64>, Array2<f64>)> {
        let mut trace: Vec<(Array2<f64>, Array2<f64>)> = Vec::with_capacity(self.layers.len());
        for (spec, w) in self.layers.iter().zip(&self.weights) {
            let input = match trace.last() {
                Some((_, a)) => a.view(),
                None => x,
            };
            let z = affine(input, w.view());
            let a = z.mapv(|v| spec.activation.apply(v));
            trace.push((z, a));
        }
        trace
    }

    /// Mean loss over the dataset.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        Ok(self.loss_unchecked(data))
    }

    pub(crate) fn loss_unchecked(&self, data: &Dataset) -> f64 {
        let out = self.forward_view(data.x().view());
        self.loss_sum(out.view(), data.y().view()) / data.len() as f64
    }

    /// Loss summed (not averaged) over rows.
    pub(crate) fn loss_sum(&self, out: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
        match self.loss {
            LossKind::MeanSquaredEuclidean => Zip::from(&out)
                .and(&y)
                .fold(0.0, |acc, &o, &t| acc + (o - t) * (o - t)),
            LossKind::SoftmaxCrossEntropy => out
                .rows()
                .into_iter()
                .zip(y.rows())
                .map(|(o, t)| {
                    let lse = log_sum_exp(o);
                    o.iter()
                        .zip(t.iter())
                        .map(|(&oi, &ti)| if ti == 0.0 { 0.0 } else { -ti * (oi - lse) })
                        .sum::<f64>()
                })
                .sum(),
        }
    }

    /// Fraction of rows whose predicted class equals the target class.
    ///
    /// Single-output nets predict the positive class iff the output is
    /// strictly greater than zero; multi-output nets predict the argmax.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.check_data(data)?;
        let out = self.forward_view(data.x().view());
        Ok(accuracy_of(out.view(), data.y().view()))
    }

    pub fn predict_classes(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let out = self.forward(x)?;
        Ok(out.rows().into_iter().map(predicted_class).collect())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {cols} columns, net expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &Dataset) -> Result<()> {
        self.check_input(data.input_dim())?;
        if data.target_dim() != self.output_dim() {
            return Err(Error::Shape(format!(
                "targets have {} columns, net outputs {}",
                data.target_dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_json_with_provenance(None)
    }

    pub fn to_json_with_provenance(&self, manifest_sha256: Option<&str>) -> Result<String> {
        let file = NetFile {
            format_version: NET_FORMAT_VERSION,
            layers: self.layers.clone(),
            loss: self.loss,
            weights: self
                .weights
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            manifest_sha256: manifest_sha256.map(str::to_owned),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text)?;
        if file.format_version != NET_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: NET_FORMAT_VERSION,
                found: file.format_version,
            });
        }
        let mut weights = Vec::with_capacity(file.weights.len());
        for (k, rows) in file.weights.into_iter().enumerate() {
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::Shape(format!("layer {k}: ragged weight rows")));
            }
            let nrows = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            weights.push(
                Array2::from_shape_vec((nrows, ncols), flat)
                    .map_err(|e| Error::Shape(e.to_string()))?,
            );
        }
        Self::from_weights(file.layers, weights, file.loss)
    }

    pub fn save(&self, path: &Path, manifest_sha256: Option<&str>) -> Result<()> {
        let text = self.to_json_with_provenance(manifest_sha256)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    format_version: u32,
    layers: Vec<LayerSpec>,
    loss: LossKind,
    weights: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest_sha256: Option<String>,
}

fn validate_chain(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Shape("network needs at least one layer".into()));
    }
    for (k, l) in layers.iter().enumerate() {
        if l.input_dim == 0 || l.output_dim == 0 {
            return Err(Error::Shape(format!("layer {k} has a zero dimension")));
        }
    }
    for (k, pair) in layers.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Shape(format!(
                "layer {k} outputs {} but layer {} expects {}",
                pair[0].output_dim,
                k + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

/// `input · W[:, 1..]ᵀ + W[:, 0]`
fn affine(input: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = input.dot(&w.slice(s![.., 1..]).t());
    z += &w.column(0);
    z
}

fn layer_output(
    input: ArrayView2<'_, f64>,
    spec: &LayerSpec,
    w: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut z = affine(input, w);
    if spec.activation != Activation::Identity {
        z.mapv_inplace(|v| spec.activation.apply(v));
    }
    z
}

pub(crate) fn log_sum_exp(row: ndarray::ArrayView1<'_, f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_rows(out: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut p = out.to_owned();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let lse = log_sum_exp(row.view());
        row.mapv_inplace(|v| (v - lse).exp());
    }
    p
}

fn predicted_class(row: ndarray::ArrayView1<'_, f64>) -> usize {
    if row.len() == 1 {
        usize::from(row[0] > 0.0)
    } else {
        argmax(row)
    }
}

pub(crate) fn accuracy_of(out: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
    let hits = out
        .rows()
        .into_iter()
        .zip(y.rows())
        .filter(|(o, t)| predicted_class(*o) == target_class(*t))
        .count();
    hits as f64 / out.nrows() as f64
}
