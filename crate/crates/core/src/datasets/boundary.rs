//! Random 2-D decision-boundary matching tasks.
//!
//! A "target" network with uniformly random weights and zero biases labels
//! uniformly sampled points by the sign of its output. A learner of the same
//! shape is then trained to reproduce those labels.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mlp::{Activation, LayerSpec, LossKind, Mlp};
use crate::rng::{self, derive_seed};

/// Each class must hold at least this fraction of points.
pub const MIN_CLASS_FRACTION: f64 = 0.05;
pub const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryTaskSpec {
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default = "default_weight_range")]
    pub weight_range: (f64, f64),
    #[serde(default = "default_data_range")]
    pub data_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> usize {
    100
}
fn default_input_dim() -> usize {
    2
}
fn default_points() -> usize {
    2000
}
fn default_weight_range() -> (f64, f64) {
    (-1.0, 1.0)
}
fn default_data_range() -> (f64, f64) {
    (-10.0, 10.0)
}

impl Default for BoundaryTaskSpec {
    fn default() -> Self {
        Self {
            hidden_units: default_hidden(),
            input_dim: default_input_dim(),
            n_points: default_points(),
            weight_range: default_weight_range(),
            data_range: default_data_range(),
            seed: 0,
        }
    }
}

impl BoundaryTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.input_dim == 0 || self.n_points == 0 {
            return Err(Error::InvalidConfig(
                "boundary task dimensions and point count must be positive".into(),
            ));
        }
        for (name, (lo, hi)) in [
            ("weight_range", self.weight_range),
            ("data_range", self.data_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("{name} must satisfy lo < hi")));
            }
        }
        Ok(())
    }

    /// Layer shape shared by target and learner: tanh hidden layer, identity output.
    pub fn layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(self.input_dim, self.hidden_units, Activation::Tanh),
            LayerSpec::new(self.hidden_units, 1, Activation::Identity),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryTask {
    pub target: Mlp,
    pub data: Dataset,
    /// Number of generation attempts consumed by the degeneracy guard (≥ 1).
    pub attempts: u64,
}

pub fn generate_boundary_task(spec: &BoundaryTaskSpec) -> Result<BoundaryTask> {
    spec.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let (target, data) = generate_once(spec, derive_seed(spec.seed, attempt))?;
        let positive = data.y().iter().filter(|&&v| v > 0.0).count();
        let minority = positive.min(data.len() - positive) as f64 / data.len() as f64;
        if minority >= MIN_CLASS_FRACTION {
            return Ok(BoundaryTask {
                target,
                data,
                attempts: attempt + 1,
            });
        }
        log::warn!(
            "boundary task seed {} attempt {}: minority class {:.1}% < {:.0}%, regenerating",
            spec.seed,
            attempt,
            100.0 * minority,
            100.0 * MIN_CLASS_FRACTION
        );
    }
    Err(Error::InvalidConfig(format!(
        "no non-degenerate boundary task after {MAX_ATTEMPTS} attempts"
    )))
}

fn generate_once(spec: &BoundaryTaskSpec, seed: u64) -> Result<(Mlp, Dataset)> {
    let mut rng = rng::seeded(seed);
    let (wlo, whi) = spec.weight_range;
    let weights = spec
        .layers()
        .iter()
        .map(|l| {
            let mut w = Array2::from_shape_simple_fn((l.output_dim, l.input_dim + 1), || {
                rng.random_range(wlo..=whi)
            });
            w.column_mut(0).fill(0.0);
            w
        })
        .collect();
    let target = Mlp::from_weights(spec.layers(), weights, LossKind::MeanSquaredEuclidean)?;

    let (dlo, dhi) = spec.data_range;
    let x = Array2::from_shape_simple_fn((spec.n_points, spec.input_dim), || {
        rng.random_range(dlo..=dhi)
    });
    let out = target.forward(&x)?;
    let y = out.mapv(|v| if v > 0.0 { 1.0 } else { -1.0 });
    Ok((target, Dataset::new(x, y)?))
}
