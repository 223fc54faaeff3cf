//! Gradient-free training of multi-layer perceptrons.
//!
//! Every scalar weight of an [`Mlp`] acts as an independent agent that nudges
//! itself up, down, or not at all each iteration. All agents share one small
//! tabular Q-function ([`QTable`]) indexed by the agent's last two actions and
//! the last two global reward signs; the reward is simply whether the network
//! loss went down. [`trainer::train`] runs that loop (optionally learning the
//! Q-function at the same time), and [`gd::train_gd`] provides a conventional
//! backpropagation baseline for comparison.

pub mod data;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod gd;
pub mod metrics;
pub mod mlp;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use data::Dataset;
pub use error::{Error, Result};
pub use gd::{backprop_gradients, train_gd, GdConfig};
pub use metrics::{MetricsLog, MetricsRow};
pub use mlp::{Activation, InitScheme, LayerSpec, LossKind, Mlp};
pub use policy::{ActionSign, EpsilonGreedy, QTable, RewardSign, SynapseHistory, TdRule};
pub use trainer::{train, TrainerConfig};
