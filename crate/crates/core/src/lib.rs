//! Helmholtz machines whose deepest hidden layer is driven by an Ising
//! (optionally transverse-field) prior, trained with the wake-sleep algorithm.
//!
//! The prior is sampled through pluggable classical backends: exact
//! enumeration, the exact diagonal of a transverse-field Gibbs state,
//! single-site Metropolis chains, and a gray-box wrapper that hides the
//! effective temperature and perturbs parameters the way a noisy annealer
//! would. A minor-embedding layer maps the fully connected prior onto a sparse
//! hardware graph.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod ising;
pub mod nets;
pub mod quantum;
pub mod rng;
pub mod sampler;
pub mod spin;
pub mod trainer;

mod checkpoint;

pub use checkpoint::{checkpoint_load, checkpoint_save, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{Dataset, PixelKind, VisibleLayout, VisibleRecord};
pub use embedding::{Embedding, HardwareGraph, Topology};
pub use error::{QahmError, Result};
pub use eval::EvalReport;
pub use gaussian::{encode_gaussian, GaussianEncoding};
pub use ising::{IsingModel, MomentStats};
pub use nets::{BernoulliLayer, ContinuousHead, DeepNetwork, Direction, Trajectory};
pub use sampler::{BackendKind, SamplerBackend};
pub use spin::SpinVector;
pub use trainer::{BatchMode, EpochMetrics, GradientEstimate, TrainState, Trainer, TrainingConfig};
