//! chaincast: train small heterogeneous chains of recurrent cells on
//! synthetic waveforms and compare three autoregressive rollout algorithms
//! (moving window, expanding window, and the memoryless rollout that never
//! re-reads its input) with an exact transformation-count cost model and
//! shifted-difference decay diagnostics.

pub mod cell;
pub mod chain;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod math;
pub mod report;
pub mod rollout;
pub mod train;

pub use cell::{CellKind, CellParams, InitScheme, LayerState, PredictorParams};
pub use chain::{zero_state, ChainModel, ChainState, StateRecord};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::{Algorithm, ExperimentConfig};
pub use dataset::{generate_dataset, split_dataset, DatasetSpec, Segment, Waveform};
pub use diagnostics::{
    ew_ml_equivalence, fit_decay, shifted_difference, trajectory_divergence, DecayFit, DeltaTrace,
    DivergenceReport,
};
pub use error::ChainError;
pub use math::Rng;
pub use rollout::{
    count_ew, count_ml, count_mw, predict_ew, predict_ml, predict_mw, speed_gain, ResetPolicy,
    RolloutResult,
};
pub use train::{loss_and_grads, train, AdamState, TrainConfig, TrainHistory};
