//! Sequence-to-one training of a chain: full backpropagation through time
//! over all steps and layers, Adam with bias correction, and the epoch loop.

use crate::cell::{cell_backward, predictor_backward, LayerState};
use crate::chain::{chain_predict_next, chain_step_cached, zero_state, ChainModel};
use crate::dataset::{split_dataset, Segment};
use crate::error::ChainError;
use crate::math::{mse, Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_grad_clip() -> Option<f64> {
    Some(5.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Global-norm gradient clip applied before each optimizer step.
    /// Long unrolls through basic cells can explode without it.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            batch_size: 32,
            validation_fraction: 0.2,
            seed: 0,
            grad_clip: default_grad_clip(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(ChainError::InvalidConfig(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ChainError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ChainError::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// First/second moment accumulators over the flattened parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }
}

/// Squared prediction error of one segment together with gradients for every
/// parameter, computed by unrolled reverse accumulation over all m steps and
/// all k layers.
pub fn loss_and_grads(model: &ChainModel, segment: &Segment) -> (f64, ChainModel) {
    assert!(!segment.is_empty(), "segment must contain at least one input");
    let m = segment.len();
    let depth = model.depth();

    // Forward, caching every state and gate activation.
    let mut states = Vec::with_capacity(m + 1);
    states.push(zero_state(model));
    let mut caches = Vec::with_capacity(m);
    for x in &segment.inputs {
        let (next, cache) = chain_step_cached(model, x, states.last().unwrap());
        states.push(next);
        caches.push(cache);
    }

    let final_state = states.last().unwrap();
    let prediction = chain_predict_next(model, final_state);
    let loss = mse(&prediction, &segment.target);

    // d(mse)/d(prediction)
    let n0 = prediction.len() as f64;
    let d_pred: Vec<f64> = prediction
        .iter()
        .zip(&segment.target)
        .map(|(p, t)| 2.0 * (p - t) / n0)
        .collect();

    let mut grads = model.zeros_like();
    let (pred_grads, d_last_h) =
        predictor_backward(&model.predictor, &final_state.layers[depth - 1].h, &d_pred);
    grads.predictor = pred_grads;

    // carry[r] = gradient flowing into layer r's state at the current step
    // from everything later in time.
    let mut carry: Vec<LayerState> = model
        .cells
        .iter()
        .map(|c| LayerState::zeros(c.kind, c.n_r))
        .collect();
    for (a, b) in carry[depth - 1].h.iter_mut().zip(&d_last_h) {
        *a += b;
    }

    for step in (0..m).rev() {
        // Gradient flowing from layer r+1's input back into layer r's new
        // hidden state within this step.
        let mut from_above: Option<Vec<f64>> = None;
        for r in (0..depth).rev() {
            let mut upstream = std::mem::replace(
                &mut carry[r],
                LayerState::zeros(model.cells[r].kind, model.cells[r].n_r),
            );
            if let Some(extra) = from_above.take() {
                for (a, b) in upstream.h.iter_mut().zip(&extra) {
                    *a += b;
                }
            }
            let input: &[f64] = if r == 0 {
                &segment.inputs[step]
            } else {
                &states[step + 1].layers[r - 1].h
            };
            let (cell_grads, d_x, d_prev) = cell_backward(
                &model.cells[r],
                input,
                &states[step].layers[r],
                &states[step + 1].layers[r],
                &caches[step][r],
                &upstream,
            );
            accumulate_cell(&mut grads.cells[r], &cell_grads);
            carry[r] = d_prev;
            if r > 0 {
                from_above = Some(d_x);
            }
        }
    }

    (loss, grads)
}

/// Forward-only prediction error of one segment.
pub fn segment_loss(model: &ChainModel, segment: &Segment) -> f64 {
    assert!(!segment.is_empty(), "segment must contain at least one input");
    let mut state = zero_state(model);
    for x in &segment.inputs {
        state = crate::chain::chain_step(model, x, &state);
    }
    mse(&chain_predict_next(model, &state), &segment.target)
}

fn accumulate_cell(acc: &mut crate::cell::CellParams, add: &crate::cell::CellParams) {
    for (a, b) in acc.gates.iter_mut().zip(&add.gates) {
        for (x, y) in a.w_in.data_mut().iter_mut().zip(b.w_in.data()) {
            *x += y;
        }
        for (x, y) in a.w_rec.data_mut().iter_mut().zip(b.w_rec.data()) {
            *x += y;
        }
        for (x, y) in a.bias.iter_mut().zip(&b.bias) {
            *x += y;
        }
    }
}

fn accumulate_model(acc: &mut ChainModel, add: &ChainModel) {
    for (a, b) in acc.cells.iter_mut().zip(&add.cells) {
        accumulate_cell(a, b);
    }
    for (x, y) in acc
        .predictor
        .weight
        .data_mut()
        .iter_mut()
        .zip(add.predictor.weight.data())
    {
        *x += y;
    }
    for (x, y) in acc.predictor.bias.iter_mut().zip(&add.predictor.bias) {
        *x += y;
    }
}

fn scale_model(model: &mut ChainModel, factor: f64) {
    for cell in model.cells.iter_mut() {
        for gate in cell.gates.iter_mut() {
            for v in gate.w_in.data_mut() {
                *v *= factor;
            }
            for v in gate.w_rec.data_mut() {
                *v *= factor;
            }
            for v in gate.bias.iter_mut() {
                *v *= factor;
            }
        }
    }
    for v in model.predictor.weight.data_mut() {
        *v *= factor;
    }
    for v in model.predictor.bias.iter_mut() {
        *v *= factor;
    }
}

/// Scales `grads` so its global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// One bias-corrected Adam update over flattened parameters.
pub fn adam_step_flat(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len(), "gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "optimizer state length mismatch");
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Adam over a model-shaped gradient, with optional global-norm clipping.
pub fn adam_step(
    model: &mut ChainModel,
    grads: &ChainModel,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    let mut flat_params = model.to_flat();
    let mut flat_grads = grads.to_flat();
    if let Some(max_norm) = cfg.grad_clip {
        clip_global_norm(&mut flat_grads, max_norm);
    }
    adam_step_flat(&mut flat_params, &flat_grads, state, cfg);
    model.set_from_flat(&flat_params);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

pub type TrainHistory = Vec<EpochStats>;

/// Trains the model with mini-batch Adam on a deterministic shuffled split of
/// `segments`. Per-segment gradients within a batch run in parallel but are
/// reduced in segment order, so results depend only on the seeds.
pub fn train(
    model: ChainModel,
    segments: Vec<Segment>,
    cfg: &TrainConfig,
) -> Result<(ChainModel, TrainHistory), ChainError> {
    train_with_progress(model, segments, cfg, |_| {})
}

/// As `train`, invoking `progress` after every epoch.
pub fn train_with_progress(
    model: ChainModel,
    segments: Vec<Segment>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(ChainModel, TrainHistory), ChainError> {
    cfg.validate()?;
    if segments.is_empty() {
        return Err(ChainError::EmptyDataset);
    }
    let (train_set, val_set) = split_dataset(segments, 1.0 - cfg.validation_fraction, cfg.seed)?;

    let mut model = model;
    let mut adam = AdamState::new(model.param_count());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut shuffle_rng = Rng::new(cfg.seed).substream(u64::MAX - 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, ChainModel)> = batch
                .par_iter()
                .map(|&i| loss_and_grads(&model, &train_set[i]))
                .collect();
            let mut batch_grads = model.zeros_like();
            let mut batch_loss = 0.0;
            for (loss, grads) in &results {
                batch_loss += loss;
                accumulate_model(&mut batch_grads, grads);
            }
            if !batch_loss.is_finite() {
                return Err(ChainError::Divergence {
                    epoch,
                    batch: batch_idx,
                });
            }
            scale_model(&mut batch_grads, 1.0 / batch.len() as f64);
            adam_step(&mut model, &batch_grads, &mut adam, cfg);
            epoch_loss += batch_loss;
        }
        let train_mse = epoch_loss / train_set.len() as f64;
        let val_mse = val_set
            .par_iter()
            .map(|seg| segment_loss(&model, seg))
            .sum::<f64>()
            / val_set.len() as f64;
        if !val_mse.is_finite() {
            return Err(ChainError::Divergence { epoch, batch: 0 });
        }
        let stats = EpochStats {
            epoch,
            train_mse,
            val_mse,
        };
        progress(&stats);
        history.push(stats);
    }
    Ok((model, history))
}
