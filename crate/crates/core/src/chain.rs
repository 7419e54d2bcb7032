//! Composition of k recurrent cells plus the predictor head into one
//! network, with sequence folding and per-step state recording.
//!
//! States are immutable values: every step returns a fresh `ChainState`, so
//! rollout algorithms control state lifetime explicitly.

use crate::cell::{
    cell_forward, cell_forward_cached, predictor_apply, CellCache, CellKind, CellParams,
    InitScheme, LayerState, PredictorParams,
};
use crate::error::ChainError;
use crate::math::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainModel {
    pub cells: Vec<CellParams>,
    pub predictor: PredictorParams,
}

impl ChainModel {
    /// Validates that adjacent dimensions chain correctly and that the
    /// predictor consumes the last layer's state.
    pub fn new(cells: Vec<CellParams>, predictor: PredictorParams) -> Result<Self, ChainError> {
        if cells.is_empty() {
            return Err(ChainError::InvalidConfig("chain needs at least one cell".into()));
        }
        for r in 1..cells.len() {
            if cells[r].n_in != cells[r - 1].n_r {
                return Err(ChainError::InvalidConfig(format!(
                    "layer {} expects input of length {}, layer {} produces {}",
                    r + 1,
                    cells[r].n_in,
                    r,
                    cells[r - 1].n_r
                )));
            }
        }
        let last = cells.last().unwrap();
        if predictor.weight.cols() != last.n_r {
            return Err(ChainError::InvalidConfig(format!(
                "predictor expects input of length {}, last layer produces {}",
                predictor.weight.cols(),
                last.n_r
            )));
        }
        Ok(ChainModel { cells, predictor })
    }

    /// Builds a freshly initialized chain from (kind, state_dim) pairs.
    pub fn from_arch(
        input_dim: usize,
        arch: &[(CellKind, usize)],
        rng: &mut Rng,
        scheme: InitScheme,
    ) -> Result<Self, ChainError> {
        if arch.is_empty() {
            return Err(ChainError::InvalidConfig("architecture must be nonempty".into()));
        }
        let mut cells = Vec::with_capacity(arch.len());
        let mut n_in = input_dim;
        for &(kind, n_r) in arch {
            cells.push(crate::cell::init_params(kind, n_in, n_r, rng, scheme));
            n_in = n_r;
        }
        let predictor = crate::cell::init_predictor(input_dim, n_in, rng, scheme);
        ChainModel::new(cells, predictor)
    }

    pub fn depth(&self) -> usize {
        self.cells.len()
    }

    /// Dimension n_0 of the input elements (and of predictions).
    pub fn input_dim(&self) -> usize {
        self.cells[0].n_in
    }

    pub fn param_count(&self) -> usize {
        self.cells.iter().map(|c| c.param_count()).sum::<usize>() + self.predictor.param_count()
    }

    /// Same shapes, all-zero values. Used for gradient accumulators.
    pub fn zeros_like(&self) -> ChainModel {
        ChainModel {
            cells: self.cells.iter().map(|c| c.zeros_like()).collect(),
            predictor: self.predictor.zeros_like(),
        }
    }

    /// Flattens all parameters in checkpoint order: cells in chain order,
    /// gates in kind order, within each gate w_in row-major, then w_rec,
    /// then bias; finally the predictor weight and bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for cell in &self.cells {
            for gate in &cell.gates {
                out.extend_from_slice(gate.w_in.data());
                out.extend_from_slice(gate.w_rec.data());
                out.extend_from_slice(&gate.bias);
            }
        }
        out.extend_from_slice(self.predictor.weight.data());
        out.extend_from_slice(&self.predictor.bias);
        out
    }

    /// Inverse of `to_flat`; shapes must already match.
    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[at..at + dst.len()]);
            at += dst.len();
        };
        for cell in self.cells.iter_mut() {
            for gate in cell.gates.iter_mut() {
                take(gate.w_in.data_mut());
                take(gate.w_rec.data_mut());
                take(&mut gate.bias);
            }
        }
        take(self.predictor.weight.data_mut());
        take(&mut self.predictor.bias);
    }
}

/// Per-layer states (s_1, ..., s_k) at one point in a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub layers: Vec<LayerState>,
}

/// Every intermediate state of a sequence run: `layers[r][i]` is layer r's
/// state after consuming element i+1 (m entries per layer).
#[derive(Clone, Debug)]
pub struct StateRecord {
    pub layers: Vec<Vec<LayerState>>,
}

impl StateRecord {
    pub fn steps(&self) -> usize {
        self.layers.first().map_or(0, |l| l.len())
    }
}

pub fn zero_state(model: &ChainModel) -> ChainState {
    ChainState {
        layers: model
            .cells
            .iter()
            .map(|c| LayerState::zeros(c.kind, c.n_r))
            .collect(),
    }
}

/// One full update of the whole chain: layer 1 consumes `x`, each
/// following layer consumes the previous layer's new hidden state.
pub fn chain_step(model: &ChainModel, x: &[f64], state: &ChainState) -> ChainState {
    let mut count = 0;
    chain_step_counted(model, x, state, &mut count)
}

/// As `chain_step`, incrementing `transforms` once per cell application so
/// callers can measure work instead of trusting a formula.
pub fn chain_step_counted(
    model: &ChainModel,
    x: &[f64],
    state: &ChainState,
    transforms: &mut u64,
) -> ChainState {
    assert_eq!(
        state.layers.len(),
        model.cells.len(),
        "state has {} layers, model has {}",
        state.layers.len(),
        model.cells.len()
    );
    let mut layers = Vec::with_capacity(model.cells.len());
    let mut input = x;
    for (r, (cell, prev)) in model.cells.iter().zip(&state.layers).enumerate() {
        assert_eq!(
            input.len(),
            cell.n_in,
            "layer {} expects input of length {}, got {}",
            r + 1,
            cell.n_in,
            input.len()
        );
        let next = cell_forward(cell, input, prev);
        *transforms += 1;
        layers.push(next);
        input = &layers[r].h;
    }
    ChainState { layers }
}

/// As `chain_step` but also returns each cell's forward cache (for BPTT).
pub fn chain_step_cached(
    model: &ChainModel,
    x: &[f64],
    state: &ChainState,
) -> (ChainState, Vec<CellCache>) {
    let mut layers = Vec::with_capacity(model.cells.len());
    let mut caches = Vec::with_capacity(model.cells.len());
    let mut input = x;
    for (r, (cell, prev)) in model.cells.iter().zip(&state.layers).enumerate() {
        let (next, cache) = cell_forward_cached(cell, input, prev);
        caches.push(cache);
        layers.push(next);
        input = &layers[r].h;
    }
    (ChainState { layers }, caches)
}

/// Folds the chain over an input sequence. Returns the final state and,
/// when `record` is set, every intermediate state for diagnostics.
pub fn chain_run(
    model: &ChainModel,
    xs: &[Vec<f64>],
    state0: &ChainState,
    record: bool,
) -> (ChainState, Option<StateRecord>) {
    let mut count = 0;
    chain_run_counted(model, xs, state0, record, &mut count)
}

pub fn chain_run_counted(
    model: &ChainModel,
    xs: &[Vec<f64>],
    state0: &ChainState,
    record: bool,
    transforms: &mut u64,
) -> (ChainState, Option<StateRecord>) {
    assert!(!xs.is_empty(), "chain_run needs a nonempty input sequence");
    let mut rec = record.then(|| StateRecord {
        layers: vec![Vec::with_capacity(xs.len()); model.cells.len()],
    });
    let mut state = state0.clone();
    for x in xs {
        state = chain_step_counted(model, x, &state, transforms);
        if let Some(rec) = rec.as_mut() {
            for (r, layer) in state.layers.iter().enumerate() {
                rec.layers[r].push(layer.clone());
            }
        }
    }
    (state, rec)
}

/// Applies the predictor to the last layer's hidden state.
pub fn chain_predict_next(model: &ChainModel, state: &ChainState) -> Vec<f64> {
    predictor_apply(&model.predictor, &state.layers.last().expect("nonempty chain").h)
}

pub fn chain_predict_next_counted(
    model: &ChainModel,
    state: &ChainState,
    transforms: &mut u64,
) -> Vec<f64> {
    *transforms += 1;
    chain_predict_next(model, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{cell_forward, init_params};

    fn scalar_basic_cell(w: f64, u: f64, b: f64) -> CellParams {
        let mut p = CellParams::zeros(CellKind::Basic, 1, 1);
        p.gates[0].w_in.set(0, 0, w);
        p.gates[0].w_rec.set(0, 0, u);
        p.gates[0].bias[0] = b;
        p
    }

    fn toy_two_layer() -> ChainModel {
        let mut predictor = PredictorParams::zeros(1, 1);
        predictor.weight.set(0, 0, 1.0);
        ChainModel::new(
            vec![scalar_basic_cell(1.0, 1.0, 0.0), scalar_basic_cell(1.0, 1.0, 0.0)],
            predictor,
        )
        .unwrap()
    }

    fn mixed_model(seed: u64) -> ChainModel {
        let mut rng = Rng::new(seed);
        ChainModel::from_arch(
            1,
            &[(CellKind::Basic, 10), (CellKind::Lstm, 15), (CellKind::Gru, 8)],
            &mut rng,
            InitScheme::Uniform,
        )
        .unwrap()
    }

    #[test]
    fn zero_state_shapes() {
        let model = mixed_model(1);
        let s = zero_state(&model);
        assert_eq!(s.layers.len(), 3);
        assert_eq!(s.layers[0].h.len(), 10);
        assert_eq!(s.layers[1].h.len(), 15);
        assert_eq!(s.layers[1].c.as_ref().unwrap().len(), 15);
        assert_eq!(s.layers[2].h.len(), 8);
        for layer in &s.layers {
            assert_eq!(layer.norm(true), 0.0);
        }
    }

    #[test]
    fn zero_params_zero_input_stays_zero() {
        let cells = vec![
            CellParams::zeros(CellKind::Basic, 1, 4),
            CellParams::zeros(CellKind::Gru, 4, 3),
            CellParams::zeros(CellKind::Lstm, 3, 2),
        ];
        let model = ChainModel::new(cells, PredictorParams::zeros(1, 2)).unwrap();
        let s0 = zero_state(&model);
        let s1 = chain_step(&model, &[0.0], &s0);
        assert_eq!(s1, s0);
        // Any input with zero params also yields zero states.
        let s2 = chain_step(&model, &[3.7], &s0);
        for layer in &s2.layers {
            assert!(layer.h.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_layer_reduces_to_cell_forward() {
        let mut rng = Rng::new(2);
        let cell = init_params(CellKind::Gru, 1, 5, &mut rng, InitScheme::Uniform);
        let model =
            ChainModel::new(vec![cell.clone()], PredictorParams::zeros(1, 5)).unwrap();
        let x = [0.4];
        let expected = cell_forward(&cell, &x, &LayerState::zeros(CellKind::Gru, 5));
        let got = chain_step(&model, &x, &zero_state(&model));
        assert_eq!(got.layers[0], expected);
    }

    #[test]
    fn two_layer_scalar_composition() {
        let model = toy_two_layer();
        let s = chain_step(&model, &[0.5], &zero_state(&model));
        let l1 = 0.5f64.tanh();
        assert!((s.layers[0].h[0] - l1).abs() < 1e-15);
        assert!((s.layers[1].h[0] - l1.tanh()).abs() < 1e-15);
        // tanh(tanh(0.5)) = 0.43180818...
        assert!((s.layers[1].h[0] - 0.431_808_180_595_096_1).abs() < 1e-12);
        let pred = chain_predict_next(&model, &s);
        assert!((pred[0] - 0.431_808_180_595_096_1).abs() < 1e-12);
    }

    #[test]
    fn step_does_not_mutate_input_state() {
        let model = mixed_model(3);
        let s0 = zero_state(&model);
        let before = s0.clone();
        let _ = chain_step(&model, &[0.9], &s0);
        assert_eq!(s0, before);
    }

    #[test]
    fn run_of_length_one_equals_step() {
        let model = mixed_model(4);
        let s0 = zero_state(&model);
        let (run, _) = chain_run(&model, &[vec![0.25]], &s0, false);
        let step = chain_step(&model, &[0.25], &s0);
        assert_eq!(run, step);
    }

    #[test]
    fn run_concatenation_is_sequentially_consistent() {
        let model = mixed_model(5);
        let mut rng = Rng::new(6);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect();
        let (first, _) = chain_run(&model, &xs[..12], &zero_state(&model), false);
        let (resumed, _) = chain_run(&model, &xs[12..], &first, false);
        let (whole, _) = chain_run(&model, &xs, &zero_state(&model), false);
        assert_eq!(resumed, whole);
    }

    #[test]
    fn record_dimensions_for_reference_architecture() {
        let model = mixed_model(7);
        let xs: Vec<Vec<f64>> = (0..75).map(|i| vec![(i as f64 * 0.01).sin()]).collect();
        let (_, rec) = chain_run(&model, &xs, &zero_state(&model), true);
        let rec = rec.unwrap();
        assert_eq!(rec.layers.len(), 3);
        assert_eq!(rec.steps(), 75);
        assert_eq!(rec.layers[0].len(), 75);
        assert!(rec.layers[0].iter().all(|s| s.h.len() == 10));
        assert!(rec.layers[1].iter().all(|s| s.h.len() == 15));
        assert!(rec.layers[2].iter().all(|s| s.h.len() == 8));
    }

    #[test]
    fn layer_locality_of_upstream_records() {
        // Perturbing layer r's params leaves recorded states of layers q < r
        // unchanged.
        let model = mixed_model(8);
        let mut perturbed = model.clone();
        perturbed.cells[2].gates[0].w_in.data_mut()[0] += 0.37;
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64).cos()]).collect();
        let (_, rec_a) = chain_run(&model, &xs, &zero_state(&model), true);
        let (_, rec_b) = chain_run(&perturbed, &xs, &zero_state(&perturbed), true);
        let (rec_a, rec_b) = (rec_a.unwrap(), rec_b.unwrap());
        for q in 0..2 {
            assert_eq!(rec_a.layers[q], rec_b.layers[q], "layer {q} changed");
        }
        assert_ne!(rec_a.layers[2], rec_b.layers[2]);
    }

    #[test]
    #[should_panic(expected = "nonempty input sequence")]
    fn empty_run_panics() {
        let model = mixed_model(9);
        chain_run(&model, &[], &zero_state(&model), false);
    }

    #[test]
    #[should_panic(expected = "layer 1 expects input of length")]
    fn step_rejects_wrong_input_dim() {
        let model = mixed_model(10);
        chain_step(&model, &[1.0, 2.0], &zero_state(&model));
    }

    #[test]
    fn predictor_bias_passthrough() {
        let mut model = mixed_model(11);
        model.predictor = PredictorParams::zeros(1, 8);
        model.predictor.bias[0] = 0.77;
        let (state, _) = chain_run(&model, &[vec![0.1], vec![0.2]], &zero_state(&model), false);
        assert_eq!(chain_predict_next(&model, &state), vec![0.77]);
    }

    #[test]
    fn chain_new_rejects_mismatched_dims() {
        let cells = vec![
            CellParams::zeros(CellKind::Basic, 1, 4),
            CellParams::zeros(CellKind::Basic, 5, 3),
        ];
        let err = ChainModel::new(cells, PredictorParams::zeros(1, 3)).unwrap_err();
        assert!(err.to_string().contains("layer 2"));
    }

    #[test]
    fn flat_round_trip() {
        let model = mixed_model(12);
        let flat = model.to_flat();
        assert_eq!(flat.len(), model.param_count());
        let mut other = model.zeros_like();
        other.set_from_flat(&flat);
        assert_eq!(other, model);
    }
}
