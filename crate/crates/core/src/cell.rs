//! The three recurrent cell kinds (basic, GRU, LSTM) and the affine predictor
//! head, each with a forward step and an analytic backward pass.
//!
//! State passed downstream to the next layer is always the hidden vector `h`;
//! the LSTM's cell memory `c` is internal to the layer.

use crate::math::{affine, l2_norm, sigmoid_vec, tanh_vec, Matrix, Rng};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Basic,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn token(self) -> &'static str {
        match self {
            CellKind::Basic => "basic",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn from_token(s: &str) -> Option<CellKind> {
        match s {
            "basic" => Some(CellKind::Basic),
            "gru" => Some(CellKind::Gru),
            "lstm" => Some(CellKind::Lstm),
            _ => None,
        }
    }

    /// Number of (input weight, recurrent weight, bias) triples.
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Basic => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

// Gate block order within `CellParams::gates`. This order is part of the
// checkpoint format.
pub const GRU_UPDATE: usize = 0;
pub const GRU_RESET: usize = 1;
pub const GRU_CANDIDATE: usize = 2;

pub const LSTM_INPUT: usize = 0;
pub const LSTM_FORGET: usize = 1;
pub const LSTM_OUTPUT: usize = 2;
pub const LSTM_CANDIDATE: usize = 3;

/// One gate's parameter triple: `w_in` is n_r x n_in, `w_rec` is n_r x n_r,
/// `bias` has length n_r.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    fn zeros(n_in: usize, n_r: usize) -> Self {
        GateParams {
            w_in: Matrix::zeros(n_r, n_in),
            w_rec: Matrix::zeros(n_r, n_r),
            bias: vec![0.0; n_r],
        }
    }
}

/// Learnable weights of one recurrent cell. Doubles as the gradient
/// container: gradients are always shaped exactly like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub n_in: usize,
    pub n_r: usize,
    pub gates: Vec<GateParams>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, n_in: usize, n_r: usize) -> Self {
        assert!(n_in > 0 && n_r > 0, "cell dims must be positive");
        CellParams {
            kind,
            n_in,
            n_r,
            gates: (0..kind.gate_count())
                .map(|_| GateParams::zeros(n_in, n_r))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        CellParams::zeros(self.kind, self.n_in, self.n_r)
    }

    pub fn param_count(&self) -> usize {
        self.kind.gate_count() * (self.n_r * self.n_in + self.n_r * self.n_r + self.n_r)
    }
}

/// The inner state of one chain layer. `c` is present iff the layer is LSTM.
/// Also reused as the state-gradient container in the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Option<Vec<f64>>,
}

impl LayerState {
    pub fn zeros(kind: CellKind, n_r: usize) -> Self {
        LayerState {
            h: vec![0.0; n_r],
            c: match kind {
                CellKind::Lstm => Some(vec![0.0; n_r]),
                _ => None,
            },
        }
    }

    /// Norm of the exposed state; optionally concatenates the LSTM cell
    /// memory when `include_cell` is set.
    pub fn norm(&self, include_cell: bool) -> f64 {
        match (&self.c, include_cell) {
            (Some(c), true) => {
                let sq: f64 = self.h.iter().chain(c.iter()).map(|v| v * v).sum();
                sq.sqrt()
            }
            _ => l2_norm(&self.h),
        }
    }

    /// Norm of the difference `self - other`, with the same state layout.
    pub fn diff_norm(&self, other: &LayerState, include_cell: bool) -> f64 {
        assert_eq!(self.h.len(), other.h.len(), "state length mismatch");
        let mut sq: f64 = self
            .h
            .iter()
            .zip(&other.h)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if include_cell {
            if let (Some(ca), Some(cb)) = (&self.c, &other.c) {
                sq += ca
                    .iter()
                    .zip(cb)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
        sq.sqrt()
    }
}

/// Affine head mapping the last layer's final state back to input space.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams {
    pub weight: Matrix, // n_out x n_in
    pub bias: Vec<f64>, // n_out
}

impl PredictorParams {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        PredictorParams {
            weight: Matrix::zeros(n_out, n_in),
            bias: vec![0.0; n_out],
        }
    }

    pub fn zeros_like(&self) -> Self {
        PredictorParams::zeros(self.weight.rows(), self.weight.cols())
    }

    pub fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per weight block; zero
    /// biases except the LSTM forget-gate bias, which starts at 1.
    Uniform,
    /// All-zero parameters (test hook).
    Zeros,
}

fn init_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = 1.0 / (cols as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
    m
}

pub fn init_params(
    kind: CellKind,
    n_in: usize,
    n_r: usize,
    rng: &mut Rng,
    scheme: InitScheme,
) -> CellParams {
    let mut params = CellParams::zeros(kind, n_in, n_r);
    if scheme == InitScheme::Zeros {
        return params;
    }
    for gate in params.gates.iter_mut() {
        gate.w_in = init_matrix(n_r, n_in, rng);
        gate.w_rec = init_matrix(n_r, n_r, rng);
    }
    if kind == CellKind::Lstm {
        params.gates[LSTM_FORGET].bias.fill(1.0);
    }
    params
}

pub fn init_predictor(n_out: usize, n_in: usize, rng: &mut Rng, scheme: InitScheme) -> PredictorParams {
    let mut p = PredictorParams::zeros(n_out, n_in);
    if scheme == InitScheme::Zeros {
        return p;
    }
    p.weight = init_matrix(n_out, n_in, rng);
    p
}

/// Forward intermediates kept for the analytic backward pass.
#[derive(Clone, Debug)]
pub enum CellCache {
    Basic,
    Gru {
        update: Vec<f64>,
        reset: Vec<f64>,
        candidate: Vec<f64>,
    },
    Lstm {
        input: Vec<f64>,
        forget: Vec<f64>,
        output: Vec<f64>,
        candidate: Vec<f64>,
        tanh_c: Vec<f64>,
    },
}

fn check_shapes(params: &CellParams, x: &[f64], prev: &LayerState) {
    assert_eq!(
        x.len(),
        params.n_in,
        "{} cell expects input of length {}, got {}",
        params.kind.token(),
        params.n_in,
        x.len()
    );
    assert_eq!(
        prev.h.len(),
        params.n_r,
        "{} cell expects state of length {}, got {}",
        params.kind.token(),
        params.n_r,
        prev.h.len()
    );
    match params.kind {
        CellKind::Lstm => assert!(
            prev.c.as_ref().map(|c| c.len()) == Some(params.n_r),
            "lstm cell requires a cell-memory vector of length {}",
            params.n_r
        ),
        _ => assert!(prev.c.is_none(), "{} cell carries no cell memory", params.kind.token()),
    }
}

fn gate_preact(gate: &GateParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = affine(&gate.w_in, &gate.bias, x);
    let rec = gate.w_rec.matvec(h);
    for (av, rv) in a.iter_mut().zip(&rec) {
        *av += rv;
    }
    a
}

pub fn cell_forward(params: &CellParams, x: &[f64], prev: &LayerState) -> LayerState {
    cell_forward_cached(params, x, prev).0
}

pub fn cell_forward_cached(
    params: &CellParams,
    x: &[f64],
    prev: &LayerState,
) -> (LayerState, CellCache) {
    check_shapes(params, x, prev);
    match params.kind {
        CellKind::Basic => {
            let h = tanh_vec(&gate_preact(&params.gates[0], x, &prev.h));
            (LayerState { h, c: None }, CellCache::Basic)
        }
        CellKind::Gru => {
            let update = sigmoid_vec(&gate_preact(&params.gates[GRU_UPDATE], x, &prev.h));
            let reset = sigmoid_vec(&gate_preact(&params.gates[GRU_RESET], x, &prev.h));
            let gated: Vec<f64> = reset.iter().zip(&prev.h).map(|(r, h)| r * h).collect();
            let candidate = tanh_vec(&gate_preact(&params.gates[GRU_CANDIDATE], x, &gated));
            let h = update
                .iter()
                .zip(&prev.h)
                .zip(&candidate)
                .map(|((z, h), g)| (1.0 - z) * h + z * g)
                .collect();
            (
                LayerState { h, c: None },
                CellCache::Gru {
                    update,
                    reset,
                    candidate,
                },
            )
        }
        CellKind::Lstm => {
            let c_prev = prev.c.as_ref().expect("checked above");
            let input = sigmoid_vec(&gate_preact(&params.gates[LSTM_INPUT], x, &prev.h));
            let forget = sigmoid_vec(&gate_preact(&params.gates[LSTM_FORGET], x, &prev.h));
            let output = sigmoid_vec(&gate_preact(&params.gates[LSTM_OUTPUT], x, &prev.h));
            let candidate = tanh_vec(&gate_preact(&params.gates[LSTM_CANDIDATE], x, &prev.h));
            let c_new: Vec<f64> = forget
                .iter()
                .zip(c_prev)
                .zip(input.iter().zip(&candidate))
                .map(|((f, c), (i, g))| f * c + i * g)
                .collect();
            let tanh_c = tanh_vec(&c_new);
            let h = output.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
            (
                LayerState {
                    h,
                    c: Some(c_new),
                },
                CellCache::Lstm {
                    input,
                    forget,
                    output,
                    candidate,
                    tanh_c,
                },
            )
        }
    }
}

/// Accumulate one gate's parameter gradients given the gradient of its
/// pre-activation, and return the x / recurrent-input backprop terms.
fn gate_backward(
    gate: &GateParams,
    grads: &mut GateParams,
    d_pre: &[f64],
    x: &[f64],
    rec_in: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    grads.w_in.add_outer(d_pre, x);
    grads.w_rec.add_outer(d_pre, rec_in);
    for (b, d) in grads.bias.iter_mut().zip(d_pre) {
        *b += d;
    }
    (gate.w_in.matvec_t(d_pre), gate.w_rec.matvec_t(d_pre))
}

/// Analytic gradients of one cell step.
///
/// `upstream.h` is dLoss/d(out.h); `upstream.c` (LSTM only) is the gradient
/// flowing into `out.c` from the following time step. Returns gradients for
/// the parameters, the input `x`, and the previous state.
pub fn cell_backward(
    params: &CellParams,
    x: &[f64],
    prev: &LayerState,
    out: &LayerState,
    cache: &CellCache,
    upstream: &LayerState,
) -> (CellParams, Vec<f64>, LayerState) {
    check_shapes(params, x, prev);
    assert_eq!(upstream.h.len(), params.n_r, "upstream gradient length mismatch");
    let mut grads = params.zeros_like();
    match (params.kind, cache) {
        (CellKind::Basic, CellCache::Basic) => {
            // h' = tanh(a); da = gh * (1 - h'^2)
            let d_pre: Vec<f64> = upstream
                .h
                .iter()
                .zip(&out.h)
                .map(|(g, h)| g * (1.0 - h * h))
                .collect();
            let (d_x, d_h) = gate_backward(&params.gates[0], &mut grads.gates[0], &d_pre, x, &prev.h);
            (grads, d_x, LayerState { h: d_h, c: None })
        }
        (
            CellKind::Gru,
            CellCache::Gru {
                update,
                reset,
                candidate,
            },
        ) => {
            let gh = &upstream.h;
            let d_update: Vec<f64> = gh
                .iter()
                .zip(candidate.iter().zip(&prev.h))
                .map(|(g, (cand, h))| g * (cand - h))
                .collect();
            let d_candidate: Vec<f64> = gh.iter().zip(update).map(|(g, z)| g * z).collect();
            let mut d_h: Vec<f64> = gh
                .iter()
                .zip(update)
                .map(|(g, z)| g * (1.0 - z))
                .collect();

            let gated: Vec<f64> = reset.iter().zip(&prev.h).map(|(r, h)| r * h).collect();
            let d_pre_cand: Vec<f64> = d_candidate
                .iter()
                .zip(candidate)
                .map(|(d, g)| d * (1.0 - g * g))
                .collect();
            let (d_x_cand, d_gated) = gate_backward(
                &params.gates[GRU_CANDIDATE],
                &mut grads.gates[GRU_CANDIDATE],
                &d_pre_cand,
                x,
                &gated,
            );
            let d_reset: Vec<f64> = d_gated.iter().zip(&prev.h).map(|(d, h)| d * h).collect();
            for (dh, (d, r)) in d_h.iter_mut().zip(d_gated.iter().zip(reset)) {
                *dh += d * r;
            }

            let d_pre_reset: Vec<f64> = d_reset
                .iter()
                .zip(reset)
                .map(|(d, r)| d * r * (1.0 - r))
                .collect();
            let (d_x_reset, d_h_reset) = gate_backward(
                &params.gates[GRU_RESET],
                &mut grads.gates[GRU_RESET],
                &d_pre_reset,
                x,
                &prev.h,
            );

            let d_pre_update: Vec<f64> = d_update
                .iter()
                .zip(update)
                .map(|(d, z)| d * z * (1.0 - z))
                .collect();
            let (d_x_update, d_h_update) = gate_backward(
                &params.gates[GRU_UPDATE],
                &mut grads.gates[GRU_UPDATE],
                &d_pre_update,
                x,
                &prev.h,
            );

            let d_x: Vec<f64> = d_x_cand
                .iter()
                .zip(d_x_reset.iter().zip(&d_x_update))
                .map(|(a, (b, c))| a + b + c)
                .collect();
            for (dh, (a, b)) in d_h.iter_mut().zip(d_h_reset.iter().zip(&d_h_update)) {
                *dh += a + b;
            }
            (grads, d_x, LayerState { h: d_h, c: None })
        }
        (
            CellKind::Lstm,
            CellCache::Lstm {
                input,
                forget,
                output,
                candidate,
                tanh_c,
            },
        ) => {
            let c_prev = prev.c.as_ref().expect("checked above");
            let gh = &upstream.h;
            let d_output: Vec<f64> = gh.iter().zip(tanh_c).map(|(g, t)| g * t).collect();
            let mut d_c: Vec<f64> = gh
                .iter()
                .zip(output.iter().zip(tanh_c))
                .map(|(g, (o, t))| g * o * (1.0 - t * t))
                .collect();
            if let Some(gc) = &upstream.c {
                for (d, g) in d_c.iter_mut().zip(gc) {
                    *d += g;
                }
            }
            let d_forget: Vec<f64> = d_c.iter().zip(c_prev).map(|(d, c)| d * c).collect();
            let d_input: Vec<f64> = d_c.iter().zip(candidate).map(|(d, g)| d * g).collect();
            let d_candidate: Vec<f64> = d_c.iter().zip(input).map(|(d, i)| d * i).collect();
            let d_c_prev: Vec<f64> = d_c.iter().zip(forget).map(|(d, f)| d * f).collect();

            let sig_back = |d: &[f64], s: &[f64]| -> Vec<f64> {
                d.iter().zip(s).map(|(d, s)| d * s * (1.0 - s)).collect()
            };
            let d_pre_input = sig_back(&d_input, input);
            let d_pre_forget = sig_back(&d_forget, forget);
            let d_pre_output = sig_back(&d_output, output);
            let d_pre_cand: Vec<f64> = d_candidate
                .iter()
                .zip(candidate)
                .map(|(d, g)| d * (1.0 - g * g))
                .collect();

            let mut d_x = vec![0.0; params.n_in];
            let mut d_h = vec![0.0; params.n_r];
            for (idx, d_pre) in [
                (LSTM_INPUT, &d_pre_input),
                (LSTM_FORGET, &d_pre_forget),
                (LSTM_OUTPUT, &d_pre_output),
                (LSTM_CANDIDATE, &d_pre_cand),
            ] {
                let (dx, dh) =
                    gate_backward(&params.gates[idx], &mut grads.gates[idx], d_pre, x, &prev.h);
                for (a, b) in d_x.iter_mut().zip(&dx) {
                    *a += b;
                }
                for (a, b) in d_h.iter_mut().zip(&dh) {
                    *a += b;
                }
            }
            (
                grads,
                d_x,
                LayerState {
                    h: d_h,
                    c: Some(d_c_prev),
                },
            )
        }
        _ => unreachable!("cache kind does not match cell kind"),
    }
}

pub fn predictor_apply(params: &PredictorParams, s: &[f64]) -> Vec<f64> {
    affine(&params.weight, &params.bias, s)
}

/// Gradients of the predictor head: returns (parameter grads, d_s).
pub fn predictor_backward(
    params: &PredictorParams,
    s: &[f64],
    d_out: &[f64],
) -> (PredictorParams, Vec<f64>) {
    assert_eq!(d_out.len(), params.weight.rows(), "predictor upstream length mismatch");
    let mut grads = params.zeros_like();
    grads.weight.add_outer(d_out, s);
    grads.bias.copy_from_slice(d_out);
    (grads, params.weight.matvec_t(d_out))
}
