//! Shifted-difference traces, exponential-decay fitting, and trajectory
//! comparison between rollout algorithms.
//!
//! The shifted difference compares states at matching signal positions across
//! adjacent moving-window rounds: window j+1 is window j shifted by one, so
//! state i+1 of round j and state i of round j+1 saw the same inputs apart
//! from the window's leading edge. Its decay along i is what licenses the
//! memoryless rollout.

use crate::chain::{ChainModel, StateRecord};
use crate::error::ChainError;
use crate::rollout::{predict_ew, predict_ml, ResetPolicy, RolloutResult};

/// Norms delta_{r,i}^j = ||s_{r,i+1}^j - s_{r,i}^{j+1}|| for i = 1..m-1.
#[derive(Clone, Debug)]
pub struct DeltaTrace {
    /// Layer index r, 0-based.
    pub layer: usize,
    /// Round j of the pair (j, j+1), 1-based.
    pub round: usize,
    pub norms: Vec<f64>,
}

/// Least-squares line through (i, ln delta_i) over the entries above the
/// noise floor.
#[derive(Clone, Debug)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// First 1-based index from which the trace stays below the floor, if
    /// the curve levels off.
    pub floor_index: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct DivergenceReport {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub per_step: Vec<f64>,
}

/// Runs a recorded moving-window rollout and extracts the shifted-difference
/// trace of every layer for every adjacent round pair (j, j+1), j = 1..rounds-1.
/// Norms use the hidden state only.
pub fn shifted_difference(
    model: &ChainModel,
    x: &[Vec<f64>],
    rounds: usize,
    policy: ResetPolicy,
) -> Vec<DeltaTrace> {
    shifted_difference_with(model, x, rounds, policy, false)
}

/// As `shifted_difference`, optionally concatenating the LSTM cell memory
/// into the compared state vectors.
pub fn shifted_difference_with(
    model: &ChainModel,
    x: &[Vec<f64>],
    rounds: usize,
    policy: ResetPolicy,
    include_cell: bool,
) -> Vec<DeltaTrace> {
    assert!(rounds >= 2, "need at least two rounds to form a shifted difference");
    let result = crate::rollout::predict_mw(model, x, rounds, policy, true);
    let records = result
        .state_records
        .as_ref()
        .expect("recording was requested");
    delta_traces_from_records(records, include_cell)
}

/// Shifted-difference traces from already-recorded window rounds.
/// Panics if fewer than two rounds were recorded (the records are required).
pub fn delta_traces_from_records(records: &[StateRecord], include_cell: bool) -> Vec<DeltaTrace> {
    assert!(
        records.len() >= 2,
        "shifted differences need recorded states of at least two rounds"
    );
    let layers = records[0].layers.len();
    let mut traces = Vec::with_capacity((records.len() - 1) * layers);
    for j in 0..records.len() - 1 {
        let (cur, next) = (&records[j], &records[j + 1]);
        let m = cur.steps();
        assert_eq!(next.steps(), m, "shifted rounds must share the window length");
        for r in 0..layers {
            let norms = (0..m - 1)
                .map(|i| cur.layers[r][i + 1].diff_norm(&next.layers[r][i], include_cell))
                .collect();
            traces.push(DeltaTrace {
                layer: r,
                round: j + 1,
                norms,
            });
        }
    }
    traces
}

/// Fits ln(delta) against the 1-based step index, ignoring entries at or
/// below `floor_eps`. Errors when fewer than three points remain.
pub fn fit_decay(trace: &DeltaTrace, floor_eps: f64) -> Result<DecayFit, ChainError> {
    let points: Vec<(f64, f64)> = trace
        .norms
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > floor_eps)
        .map(|(idx, d)| ((idx + 1) as f64, d.ln()))
        .collect();
    if points.len() < 3 {
        return Err(ChainError::NoDecayRegime {
            usable: points.len(),
        });
    }

    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in &points {
        let fitted = slope * x + intercept;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };

    // First index from which the trace never rises above the floor again.
    let mut floor_index = None;
    for (idx, d) in trace.norms.iter().enumerate().rev() {
        if *d > floor_eps {
            break;
        }
        floor_index = Some(idx + 1);
    }

    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        floor_index,
    })
}

/// Elementwise absolute differences between two trajectories of equal length.
/// For vector-valued points the largest component difference is used.
pub fn trajectory_divergence(a: &RolloutResult, b: &RolloutResult) -> DivergenceReport {
    assert_eq!(
        a.predictions.len(),
        b.predictions.len(),
        "trajectories must predict the same number of points"
    );
    let per_step: Vec<f64> = a
        .predictions
        .iter()
        .zip(&b.predictions)
        .map(|(pa, pb)| {
            assert_eq!(pa.len(), pb.len(), "prediction dimensions differ");
            pa.iter()
                .zip(pb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let max_abs = per_step.iter().copied().fold(0.0, f64::max);
    let mean_abs = per_step.iter().sum::<f64>() / per_step.len() as f64;
    DivergenceReport {
        max_abs,
        mean_abs,
        per_step,
    }
}

/// Executable form of the well-trained equivalence claim: expanding-window
/// and memoryless trajectories from the same input should coincide within
/// `tol` once the one-step prediction error is negligible.
pub fn ew_ml_equivalence(
    model: &ChainModel,
    x: &[Vec<f64>],
    p: usize,
    tol: f64,
) -> (bool, DivergenceReport) {
    let ew = predict_ew(model, x, p, x.len() + p, false);
    let ml = predict_ml(model, x, p, false);
    let report = trajectory_divergence(&ew, &ml);
    (report.max_abs < tol, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{CellKind, CellParams, InitScheme, LayerState, PredictorParams};
    use crate::math::Rng;
    use crate::rollout::predict_mw;

    fn model(arch: &[(CellKind, usize)], seed: u64) -> ChainModel {
        ChainModel::from_arch(1, arch, &mut Rng::new(seed), InitScheme::Uniform).unwrap()
    }

    fn series(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| vec![rng.uniform(-1.0, 1.0)]).collect()
    }

    #[test]
    fn trace_lengths_and_counts() {
        let model = model(&[(CellKind::Basic, 4), (CellKind::Lstm, 3)], 70);
        for m in [2usize, 5, 9] {
            let x = series(m, 71);
            let traces = shifted_difference(&model, &x, 3, ResetPolicy::Zero);
            assert_eq!(traces.len(), 2 * 2); // (rounds-1) pairs x k layers
            assert!(traces.iter().all(|t| t.norms.len() == m - 1));
            assert!(traces
                .iter()
                .all(|t| t.norms.iter().all(|d| *d >= 0.0)));
        }
    }

    #[test]
    fn identical_shifted_records_give_zero_trace() {
        // Build two synthetic rounds where round 2's states are round 1's
        // shifted by one position: the trace must be exactly zero.
        let mk_state = |v: f64| LayerState {
            h: vec![v, -v],
            c: None,
        };
        let round1 = StateRecord {
            layers: vec![(0..6).map(|i| mk_state(i as f64)).collect()],
        };
        let round2 = StateRecord {
            layers: vec![(0..6).map(|i| mk_state((i + 1) as f64)).collect()],
        };
        let traces = delta_traces_from_records(&[round1, round2], false);
        assert_eq!(traces.len(), 1);
        assert!(traces[0].norms.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn synthetic_exponential_decay_is_recovered() {
        let trace = DeltaTrace {
            layer: 0,
            round: 1,
            norms: (1..=60).map(|i| (-0.2 * i as f64).exp()).collect(),
        };
        let fit = fit_decay(&trace, 1e-12).unwrap();
        assert!((fit.slope + 0.2).abs() < 1e-6, "slope {}", fit.slope);
        assert!(fit.r_squared > 0.999);
        assert!(fit.floor_index.is_none());
    }

    #[test]
    fn constant_trace_has_zero_slope() {
        let trace = DeltaTrace {
            layer: 0,
            round: 1,
            norms: vec![0.5; 20],
        };
        let fit = fit_decay(&trace, 1e-12).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn floor_index_marks_level_off() {
        let mut norms: Vec<f64> = (1..=10).map(|i| (-1.0 * i as f64).exp()).collect();
        norms.extend(vec![1e-15; 5]);
        let trace = DeltaTrace {
            layer: 0,
            round: 1,
            norms,
        };
        let fit = fit_decay(&trace, 1e-12).unwrap();
        assert_eq!(fit.floor_index, Some(11));
        assert!(fit.slope < 0.0);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let trace = DeltaTrace {
            layer: 0,
            round: 1,
            norms: vec![1e-15, 2e-15, 1.0, 0.5],
        };
        match fit_decay(&trace, 1e-12) {
            Err(ChainError::NoDecayRegime { usable }) => assert_eq!(usable, 2),
            other => panic!("expected NoDecayRegime, got {other:?}"),
        }
    }

    #[test]
    fn divergence_of_identical_rollouts_is_zero() {
        let model = model(&[(CellKind::Gru, 4)], 72);
        let x = series(8, 73);
        let a = predict_mw(&model, &x, 5, ResetPolicy::Zero, false);
        let b = predict_mw(&model, &x, 5, ResetPolicy::Zero, false);
        let report = trajectory_divergence(&a, &b);
        assert_eq!(report.max_abs, 0.0);
        assert_eq!(report.mean_abs, 0.0);
    }

    #[test]
    fn single_round_mw_and_ml_coincide() {
        let model = model(&[(CellKind::Basic, 5), (CellKind::Gru, 3)], 74);
        let x = series(10, 75);
        let a = predict_mw(&model, &x, 1, ResetPolicy::Zero, false);
        let b = predict_ml(&model, &x, 1, false);
        let report = trajectory_divergence(&a, &b);
        assert_eq!(report.max_abs, 0.0);
    }

    #[test]
    fn report_invariants_hold_on_untrained_chains() {
        let model = model(&[(CellKind::Basic, 6), (CellKind::Lstm, 4)], 76);
        let x = series(12, 77);
        let (_, report) = ew_ml_equivalence(&model, &x, 6, 0.05);
        assert!(report.max_abs >= report.mean_abs);
        assert!(report.mean_abs >= 0.0);
        assert_eq!(report.per_step.len(), 6);
    }

    #[test]
    fn fixed_point_toy_has_exactly_zero_divergence() {
        // Scalar basic cell with zero weights keeps its state at zero, and a
        // predictor bias equal to the constant signal reproduces it exactly,
        // so the substitution of predictions for ground truth is exact.
        let cell = CellParams::zeros(CellKind::Basic, 1, 1);
        let mut predictor = PredictorParams::zeros(1, 1);
        let level = 0.6;
        predictor.bias[0] = level;
        let model = ChainModel::new(vec![cell], predictor).unwrap();
        let x = vec![vec![level]; 10];
        let (ok, report) = ew_ml_equivalence(&model, &x, 8, 1e-15);
        assert!(ok);
        assert_eq!(report.max_abs, 0.0);
        // And the prediction error itself is exactly zero.
        let ml = predict_ml(&model, &x, 8, false);
        assert!(ml.predictions.iter().all(|p| p[0] == level));
    }

    #[test]
    #[should_panic(expected = "same number of points")]
    fn divergence_rejects_length_mismatch() {
        let model = model(&[(CellKind::Basic, 3)], 78);
        let x = series(6, 79);
        let a = predict_ml(&model, &x, 3, false);
        let b = predict_ml(&model, &x, 4, false);
        trajectory_divergence(&a, &b);
    }

    #[test]
    fn trained_single_layer_shifted_difference_is_negligible() {
        // After training, the last shifted difference is tiny next to the
        // state norm itself, which is what licenses the memoryless rollout.
        use crate::dataset::{generate_dataset, noisy_series, DatasetSpec, Waveform};
        use crate::train::{train, TrainConfig};

        let spec = DatasetSpec {
            waveform: Waveform::Sine,
            noise_amplitude: 0.15,
            dt: 0.01,
            length_min: 5,
            length_max: 90,
            segment_count: 300,
            seed: 81,
            clean_targets: false,
        };
        let segments = generate_dataset(&spec).unwrap();
        let cfg = TrainConfig {
            epochs: 12,
            seed: 82,
            ..TrainConfig::default()
        };
        let init = model(&[(CellKind::Basic, 10)], 83);
        let (trained, _) = train(init, segments, &cfg).unwrap();

        let mut rng = crate::math::Rng::new(84);
        let window: Vec<Vec<f64>> = noisy_series(Waveform::Sine, 0.4, 0.01, 75, 0.15, &mut rng)
            .into_iter()
            .map(|v| vec![v])
            .collect();
        let rollout = predict_mw(&trained, &window, 3, ResetPolicy::Zero, true);
        let records = rollout.state_records.as_ref().unwrap();
        let traces = delta_traces_from_records(records, false);
        let trace = traces.iter().find(|t| t.round == 2).unwrap();
        let last_delta = *trace.norms.last().unwrap();
        let state_norm = records[1].layers[0].last().unwrap().norm(false);
        let ratio = last_delta / state_norm;
        assert!(ratio < 0.05, "delta_(m-1)/||s_m|| = {ratio}");
    }
}
