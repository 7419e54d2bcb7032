//! CSV emission and parsing for every file the CLI produces. Floats are
//! written with Rust's shortest-round-trip formatting, so re-reading a file
//! recovers the exact values and identical runs produce identical bytes.
//! The optional `# generated ...` header is the only volatile line.

use crate::dataset::Segment;
use crate::diagnostics::{DecayFit, DeltaTrace, DivergenceReport};
use crate::error::ChainError;
use crate::train::TrainHistory;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn header(out: &mut String, description: &str, timestamp: bool) {
    let _ = writeln!(out, "# chaincast {description}");
    if timestamp {
        let _ = writeln!(out, "# generated {}", chrono::Utc::now().to_rfc3339());
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ChainError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| ChainError::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| ChainError::io(path, e))
}

/// One segment per record: length, the m input values, then the target.
pub fn write_dataset(path: &Path, segments: &[Segment], timestamp: bool) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "dataset", timestamp);
    let _ = writeln!(out, "# schema: length,x_1..x_m,target");
    for seg in segments {
        let _ = write!(out, "{}", seg.len());
        for x in &seg.inputs {
            let _ = write!(out, ",{}", x[0]);
        }
        let _ = writeln!(out, ",{}", seg.target[0]);
    }
    write_file(path, &out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Segment>, ChainError> {
    let text = fs::read_to_string(path).map_err(|e| ChainError::io(path, e))?;
    let mut segments = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |detail: String| ChainError::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            detail,
        };
        let mut fields = line.split(',');
        let len: usize = fields
            .next()
            .ok_or_else(|| bad("missing length field".into()))?
            .parse()
            .map_err(|e| bad(format!("bad length field: {e}")))?;
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("bad value: {e}")))?;
        if values.len() != len + 1 {
            return Err(bad(format!(
                "expected {} values plus target, found {}",
                len,
                values.len()
            )));
        }
        segments.push(Segment {
            inputs: values[..len].iter().map(|v| vec![*v]).collect(),
            target: vec![values[len]],
        });
    }
    if segments.is_empty() {
        return Err(ChainError::EmptyDataset);
    }
    Ok(segments)
}

/// Plain series file: one value per line, `#` comments allowed.
pub fn read_series(path: &Path) -> Result<Vec<f64>, ChainError> {
    let text = fs::read_to_string(path).map_err(|e| ChainError::io(path, e))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|e| ChainError::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            detail: format!("bad value: {e}"),
        })?);
    }
    if values.is_empty() {
        return Err(ChainError::MalformedRecord {
            path: path.to_path_buf(),
            line: 0,
            detail: "no values in series file".into(),
        });
    }
    Ok(values)
}

pub fn write_history(path: &Path, history: &TrainHistory, timestamp: bool) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "training history", timestamp);
    let _ = writeln!(out, "epoch,train_mse,val_mse");
    for row in history {
        let _ = writeln!(out, "{},{},{}", row.epoch, row.train_mse, row.val_mse);
    }
    write_file(path, &out)
}

/// Prediction trajectory with the measured transformation count as footer.
/// The truth column is left empty when no ground truth is known.
pub fn write_predictions(
    path: &Path,
    predictions: &[Vec<f64>],
    truth: Option<&[f64]>,
    transform_count: u64,
    timestamp: bool,
) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "predictions", timestamp);
    let _ = writeln!(out, "step,predicted,truth");
    for (j, pred) in predictions.iter().enumerate() {
        let _ = write!(out, "{},{}", j + 1, pred[0]);
        match truth.and_then(|t| t.get(j)) {
            Some(t) => {
                let _ = writeln!(out, ",{t}");
            }
            None => {
                let _ = writeln!(out, ",");
            }
        }
    }
    let _ = writeln!(out, "# transform_count={transform_count}");
    write_file(path, &out)
}

/// Per-round state record emitted next to predictions: one row per
/// (round, step) with the hidden state of every layer flattened after the
/// leading indices.
pub fn write_state_record(
    path: &Path,
    records: &[crate::chain::StateRecord],
    timestamp: bool,
) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "state records", timestamp);
    let _ = writeln!(out, "round,step,layer,state");
    for (round, rec) in records.iter().enumerate() {
        for (layer, states) in rec.layers.iter().enumerate() {
            for (step, state) in states.iter().enumerate() {
                let _ = write!(out, "{},{},{},", round + 1, step + 1, layer + 1);
                let joined: Vec<String> = state.h.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", joined.join(";"));
            }
        }
    }
    write_file(path, &out)
}

pub struct DivergenceRow {
    pub m: usize,
    pub algo_a: String,
    pub algo_b: String,
    pub max_abs: f64,
    pub mean_abs: f64,
}

pub fn write_divergence_summary(
    path: &Path,
    rows: &[DivergenceRow],
    timestamp: bool,
) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "trajectory divergence", timestamp);
    let _ = writeln!(out, "m,algo_a,algo_b,max_abs,mean_abs");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.m, row.algo_a, row.algo_b, row.max_abs, row.mean_abs
        );
    }
    write_file(path, &out)
}

/// Plot-ready x/y columns for one algorithm pair at one window length.
pub fn write_divergence_series(
    path: &Path,
    a_name: &str,
    a: &[Vec<f64>],
    b_name: &str,
    b: &[Vec<f64>],
    report: &DivergenceReport,
    timestamp: bool,
) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "divergence series", timestamp);
    let _ = writeln!(out, "step,{a_name},{b_name},abs_diff");
    for (j, ((pa, pb), d)) in a.iter().zip(b).zip(&report.per_step).enumerate() {
        let _ = writeln!(out, "{},{},{},{}", j + 1, pa[0], pb[0], d);
    }
    write_file(path, &out)
}

/// Shifted-difference traces of one round pair, one column per layer.
pub fn write_delta_traces(
    path: &Path,
    traces: &[&DeltaTrace],
    with_log: bool,
    timestamp: bool,
) -> Result<(), ChainError> {
    assert!(!traces.is_empty(), "need at least one trace");
    let len = traces[0].norms.len();
    assert!(
        traces.iter().all(|t| t.norms.len() == len),
        "traces must share the window length"
    );
    let mut out = String::new();
    header(&mut out, "shifted-difference traces", timestamp);
    let _ = write!(out, "i");
    for t in traces {
        let _ = write!(out, ",delta_r{}", t.layer + 1);
    }
    if with_log {
        for t in traces {
            let _ = write!(out, ",ln_delta_r{}", t.layer + 1);
        }
    }
    let _ = writeln!(out);
    for i in 0..len {
        let _ = write!(out, "{}", i + 1);
        for t in traces {
            let _ = write!(out, ",{}", t.norms[i]);
        }
        if with_log {
            for t in traces {
                let _ = write!(out, ",{}", t.norms[i].ln());
            }
        }
        let _ = writeln!(out);
    }
    write_file(path, &out)
}

pub fn write_decay_fits(
    path: &Path,
    fits: &[(usize, Result<DecayFit, ChainError>)],
    timestamp: bool,
) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "decay fits", timestamp);
    let _ = writeln!(out, "layer,slope,intercept,r_squared,floor_index");
    for (layer, fit) in fits {
        match fit {
            Ok(fit) => {
                let floor = fit
                    .floor_index
                    .map(|i| i.to_string())
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    layer + 1,
                    fit.slope,
                    fit.intercept,
                    fit.r_squared,
                    floor
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{},,,,", layer + 1);
            }
        }
    }
    write_file(path, &out)
}

pub struct BenchRow {
    pub k: u64,
    pub m: u64,
    pub p: u64,
    pub n_mw: u64,
    pub n_ew: u64,
    pub n_ml: u64,
    pub gamma: f64,
    pub wall_ms: Option<(f64, f64, f64)>,
}

pub fn write_bench(path: &Path, rows: &[BenchRow], timestamp: bool) -> Result<(), ChainError> {
    let mut out = String::new();
    header(&mut out, "transformation cost model", timestamp);
    let _ = writeln!(out, "k,m,p,n_mw,n_ew,n_ml,gamma,wall_mw_ms,wall_ew_ms,wall_ml_ms");
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            row.k, row.m, row.p, row.n_mw, row.n_ew, row.n_ml, row.gamma
        );
        match row.wall_ms {
            Some((mw, ew, ml)) => {
                let _ = writeln!(out, ",{mw},{ew},{ml}");
            }
            None => {
                let _ = writeln!(out, ",,,");
            }
        }
    }
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetSpec, Waveform};

    fn spec() -> DatasetSpec {
        DatasetSpec {
            waveform: Waveform::Sine,
            noise_amplitude: 0.15,
            dt: 0.01,
            length_min: 5,
            length_max: 12,
            segment_count: 25,
            seed: 5,
            clean_targets: false,
        }
    }

    #[test]
    fn dataset_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let segments = generate_dataset(&spec()).unwrap();
        write_dataset(&path, &segments, false).unwrap();
        let loaded = read_dataset(&path).unwrap();
        assert_eq!(loaded, segments);
        // Re-writing yields identical bytes.
        let first = std::fs::read(&path).unwrap();
        write_dataset(&path, &loaded, false).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn malformed_dataset_lines_are_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "# comment\n3,0.1,0.2\n").unwrap();
        match read_dataset(&path) {
            Err(ChainError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn series_file_parses_values_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.txt");
        std::fs::write(&path, "# window\n0.25\n-0.5\n\n1.0\n").unwrap();
        assert_eq!(read_series(&path).unwrap(), vec![0.25, -0.5, 1.0]);
    }

    #[test]
    fn timestamp_header_is_opt_in() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        write_history(&path, &Vec::new(), false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("generated"));
        write_history(&path, &Vec::new(), true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("# generated "));
    }

    #[test]
    fn predictions_footer_carries_transform_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.csv");
        let preds = vec![vec![0.5], vec![0.25]];
        write_predictions(&path, &preds, Some(&[0.51]), 522, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("step,predicted,truth"));
        assert!(text.contains("1,0.5,0.51"));
        assert!(text.contains("2,0.25,"));
        assert!(text.trim_end().ends_with("# transform_count=522"));
    }
}
