//! Synthetic waveform dataset generation and deterministic splitting.

use crate::error::ChainError;
use crate::math::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Sine,
    Triangle,
}

impl Waveform {
    pub fn token(self) -> &'static str {
        match self {
            Waveform::Sine => "sine",
            Waveform::Triangle => "triangle",
        }
    }

    pub fn from_token(s: &str) -> Option<Waveform> {
        match s {
            "sine" => Some(Waveform::Sine),
            "triangle" => Some(Waveform::Triangle),
            _ => None,
        }
    }
}

/// Clean waveform value at time t. Both waves have unit amplitude and
/// period 1; the triangle rises through the origin.
pub fn waveform_value(w: Waveform, t: f64) -> f64 {
    match w {
        Waveform::Sine => (2.0 * std::f64::consts::PI * t).sin(),
        Waveform::Triangle => {
            let u = t - t.floor();
            if u < 0.25 {
                4.0 * u
            } else if u < 0.75 {
                2.0 - 4.0 * u
            } else {
                4.0 * u - 4.0
            }
        }
    }
}

fn default_clean_targets() -> bool {
    false
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub waveform: Waveform,
    pub noise_amplitude: f64,
    pub dt: f64,
    pub length_min: usize,
    pub length_max: usize,
    pub segment_count: usize,
    pub seed: u64,
    /// When set, targets are the clean waveform instead of carrying the same
    /// noise process as the inputs (diagnostics hook).
    #[serde(default = "default_clean_targets")]
    pub clean_targets: bool,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.noise_amplitude < 0.0 {
            return Err(ChainError::InvalidConfig(format!(
                "noise amplitude must be nonnegative, got {}",
                self.noise_amplitude
            )));
        }
        if !(self.dt > 0.0) {
            return Err(ChainError::InvalidConfig(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if self.length_min < 5 || self.length_min > self.length_max {
            return Err(ChainError::InvalidConfig(format!(
                "segment length range must satisfy 5 <= min <= max, got [{}, {}]",
                self.length_min, self.length_max
            )));
        }
        if self.segment_count == 0 {
            return Err(ChainError::InvalidConfig("segment count must be positive".into()));
        }
        Ok(())
    }
}

/// One training example: m input vectors (n_0 = 1) and the ground-truth
/// continuation at step m+1.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Draws `segment_count` segments. Each segment derives its own RNG stream
/// from (seed, index), so one segment's values do not depend on how many
/// draws another segment consumed.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Segment>, ChainError> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let mut segments = Vec::with_capacity(spec.segment_count);
    for i in 0..spec.segment_count {
        let mut rng = root.substream(i as u64);
        let t0 = rng.uniform(0.0, 1.0);
        let m = spec.length_min + rng.index(spec.length_max - spec.length_min + 1);
        let mut inputs = Vec::with_capacity(m);
        for step in 0..m {
            let t = t0 + step as f64 * spec.dt;
            let mut v = waveform_value(spec.waveform, t);
            if spec.noise_amplitude > 0.0 {
                v += spec.noise_amplitude * rng.standard_normal();
            }
            inputs.push(vec![v]);
        }
        let mut target = waveform_value(spec.waveform, t0 + m as f64 * spec.dt);
        if spec.noise_amplitude > 0.0 && !spec.clean_targets {
            target += spec.noise_amplitude * rng.standard_normal();
        }
        segments.push(Segment {
            inputs,
            target: vec![target],
        });
    }
    Ok(segments)
}

/// Deterministic shuffled split: the first returned set holds
/// round(fraction * n) segments, the second the rest. Disjoint, exhaustive.
pub fn split_dataset(
    segments: Vec<Segment>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Segment>, Vec<Segment>), ChainError> {
    if segments.is_empty() {
        return Err(ChainError::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ChainError::InvalidConfig(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = segments.len();
    let first_len = ((n as f64) * fraction).round() as usize;
    if first_len == 0 || first_len == n {
        return Err(ChainError::DegenerateSplit { fraction, len: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).substream(u64::MAX).shuffle(&mut order);

    let mut slots: Vec<Option<Segment>> = segments.into_iter().map(Some).collect();
    let mut first = Vec::with_capacity(first_len);
    let mut second = Vec::with_capacity(n - first_len);
    for (pos, idx) in order.into_iter().enumerate() {
        let seg = slots[idx].take().expect("each index visited once");
        if pos < first_len {
            first.push(seg);
        } else {
            second.push(seg);
        }
    }
    Ok((first, second))
}

/// Noisy samples of a waveform starting at `t0`, one value per `dt` step.
/// Used by the CLI to synthesize prediction windows and ground truth.
pub fn noisy_series(
    waveform: Waveform,
    t0: f64,
    dt: f64,
    len: usize,
    noise_amplitude: f64,
    rng: &mut Rng,
) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let mut v = waveform_value(waveform, t0 + i as f64 * dt);
            if noise_amplitude > 0.0 {
                v += noise_amplitude * rng.standard_normal();
            }
            v
        })
        .collect()
}
