//! Experiment configuration: TOML file format, built-in presets, and the
//! `CHAINCAST_SEED` environment override.

use crate::cell::CellKind;
use crate::dataset::{DatasetSpec, Waveform};
use crate::error::ChainError;
use crate::rollout::ResetPolicy;
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SEED_ENV_VAR: &str = "CHAINCAST_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mw,
    Ew,
    Ml,
}

impl Algorithm {
    pub fn token(self) -> &'static str {
        match self {
            Algorithm::Mw => "mw",
            Algorithm::Ew => "ew",
            Algorithm::Ml => "ml",
        }
    }

    pub fn from_token(s: &str) -> Option<Algorithm> {
        match s {
            "mw" => Some(Algorithm::Mw),
            "ew" => Some(Algorithm::Ew),
            "ml" => Some(Algorithm::Ml),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: CellKind,
    pub state_dim: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub m: usize,
    pub p: usize,
    pub algorithm: Algorithm,
    pub policy: ResetPolicy,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub architecture: Vec<LayerSpec>,
    pub train: TrainConfig,
    pub rollout: RolloutConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        self.dataset.validate()?;
        self.train.validate()?;
        if self.architecture.is_empty() {
            return Err(ChainError::InvalidConfig("architecture must be nonempty".into()));
        }
        if self.architecture.iter().any(|l| l.state_dim == 0) {
            return Err(ChainError::InvalidConfig("layer state dims must be positive".into()));
        }
        if self.rollout.m == 0 || self.rollout.p == 0 {
            return Err(ChainError::InvalidConfig("rollout m and p must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig, ChainError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ChainError::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| ChainError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.apply_env_seed()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `CHAINCAST_SEED`, when set, overrides both the dataset seed and the
    /// training seed.
    pub fn apply_env_seed(&mut self) -> Result<(), ChainError> {
        if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
            let seed: u64 = raw.parse().map_err(|_| {
                ChainError::InvalidConfig(format!("{SEED_ENV_VAR} must be an integer, got {raw:?}"))
            })?;
            self.dataset.seed = seed;
            self.train.seed = seed;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Built-in experiment bundles. The k=3 chain mirrors the trained setup
    /// of basic(10) -> lstm(15) -> gru(8); the deeper presets split a similar
    /// neuron budget over more, smaller layers.
    pub fn preset(name: &str) -> Option<ExperimentConfig> {
        let architecture: Vec<LayerSpec> = match name {
            "paper-k3" => vec![
                LayerSpec { kind: CellKind::Basic, state_dim: 10 },
                LayerSpec { kind: CellKind::Lstm, state_dim: 15 },
                LayerSpec { kind: CellKind::Gru, state_dim: 8 },
            ],
            "paper-k5" => vec![
                LayerSpec { kind: CellKind::Basic, state_dim: 8 },
                LayerSpec { kind: CellKind::Lstm, state_dim: 8 },
                LayerSpec { kind: CellKind::Gru, state_dim: 7 },
                LayerSpec { kind: CellKind::Lstm, state_dim: 6 },
                LayerSpec { kind: CellKind::Gru, state_dim: 4 },
            ],
            "paper-k7" => vec![
                LayerSpec { kind: CellKind::Basic, state_dim: 6 },
                LayerSpec { kind: CellKind::Lstm, state_dim: 6 },
                LayerSpec { kind: CellKind::Gru, state_dim: 5 },
                LayerSpec { kind: CellKind::Lstm, state_dim: 5 },
                LayerSpec { kind: CellKind::Gru, state_dim: 4 },
                LayerSpec { kind: CellKind::Lstm, state_dim: 4 },
                LayerSpec { kind: CellKind::Gru, state_dim: 3 },
            ],
            _ => return None,
        };
        Some(ExperimentConfig {
            output_dir: default_output_dir(),
            dataset: DatasetSpec {
                waveform: Waveform::Sine,
                noise_amplitude: 0.15,
                dt: 0.01,
                length_min: 5,
                length_max: 150,
                segment_count: 12000,
                seed: 42,
                clean_targets: false,
            },
            architecture,
            train: TrainConfig {
                epochs: 50,
                seed: 7,
                ..TrainConfig::default()
            },
            rollout: RolloutConfig {
                m: 75,
                p: 75,
                algorithm: Algorithm::Ml,
                policy: ResetPolicy::Zero,
            },
        })
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["paper-k3", "paper-k5", "paper-k7"]
    }

    pub fn arch_pairs(&self) -> Vec<(CellKind, usize)> {
        self.architecture
            .iter()
            .map(|l| (l.kind, l.state_dim))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_exist_and_validate() {
        for name in ExperimentConfig::preset_names() {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(ExperimentConfig::preset("nope").is_none());
        let k3 = ExperimentConfig::preset("paper-k3").unwrap();
        assert_eq!(k3.architecture.len(), 3);
        assert_eq!(k3.dataset.segment_count, 12000);
        assert_eq!(k3.train.epochs, 50);
        assert_eq!(k3.dataset.noise_amplitude, 0.15);
        assert_eq!(
            ExperimentConfig::preset("paper-k5").unwrap().architecture.len(),
            5
        );
        assert_eq!(
            ExperimentConfig::preset("paper-k7").unwrap().architecture.len(),
            7
        );
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::preset("paper-k3").unwrap();
        let text = cfg.to_toml();
        let parsed: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.dataset.seed, cfg.dataset.seed);
        assert_eq!(parsed.architecture.len(), 3);
        assert_eq!(parsed.rollout.m, 75);
        assert_eq!(parsed.train.grad_clip, Some(5.0));
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let text = r#"
            [dataset]
            waveform = "triangle"
            noise_amplitude = 0.0
            dt = 0.01
            length_min = 5
            length_max = 20
            segment_count = 100
            seed = 3

            [[architecture]]
            kind = "basic"
            state_dim = 6

            [train]
            epochs = 2
            learning_rate = 1e-3
            batch_size = 8
            validation_fraction = 0.2
            seed = 4

            [rollout]
            m = 10
            p = 5
            algorithm = "ml"
            policy = "zero"
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.train.beta1, 0.9);
        assert_eq!(cfg.train.grad_clip, Some(5.0));
        assert!(!cfg.dataset.clean_targets);
        assert_eq!(cfg.dataset.waveform, Waveform::Triangle);
    }
}
