//! Command-line surface: `chaincast {gen-data|train|predict|compare|delta|bench}`.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 numeric failure
//! (training divergence, cost-model mismatch).

use crate::cell::InitScheme;
use crate::chain::ChainModel;
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{Algorithm, ExperimentConfig};
use crate::dataset::{generate_dataset, noisy_series, waveform_value, Waveform};
use crate::diagnostics::{delta_traces_from_records, fit_decay, trajectory_divergence};
use crate::error::ChainError;
use crate::math::Rng;
use crate::report::{
    self, write_bench, write_dataset, write_decay_fits, write_delta_traces,
    write_divergence_series, write_divergence_summary, write_history, write_predictions,
    write_state_record, BenchRow, DivergenceRow,
};
use crate::rollout::{
    count_ew, count_ml, count_mw, predict_ew, predict_ml, predict_mw, speed_gain, ResetPolicy,
    RolloutResult,
};
use crate::train::train_with_progress;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(
    name = "chaincast",
    version,
    about = "Recurrent-network-chain forecasting with moving-window, expanding-window, and memoryless rollouts"
)]
pub struct Cli {
    /// Omit the volatile "# generated ..." header from emitted files.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Source of the input window for prediction-style commands: either a plain
/// series file or a freshly synthesized waveform.
#[derive(Args, Debug, Clone)]
pub struct SignalArgs {
    /// File with one input value per line; overrides waveform synthesis.
    #[arg(long)]
    pub input_file: Option<PathBuf>,

    /// Waveform to synthesize: sine or triangle.
    #[arg(long, default_value = "sine")]
    pub waveform: String,

    /// Start time of the synthesized window.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,

    /// Time step between samples.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,

    /// White-noise amplitude added to the synthesized window.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    /// Seed for the window noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

struct WindowData {
    /// m scalar inputs wrapped as 1-vectors.
    window: Vec<Vec<f64>>,
    /// Ground truth for the p steps after the window, when known. Synthesized
    /// truth is the clean waveform.
    truth: Option<Vec<f64>>,
}

impl SignalArgs {
    fn make_window(&self, m: usize, p: usize) -> Result<WindowData, ChainError> {
        if let Some(path) = &self.input_file {
            let values = report::read_series(path)?;
            if values.len() < m {
                return Err(ChainError::InvalidConfig(format!(
                    "{} holds {} values, need at least m={m}",
                    path.display(),
                    values.len()
                )));
            }
            let window = values[..m].iter().map(|v| vec![*v]).collect();
            let truth = (values.len() >= m + p).then(|| values[m..m + p].to_vec());
            return Ok(WindowData { window, truth });
        }
        let waveform = Waveform::from_token(&self.waveform).ok_or_else(|| {
            ChainError::InvalidConfig(format!("unknown waveform {:?}", self.waveform))
        })?;
        if !(self.dt > 0.0) {
            return Err(ChainError::InvalidConfig("dt must be positive".into()));
        }
        let mut rng = Rng::new(self.seed).substream(0);
        let window = noisy_series(waveform, self.t0, self.dt, m, self.noise, &mut rng)
            .into_iter()
            .map(|v| vec![v])
            .collect();
        let truth = (0..p)
            .map(|j| waveform_value(waveform, self.t0 + (m + j) as f64 * self.dt))
            .collect();
        Ok(WindowData {
            window,
            truth: Some(truth),
        })
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic waveform dataset file.
    GenData {
        /// Built-in experiment preset (paper-k3, paper-k5, paper-k7).
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Experiment config file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        waveform: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        m_min: Option<usize>,
        #[arg(long)]
        m_max: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use clean waveform targets instead of noisy ones.
        #[arg(long)]
        clean_targets: bool,
        /// Output file (default: <output_dir>/dataset.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Train a chain on a dataset file; writes a checkpoint and a loss history CSV.
    Train {
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Use only the first N segments (reduced budget).
        #[arg(long)]
        segments: Option<usize>,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint output (default: <output_dir>/model.ckpt).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Loss history CSV (default: <output_dir>/history.csv).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },

    /// Roll a trained chain forward and emit a predictions CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Rollout algorithm: mw, ew, or ml.
        #[arg(long)]
        algo: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: usize,
        /// Moving-window reset policy: zero or inherit.
        #[arg(long, default_value = "zero")]
        policy: String,
        /// Expanding-window length cap.
        #[arg(long, default_value_t = 150)]
        max_len: usize,
        /// Also write per-round state records to this file.
        #[arg(long)]
        record: Option<PathBuf>,
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
    },

    /// Compare rollout algorithms across window lengths.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated window lengths, e.g. 25,75.
        #[arg(long)]
        m_list: String,
        #[arg(long)]
        p: usize,
        /// Comma-separated algorithms to compare pairwise (default mw,ml).
        #[arg(long, default_value = "mw,ml")]
        algos: String,
        #[arg(long, default_value = "zero")]
        policy: String,
        #[arg(long, default_value_t = 500)]
        max_len: usize,
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },

    /// Emit shifted-difference traces and per-layer decay fits.
    Delta {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        m: usize,
        /// Number of moving-window rounds to run (>= 2).
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Round pair (j, j+1) to tabulate.
        #[arg(long, default_value_t = 2)]
        pair: usize,
        #[arg(long, default_value = "zero")]
        policy: String,
        /// Append natural-log columns.
        #[arg(long)]
        log: bool,
        /// Include the LSTM cell memory in the compared state vectors.
        #[arg(long)]
        include_cell: bool,
        /// Noise floor for the decay fit.
        #[arg(long, default_value_t = 1e-12)]
        floor_eps: f64,
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },

    /// Tabulate the transformation cost model, optionally with measured
    /// wall-clock times on a checkpoint.
    Bench {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        p: u64,
        /// Comma-separated chain depths for the closed forms.
        #[arg(long, default_value = "1,3,5")]
        k_list: String,
        /// Measure wall-clock times of the three algorithms on this model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

fn resolve_config(
    preset: &Option<String>,
    config: &Option<PathBuf>,
) -> Result<ExperimentConfig, ChainError> {
    let mut cfg = match (preset, config) {
        (Some(name), None) => ExperimentConfig::preset(name).ok_or_else(|| {
            ChainError::InvalidConfig(format!(
                "unknown preset {name:?}; available: {}",
                ExperimentConfig::preset_names().join(", ")
            ))
        })?,
        (None, Some(path)) => ExperimentConfig::load(path)?,
        (None, None) => {
            return Err(ChainError::InvalidConfig(
                "either --preset or --config is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    cfg.apply_env_seed()?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_policy(s: &str) -> Result<ResetPolicy, ChainError> {
    ResetPolicy::from_token(s)
        .ok_or_else(|| ChainError::InvalidConfig(format!("unknown reset policy {s:?}")))
}

fn parse_algo(s: &str) -> Result<Algorithm, ChainError> {
    Algorithm::from_token(s)
        .ok_or_else(|| ChainError::InvalidConfig(format!("unknown algorithm {s:?}")))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, ChainError> {
    s.split(',')
        .map(|part| part.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| ChainError::InvalidConfig(format!("malformed {what} list {s:?}")))
}

fn load_scalar_model(path: &PathBuf) -> Result<Checkpoint, ChainError> {
    let ckpt = crate::checkpoint::load(path)?;
    if ckpt.model.input_dim() != 1 {
        return Err(ChainError::InvalidConfig(format!(
            "checkpoint expects {}-dimensional inputs; this command synthesizes scalar windows",
            ckpt.model.input_dim()
        )));
    }
    Ok(ckpt)
}

fn run_algorithm(
    model: &ChainModel,
    algo: Algorithm,
    window: &[Vec<f64>],
    p: usize,
    policy: ResetPolicy,
    max_len: usize,
    record: bool,
) -> Result<RolloutResult, ChainError> {
    let m = window.len();
    if algo == Algorithm::Ew && m + p - 1 > max_len {
        return Err(ChainError::InvalidConfig(format!(
            "expanding window would grow to {} elements, exceeding --max-len {max_len}",
            m + p - 1
        )));
    }
    Ok(match algo {
        Algorithm::Mw => predict_mw(model, window, p, policy, record),
        Algorithm::Ew => predict_ew(model, window, p, max_len, record),
        Algorithm::Ml => predict_ml(model, window, p, record),
    })
}

pub fn run(cli: Cli) -> Result<(), ChainError> {
    let timestamp = !cli.no_timestamp;
    match cli.command {
        Command::GenData {
            preset,
            config,
            waveform,
            noise,
            dt,
            m_min,
            m_max,
            count,
            seed,
            clean_targets,
            out,
        } => {
            let mut cfg = if preset.is_some() || config.is_some() {
                resolve_config(&preset, &config)?
            } else {
                let mut cfg = ExperimentConfig::preset("paper-k3").expect("built-in preset");
                cfg.apply_env_seed()?;
                cfg
            };
            if let Some(w) = waveform {
                cfg.dataset.waveform = Waveform::from_token(&w).ok_or_else(|| {
                    ChainError::InvalidConfig(format!("unknown waveform {w:?}"))
                })?;
            }
            if let Some(a) = noise {
                cfg.dataset.noise_amplitude = a;
            }
            if let Some(v) = dt {
                cfg.dataset.dt = v;
            }
            if let Some(v) = m_min {
                cfg.dataset.length_min = v;
            }
            if let Some(v) = m_max {
                cfg.dataset.length_max = v;
            }
            if let Some(v) = count {
                cfg.dataset.segment_count = v;
            }
            if let Some(v) = seed {
                cfg.dataset.seed = v;
            }
            if clean_targets {
                cfg.dataset.clean_targets = true;
            }
            let segments = generate_dataset(&cfg.dataset)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("dataset.csv"));
            write_dataset(&out, &segments, timestamp)?;
            eprintln!("wrote {} segments to {}", segments.len(), out.display());
            Ok(())
        }

        Command::Train {
            preset,
            config,
            data,
            segments,
            epochs,
            out,
            history,
            quiet,
        } => {
            let mut cfg = resolve_config(&preset, &config)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let mut dataset = report::read_dataset(&data)?;
            if let Some(n) = segments {
                if n == 0 || n > dataset.len() {
                    return Err(ChainError::InvalidConfig(format!(
                        "--segments {n} out of range (dataset holds {})",
                        dataset.len()
                    )));
                }
                dataset.truncate(n);
            }
            let model = ChainModel::from_arch(
                1,
                &cfg.arch_pairs(),
                &mut Rng::new(cfg.train.seed),
                InitScheme::Uniform,
            )?;
            let epochs_total = cfg.train.epochs;
            let (trained, hist) = train_with_progress(model, dataset, &cfg.train, |stats| {
                if !quiet {
                    eprintln!(
                        "epoch {}/{}: train_mse {:.6} val_mse {:.6}",
                        stats.epoch, epochs_total, stats.train_mse, stats.val_mse
                    );
                }
            })?;
            let meta = CheckpointMeta {
                dataset_seed: cfg.dataset.seed,
                train_seed: cfg.train.seed,
                epochs_completed: hist.len() as u32,
                final_train_loss: hist.last().map(|s| s.train_mse).unwrap_or(0.0),
                final_val_loss: hist.last().map(|s| s.val_mse).unwrap_or(0.0),
            };
            let out = out.unwrap_or_else(|| cfg.output_dir.join("model.ckpt"));
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| ChainError::io(parent, e))?;
                }
            }
            crate::checkpoint::save(&out, &Checkpoint { model: trained, meta })?;
            let history_path = history.unwrap_or_else(|| cfg.output_dir.join("history.csv"));
            write_history(&history_path, &hist, timestamp)?;
            eprintln!(
                "wrote checkpoint {} and history {}",
                out.display(),
                history_path.display()
            );
            Ok(())
        }

        Command::Predict {
            checkpoint,
            algo,
            m,
            p,
            policy,
            max_len,
            record,
            signal,
            out,
        } => {
            if m == 0 || p == 0 {
                return Err(ChainError::InvalidConfig("m and p must be positive".into()));
            }
            let algo = parse_algo(&algo)?;
            let policy = parse_policy(&policy)?;
            let ckpt = load_scalar_model(&checkpoint)?;
            let data = signal.make_window(m, p)?;
            let result = run_algorithm(
                &ckpt.model,
                algo,
                &data.window,
                p,
                policy,
                max_len,
                record.is_some(),
            )?;
            write_predictions(
                &out,
                &result.predictions,
                data.truth.as_deref(),
                result.transform_count,
                timestamp,
            )?;
            if let Some(record_path) = record {
                let records = result.state_records.as_deref().unwrap_or(&[]);
                write_state_record(&record_path, records, timestamp)?;
            }
            eprintln!(
                "{} rollout: {} predictions, {} transformations -> {}",
                algo.token(),
                p,
                result.transform_count,
                out.display()
            );
            Ok(())
        }

        Command::Compare {
            checkpoint,
            m_list,
            p,
            algos,
            policy,
            max_len,
            signal,
            out_dir,
        } => {
            let m_list: Vec<usize> = parse_list(&m_list, "window-length")?;
            if m_list.is_empty() || m_list.contains(&0) {
                return Err(ChainError::InvalidConfig("m-list must hold positive lengths".into()));
            }
            let algo_names: Vec<String> = parse_list(&algos, "algorithm")?;
            let algos: Vec<Algorithm> = algo_names
                .iter()
                .map(|s| parse_algo(s))
                .collect::<Result<_, _>>()?;
            if algos.len() < 2 {
                return Err(ChainError::InvalidConfig(
                    "need at least two algorithms to compare".into(),
                ));
            }
            let policy = parse_policy(&policy)?;
            let ckpt = load_scalar_model(&checkpoint)?;

            // One master window; shorter windows are suffixes so every
            // comparison predicts the same continuation.
            let max_m = *m_list.iter().max().unwrap();
            let master = signal.make_window(max_m, p)?;
            let mut rows = Vec::new();
            for &m in &m_list {
                let window = &master.window[max_m - m..];
                let mut results = Vec::new();
                for &algo in &algos {
                    results.push((
                        algo,
                        run_algorithm(&ckpt.model, algo, window, p, policy, max_len, false)?,
                    ));
                }
                for i in 0..results.len() {
                    for j in i + 1..results.len() {
                        let (algo_a, res_a) = &results[i];
                        let (algo_b, res_b) = &results[j];
                        let report = trajectory_divergence(res_a, res_b);
                        let series_path = out_dir.join(format!(
                            "divergence_m{m}_{}_{}.csv",
                            algo_a.token(),
                            algo_b.token()
                        ));
                        write_divergence_series(
                            &series_path,
                            algo_a.token(),
                            &res_a.predictions,
                            algo_b.token(),
                            &res_b.predictions,
                            &report,
                            timestamp,
                        )?;
                        rows.push(DivergenceRow {
                            m,
                            algo_a: algo_a.token().into(),
                            algo_b: algo_b.token().into(),
                            max_abs: report.max_abs,
                            mean_abs: report.mean_abs,
                        });
                    }
                }
            }
            let summary = out_dir.join("compare.csv");
            write_divergence_summary(&summary, &rows, timestamp)?;
            eprintln!("wrote {} divergence rows to {}", rows.len(), summary.display());
            Ok(())
        }

        Command::Delta {
            checkpoint,
            m,
            rounds,
            pair,
            policy,
            log,
            include_cell,
            floor_eps,
            signal,
            out_dir,
        } => {
            if rounds < 2 {
                return Err(ChainError::InvalidConfig(
                    "shifted differences need at least 2 rounds".into(),
                ));
            }
            if pair == 0 || pair + 1 > rounds {
                return Err(ChainError::InvalidConfig(format!(
                    "round pair ({pair}, {}) needs --rounds >= {}",
                    pair + 1,
                    pair + 1
                )));
            }
            if m < 2 {
                return Err(ChainError::InvalidConfig("need m >= 2 for a trace".into()));
            }
            let policy = parse_policy(&policy)?;
            let ckpt = load_scalar_model(&checkpoint)?;
            let data = signal.make_window(m, 0)?;
            let result = predict_mw(&ckpt.model, &data.window, rounds, policy, true);
            let traces = delta_traces_from_records(
                result.state_records.as_ref().expect("recording enabled"),
                include_cell,
            );
            let selected: Vec<&crate::diagnostics::DeltaTrace> =
                traces.iter().filter(|t| t.round == pair).collect();
            let trace_path = out_dir.join("delta_traces.csv");
            write_delta_traces(&trace_path, &selected, log, timestamp)?;
            let fits: Vec<_> = selected
                .iter()
                .map(|t| (t.layer, fit_decay(t, floor_eps)))
                .collect();
            let fits_path = out_dir.join("decay_fits.csv");
            write_decay_fits(&fits_path, &fits, timestamp)?;
            eprintln!(
                "wrote {} layer traces to {} and fits to {}",
                selected.len(),
                trace_path.display(),
                fits_path.display()
            );
            Ok(())
        }

        Command::Bench {
            m,
            p,
            k_list,
            checkpoint,
            signal,
            out,
        } => {
            if m == 0 || p == 0 {
                return Err(ChainError::InvalidConfig("m and p must be positive".into()));
            }
            let k_list: Vec<u64> = parse_list(&k_list, "depth")?;
            if k_list.is_empty() || k_list.contains(&0) {
                return Err(ChainError::InvalidConfig("k-list must hold positive depths".into()));
            }
            let measured = match &checkpoint {
                Some(path) => {
                    let ckpt = load_scalar_model(path)?;
                    let data = signal.make_window(m as usize, 0)?;
                    Some((ckpt.model, data.window))
                }
                None => None,
            };
            let mut rows = Vec::new();
            for &k in &k_list {
                let wall_ms = match &measured {
                    Some((model, window)) if model.depth() as u64 == k => {
                        Some(measure_walls(model, window, p as usize, m, k)?)
                    }
                    _ => None,
                };
                rows.push(BenchRow {
                    k,
                    m,
                    p,
                    n_mw: count_mw(m, p, k),
                    n_ew: count_ew(m, p, k),
                    n_ml: count_ml(m, p, k),
                    gamma: speed_gain(m, p, k),
                    wall_ms,
                });
            }
            if let Some((model, _)) = &measured {
                let k = model.depth() as u64;
                if !k_list.contains(&k) {
                    eprintln!(
                        "note: checkpoint has depth {k}, not in --k-list; no wall-clock columns"
                    );
                }
            }
            write_bench(&out, &rows, timestamp)?;
            eprintln!("wrote cost table to {}", out.display());
            Ok(())
        }
    }
}

/// Runs all three algorithms on the window, checks the measured counts
/// against the closed forms, and returns wall-clock milliseconds (best of
/// three runs each).
fn measure_walls(
    model: &ChainModel,
    window: &[Vec<f64>],
    p: usize,
    m: u64,
    k: u64,
) -> Result<(f64, f64, f64), ChainError> {
    let time_best = |f: &dyn Fn() -> u64, expected: u64, context: &str| -> Result<f64, ChainError> {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            let measured = f();
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            if measured != expected {
                return Err(ChainError::CountMismatch {
                    measured,
                    expected,
                    context: context.into(),
                });
            }
            best = best.min(elapsed);
        }
        Ok(best)
    };
    let p_u64 = p as u64;
    let mw = time_best(
        &|| predict_mw(model, window, p, ResetPolicy::Zero, false).transform_count,
        count_mw(m, p_u64, k),
        "moving window",
    )?;
    let ew = time_best(
        &|| predict_ew(model, window, p, window.len() + p, false).transform_count,
        count_ew(m, p_u64, k),
        "expanding window",
    )?;
    let ml = time_best(
        &|| predict_ml(model, window, p, false).transform_count,
        count_ml(m, p_u64, k),
        "memoryless",
    )?;
    Ok((mw, ew, ml))
}
