use std::path::PathBuf;

/// Errors surfaced through fallible APIs. Shape violations in the math and
/// cell kernels are contract bugs and panic instead.
#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset split with fraction {fraction} would leave an empty side ({len} segments)")]
    DegenerateSplit { fraction: f64, len: usize },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("not enough points above the noise floor to fit a decay regime ({usable} usable, need >= 3)")]
    NoDecayRegime { usable: usize },

    #[error("checkpoint parse error at byte {offset}: {detail}")]
    CheckpointParse { offset: u64, detail: String },

    #[error("unsupported checkpoint format version {found} (this build reads version {supported})")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path} at line {line}: {detail}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("measured transformation count {measured} does not match the closed form {expected} for {context}")]
    CountMismatch {
        measured: u64,
        expected: u64,
        context: String,
    },
}

impl ChainError {
    /// Process exit code class: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ChainError::Divergence { .. }
            | ChainError::CountMismatch { .. }
            | ChainError::NoDecayRegime { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ChainError::Io {
            path: path.into(),
            source,
        }
    }
}
