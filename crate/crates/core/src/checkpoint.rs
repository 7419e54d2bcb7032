//! Self-describing binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "CHAINCKP"
//! format_version   u32
//! layer count k    u32
//! per layer:       u8 kind (0 basic, 1 gru, 2 lstm), u32 n_in, u32 n_r
//! meta:            u64 dataset_seed, u64 train_seed, u32 epochs_completed,
//!                  f64 final_train_loss, f64 final_val_loss
//! per layer, per gate (kind order): w_in row-major f64, w_rec row-major f64,
//!                  bias f64
//! predictor:       weight row-major f64 (n_0 x n_k), bias f64 (n_0)
//! ```
//!
//! The gate order within a layer is the order of `CellParams::gates`:
//! GRU update/reset/candidate, LSTM input/forget/output/candidate.
//! Save -> load -> save reproduces identical bytes.

use crate::cell::{CellKind, CellParams, PredictorParams};
use crate::chain::ChainModel;
use crate::error::ChainError;
use crate::math::Matrix;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"CHAINCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CheckpointMeta {
    pub dataset_seed: u64,
    pub train_seed: u64,
    pub epochs_completed: u32,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ChainModel,
    pub meta: CheckpointMeta,
}

fn kind_tag(kind: CellKind) -> u8 {
    match kind {
        CellKind::Basic => 0,
        CellKind::Gru => 1,
        CellKind::Lstm => 2,
    }
}

fn kind_from_tag(tag: u8) -> Option<CellKind> {
    match tag {
        0 => Some(CellKind::Basic),
        1 => Some(CellKind::Gru),
        2 => Some(CellKind::Lstm),
        _ => None,
    }
}

pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.cells.len() as u32).to_le_bytes());
    for cell in &model.cells {
        out.push(kind_tag(cell.kind));
        out.extend_from_slice(&(cell.n_in as u32).to_le_bytes());
        out.extend_from_slice(&(cell.n_r as u32).to_le_bytes());
    }
    out.extend_from_slice(&ckpt.meta.dataset_seed.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.train_seed.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.epochs_completed.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.final_train_loss.to_le_bytes());
    out.extend_from_slice(&ckpt.meta.final_val_loss.to_le_bytes());
    for value in model.to_flat() {
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ChainError> {
        if self.at + n > self.bytes.len() {
            return Err(ChainError::CheckpointParse {
                offset: self.at as u64,
                detail: format!(
                    "unexpected end of file while reading {what} ({} bytes needed, {} left)",
                    n,
                    self.bytes.len() - self.at
                ),
            });
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ChainError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, ChainError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ChainError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, ChainError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, detail: String) -> ChainError {
        ChainError::CheckpointParse {
            offset: self.at as u64,
            detail,
        }
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, ChainError> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(ChainError::CheckpointParse {
            offset: 0,
            detail: format!("bad magic {magic:02x?}, expected {MAGIC:02x?}"),
        });
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(ChainError::CheckpointVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let k = r.u32("layer count")? as usize;
    if k == 0 {
        return Err(r.err("checkpoint declares zero layers".into()));
    }

    let mut dims = Vec::with_capacity(k);
    for layer in 0..k {
        let tag = r.u8("cell kind")?;
        let kind = kind_from_tag(tag)
            .ok_or_else(|| r.err(format!("unknown cell kind tag {tag} in layer {}", layer + 1)))?;
        let n_in = r.u32("input dim")? as usize;
        let n_r = r.u32("state dim")? as usize;
        if n_in == 0 || n_r == 0 {
            return Err(r.err(format!("layer {} has zero dimension", layer + 1)));
        }
        dims.push((kind, n_in, n_r));
    }
    for layer in 1..k {
        if dims[layer].1 != dims[layer - 1].2 {
            return Err(r.err(format!(
                "layer {} expects input of length {}, layer {} produces {}",
                layer + 1,
                dims[layer].1,
                layer,
                dims[layer - 1].2
            )));
        }
    }

    let meta = CheckpointMeta {
        dataset_seed: r.u64("dataset seed")?,
        train_seed: r.u64("train seed")?,
        epochs_completed: r.u32("epoch count")?,
        final_train_loss: r.f64("final train loss")?,
        final_val_loss: r.f64("final validation loss")?,
    };

    let mut read_block = |len: usize, what: &str| -> Result<Vec<f64>, ChainError> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let v = r.f64(what)?;
            if !v.is_finite() {
                return Err(ChainError::CheckpointParse {
                    offset: (r.at - 8) as u64,
                    detail: format!("non-finite value {v} in {what}"),
                });
            }
            out.push(v);
        }
        Ok(out)
    };

    let mut cells = Vec::with_capacity(k);
    for &(kind, n_in, n_r) in &dims {
        let mut cell = CellParams::zeros(kind, n_in, n_r);
        for gate in cell.gates.iter_mut() {
            gate.w_in = Matrix::from_vec(n_r, n_in, read_block(n_r * n_in, "input weights")?);
            gate.w_rec = Matrix::from_vec(n_r, n_r, read_block(n_r * n_r, "recurrent weights")?);
            gate.bias = read_block(n_r, "bias")?;
        }
        cells.push(cell);
    }
    let n0 = dims[0].1;
    let n_last = dims[k - 1].2;
    let predictor = PredictorParams {
        weight: Matrix::from_vec(n0, n_last, read_block(n0 * n_last, "predictor weights")?),
        bias: read_block(n0, "predictor bias")?,
    };

    if r.at != bytes.len() {
        return Err(ChainError::CheckpointParse {
            offset: r.at as u64,
            detail: format!("{} trailing bytes after parameters", bytes.len() - r.at),
        });
    }

    let model = ChainModel::new(cells, predictor)
        .map_err(|e| ChainError::CheckpointParse {
            offset: 0,
            detail: e.to_string(),
        })?;
    Ok(Checkpoint { model, meta })
}

pub fn save(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), ChainError> {
    let path = path.as_ref();
    fs::write(path, to_bytes(ckpt)).map_err(|e| ChainError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, ChainError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ChainError::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::InitScheme;
    use crate::math::Rng;

    fn sample() -> Checkpoint {
        let model = ChainModel::from_arch(
            1,
            &[(CellKind::Basic, 4), (CellKind::Lstm, 3), (CellKind::Gru, 2)],
            &mut Rng::new(90),
            InitScheme::Uniform,
        )
        .unwrap();
        Checkpoint {
            model,
            meta: CheckpointMeta {
                dataset_seed: 42,
                train_seed: 7,
                epochs_completed: 50,
                final_train_loss: 0.0231,
                final_val_loss: 0.0242,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let bytes = to_bytes(&ckpt);
        let loaded = from_bytes(&bytes).unwrap();
        assert_eq!(loaded.model, ckpt.model);
        assert_eq!(loaded.meta, ckpt.meta);
        // save -> load -> save produces identical bytes
        assert_eq!(to_bytes(&loaded), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample();
        save(&path, &ckpt).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.model, ckpt.model);
        save(&path, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), to_bytes(&ckpt));
    }

    #[test]
    fn truncation_reports_offset_without_partial_model() {
        let bytes = to_bytes(&sample());
        for cut in [3usize, 11, 20, 60, bytes.len() - 9, bytes.len() - 1] {
            match from_bytes(&bytes[..cut]) {
                Err(ChainError::CheckpointParse { offset, detail }) => {
                    assert!(offset <= cut as u64);
                    assert!(detail.contains("unexpected end of file"), "{detail}");
                }
                other => panic!("cut at {cut}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = to_bytes(&sample());
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        match from_bytes(&bytes) {
            Err(e @ ChainError::CheckpointVersion { found: 99, supported: 1 }) => {
                let msg = e.to_string();
                assert!(msg.contains("99") && msg.contains('1'), "{msg}");
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut bytes = to_bytes(&sample());
        bytes[0] = b'X';
        assert!(matches!(
            from_bytes(&bytes),
            Err(ChainError::CheckpointParse { offset: 0, .. })
        ));
    }

    #[test]
    fn non_finite_parameter_is_rejected() {
        let ckpt = sample();
        let mut bytes = to_bytes(&ckpt);
        let header = bytes.len() - ckpt.model.param_count() * 8;
        bytes[header..header + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        match from_bytes(&bytes) {
            Err(ChainError::CheckpointParse { detail, .. }) => {
                assert!(detail.contains("non-finite"), "{detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = to_bytes(&sample());
        bytes.extend_from_slice(&[0u8; 4]);
        match from_bytes(&bytes) {
            Err(ChainError::CheckpointParse { detail, .. }) => {
                assert!(detail.contains("trailing"), "{detail}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
