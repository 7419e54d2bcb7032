//! C ABI over the chaincast engine: opaque model handles, status codes, and
//! flat-buffer prediction so other languages can bind the rollouts, the
//! checkpoint format, and the transformation cost model.
//!
//! Conventions: every fallible call returns a `CcStatus`; `CC_STATUS_OK` is 0.
//! On failure, `chaincast_last_error` returns a thread-local message that
//! stays valid until the next failing call on the same thread. Pointers are
//! only written on success. No call unwinds across the boundary.

use chaincast::checkpoint::{self, Checkpoint};
use chaincast::rollout::{predict_ew, predict_ml, predict_mw};
use chaincast::{count_ew, count_ml, count_mw, speed_gain, ChainError, ResetPolicy};
use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Result of a chaincast call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument value violates the call's contract.
    InvalidArgument = 2,
    /// The file could not be read or written.
    IoError = 3,
    /// The file is not a valid checkpoint (bad magic, truncation, version).
    FormatError = 4,
    /// A numeric failure (divergence, cost-model mismatch).
    NumericError = 5,
    /// An internal invariant failed.
    InternalError = 6,
}

/// Rollout algorithm selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcAlgorithm {
    /// Moving window: fixed-length window, re-run every round.
    MovingWindow = 0,
    /// Expanding window: the window grows by one element per round.
    ExpandingWindow = 1,
    /// Memoryless: the input is consumed once, then the chain advances one
    /// step per round on its own state dynamics.
    Memoryless = 2,
}

/// Round-start state handling for the moving-window rollout.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcResetPolicy {
    /// Each round starts from zero states.
    Zero = 0,
    /// Each round inherits the previous round's final states.
    Inherit = 1,
}

/// Opaque handle to a loaded model checkpoint.
pub struct CcModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: CcStatus, message: &str) -> CcStatus {
    set_error(message);
    status
}

fn status_for(err: &ChainError) -> CcStatus {
    match err {
        ChainError::Io { .. } => CcStatus::IoError,
        ChainError::CheckpointParse { .. } | ChainError::CheckpointVersion { .. } => {
            CcStatus::FormatError
        }
        ChainError::Divergence { .. }
        | ChainError::CountMismatch { .. }
        | ChainError::NoDecayRegime { .. } => CcStatus::NumericError,
        _ => CcStatus::InvalidArgument,
    }
}

fn guard(body: impl FnOnce() -> CcStatus + std::panic::UnwindSafe) -> CcStatus {
    match catch_unwind(body) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in chaincast".into());
            fail(CcStatus::InternalError, &message)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chaincast_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failing call on this thread. Empty until a call fails;
/// the pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chaincast_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn path_from(ptr: *const c_char) -> Result<PathBuf, CcStatus> {
    if ptr.is_null() {
        return Err(fail(CcStatus::NullArgument, "path is null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(CcStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

/// Loads a checkpoint file into a freshly allocated model handle.
/// On success writes the handle to `out_model`; free it with
/// `chaincast_model_free`.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out_model` to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn chaincast_model_load(
    path: *const c_char,
    out_model: *mut *mut CcModel,
) -> CcStatus {
    if out_model.is_null() {
        return fail(CcStatus::NullArgument, "out_model is null");
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    guard(AssertUnwindSafe(|| match checkpoint::load(&path) {
        Ok(ckpt) => {
            let handle = Box::new(CcModel { inner: ckpt });
            *out_model = Box::into_raw(handle);
            CcStatus::Ok
        }
        Err(e) => fail(status_for(&e), &e.to_string()),
    }))
}

/// Writes the model back to a checkpoint file (bit-exact round trip).
///
/// # Safety
/// `model` must be a live handle from `chaincast_model_load`; `path` must
/// point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn chaincast_model_save(
    model: *const CcModel,
    path: *const c_char,
) -> CcStatus {
    if model.is_null() {
        return fail(CcStatus::NullArgument, "model is null");
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let model = &*model;
    guard(AssertUnwindSafe(|| {
        match checkpoint::save(&path, &model.inner) {
            Ok(()) => CcStatus::Ok,
            Err(e) => fail(status_for(&e), &e.to_string()),
        }
    }))
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from `chaincast_model_load` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn chaincast_model_free(model: *mut CcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of recurrent layers in the chain; 0 if `model` is null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chaincast_model_depth(model: *const CcModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.model.depth()
}

/// Dimension of the input elements (and of predictions); 0 if null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chaincast_model_input_dim(model: *const CcModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.model.input_dim()
}

/// Total number of learnable parameters; 0 if null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn chaincast_model_param_count(model: *const CcModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.model.param_count()
}

/// Rolls the model forward from a scalar input window.
///
/// `input` holds `m` values (the model must have input dimension 1);
/// `out_predictions` receives `p` predicted values. On success
/// `out_transform_count`, when non-null, receives the measured number of
/// state-transformation plus predictor applications. The expanding window is
/// capped at m+p, which the rollout never exceeds; `policy` only affects the
/// moving window.
///
/// # Safety
/// `model` must be a live handle; `input` must point to `m` readable doubles
/// and `out_predictions` to `p` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn chaincast_predict(
    model: *const CcModel,
    algorithm: CcAlgorithm,
    policy: CcResetPolicy,
    input: *const f64,
    m: usize,
    p: usize,
    out_predictions: *mut f64,
    out_transform_count: *mut u64,
) -> CcStatus {
    if model.is_null() || input.is_null() || out_predictions.is_null() {
        return fail(CcStatus::NullArgument, "model, input, and out_predictions are required");
    }
    if m == 0 || p == 0 {
        return fail(CcStatus::InvalidArgument, "m and p must be positive");
    }
    let model = &(*model).inner.model;
    if model.input_dim() != 1 {
        return fail(
            CcStatus::InvalidArgument,
            "chaincast_predict requires a model with input dimension 1",
        );
    }
    let window: Vec<Vec<f64>> = std::slice::from_raw_parts(input, m)
        .iter()
        .map(|v| vec![*v])
        .collect();
    if window.iter().any(|v| !v[0].is_finite()) {
        return fail(CcStatus::InvalidArgument, "input window contains non-finite values");
    }
    let out = std::slice::from_raw_parts_mut(out_predictions, p);
    guard(AssertUnwindSafe(|| {
        let policy = match policy {
            CcResetPolicy::Zero => ResetPolicy::Zero,
            CcResetPolicy::Inherit => ResetPolicy::Inherit,
        };
        let result = match algorithm {
            CcAlgorithm::MovingWindow => predict_mw(model, &window, p, policy, false),
            CcAlgorithm::ExpandingWindow => predict_ew(model, &window, p, m + p, false),
            CcAlgorithm::Memoryless => predict_ml(model, &window, p, false),
        };
        for (slot, prediction) in out.iter_mut().zip(&result.predictions) {
            *slot = prediction[0];
        }
        if !out_transform_count.is_null() {
            *out_transform_count = result.transform_count;
        }
        CcStatus::Ok
    }))
}

/// Closed-form transformation count of the moving-window rollout: (mk+1)p.
#[no_mangle]
pub extern "C" fn chaincast_count_mw(m: u64, p: u64, k: u64) -> u64 {
    count_mw(m, p, k)
}

/// Closed-form transformation count of the expanding-window rollout.
#[no_mangle]
pub extern "C" fn chaincast_count_ew(m: u64, p: u64, k: u64) -> u64 {
    count_ew(m, p, k)
}

/// Closed-form transformation count of the memoryless rollout: k(m+p-1)+p.
#[no_mangle]
pub extern "C" fn chaincast_count_ml(m: u64, p: u64, k: u64) -> u64 {
    count_ml(m, p, k)
}

/// Ratio of moving-window to memoryless transformation counts.
#[no_mangle]
pub extern "C" fn chaincast_speed_gain(m: u64, p: u64, k: u64) -> f64 {
    speed_gain(m, p, k)
}
