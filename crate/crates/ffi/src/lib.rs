//! C ABI over the passnet-lab library.
//!
//! Every fallible call returns a [`PnlStatus`]; on failure a message is
//! kept per thread and read back with [`pnl_last_error`]. Handles are
//! opaque and must be released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::OnceLock;

use passnet_lab::ingest::{MatchId, PlayerId, TeamId};
use passnet_lab::models::eval::auc;
use passnet_lab::models::TrainedModel;
use passnet_lab::netmetrics::{aggregate, NetworkMetrics};
use passnet_lab::passnet::{PassingNetwork, Position, Segment, SLOTS};
use passnet_lab::Error;

/// Number of players (nodes) in every network.
pub const PNL_SLOTS: usize = 11;
/// Number of values written by `pnl_network_metrics`.
pub const PNL_METRIC_COUNT: usize = 25;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    DataError = 4,
    NumericError = 5,
    Panic = 6,
}

/// Opaque passing network.
pub struct PnlNetwork {
    inner: PassingNetwork,
}

/// Opaque trained model.
pub struct PnlModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> PnlStatus {
    match e.exit_code() {
        2 => PnlStatus::ConfigError,
        4 => PnlStatus::NumericError,
        _ => PnlStatus::DataError,
    }
}

struct Fail(PnlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), format!("{}: {e}", e.class()))
    }
}

fn null(what: &str) -> Fail {
    Fail(PnlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(PnlStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> PnlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PnlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PnlStatus::Panic
        }
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pnl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pnl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a network from an 11x11 row-major pass-count matrix and optional
/// mean positions (`xs`/`ys` may be NULL; NaN marks an unknown position).
///
/// # Safety
/// `weights` must point to 121 values, `xs` and `ys` to 11 values each
/// when non-null, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnl_network_new(
    weights: *const u32,
    xs: *const f64,
    ys: *const f64,
    out: *mut *mut PnlNetwork,
) -> PnlStatus {
    guard(|| {
        if weights.is_null() {
            return Err(null("weights"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if xs.is_null() != ys.is_null() {
            return Err(invalid("xs and ys must both be null or both be set"));
        }
        let w = slice::from_raw_parts(weights, SLOTS * SLOTS);
        let slots = (0..SLOTS).map(|i| PlayerId::new(format!("slot{i}"))).collect();
        let mut net = PassingNetwork::empty(MatchId::new("ffi"), TeamId::new("ffi"), Segment::Full, slots);
        for i in 0..SLOTS {
            net.weights[i].copy_from_slice(&w[i * SLOTS..(i + 1) * SLOTS]);
        }
        if !xs.is_null() {
            let (x, y) = (slice::from_raw_parts(xs, SLOTS), slice::from_raw_parts(ys, SLOTS));
            for i in 0..SLOTS {
                if !x[i].is_nan() && !y[i].is_nan() {
                    net.positions[i] = Some(Position { x: x[i], y: y[i] });
                }
            }
        }
        net.validate()?;
        *out = Box::into_raw(Box::new(PnlNetwork { inner: net }));
        Ok(())
    })
}

/// Completed passes in the network.
///
/// # Safety
/// `net` must be NULL or a live handle from `pnl_network_new`.
#[no_mangle]
pub unsafe extern "C" fn pnl_network_total_passes(net: *const PnlNetwork) -> u64 {
    net.as_ref().map_or(0, |n| n.inner.total_passes())
}

/// Writes the 25 aggregate metrics in `pnl_metric_name` order; undefined
/// values (no positions, disconnected path length) are NaN.
///
/// # Safety
/// `net` must be a live handle and `out` must have room for 25 values.
#[no_mangle]
pub unsafe extern "C" fn pnl_network_metrics(net: *const PnlNetwork, out: *mut f64) -> PnlStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let values = aggregate(&net.inner).values();
        let dst = slice::from_raw_parts_mut(out, values.len());
        for (d, v) in dst.iter_mut().zip(values) {
            *d = v.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Column name of metric `index`, or NULL when out of range. The string is
/// static.
#[no_mangle]
pub extern "C" fn pnl_metric_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        NetworkMetrics::column_names()
            .into_iter()
            .map(|n| CString::new(n).expect("metric names have no NUL"))
            .collect()
    });
    names.get(index).map_or(ptr::null(), |s| s.as_ptr())
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnl_network_free(net: *mut PnlNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Loads a model from the JSON written by the `train` stage.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pnl_model_from_json(json: *const c_char, out: *mut *mut PnlModel) -> PnlStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| invalid("json is not UTF-8"))?;
        let model = TrainedModel::from_json(text)?;
        *out = Box::into_raw(Box::new(PnlModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnl_model_n_features(model: *const PnlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.feature_names.len())
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnl_model_n_classes(model: *const PnlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_classes)
}

/// Class probabilities for `n_rows` row-major rows of `n_features` values.
/// `out` receives `n_rows * n_classes` values.
///
/// # Safety
/// `rows` must hold `n_rows * n_features` values and `out` must have room
/// for `n_rows * pnl_model_n_classes(model)` values.
#[no_mangle]
pub unsafe extern "C" fn pnl_model_predict_proba(
    model: *const PnlModel,
    rows: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut f64,
) -> PnlStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        if n_rows == 0 {
            return Ok(());
        }
        if rows.is_null() {
            return Err(null("rows"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n_features != model.feature_names.len() {
            return Err(Fail(
                PnlStatus::DataError,
                format!(
                    "FeatureMismatch: model expects {} features, got {n_features}",
                    model.feature_names.len()
                ),
            ));
        }
        let data = slice::from_raw_parts(rows, n_rows * n_features);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Fail(PnlStatus::NumericError, "non-finite feature value".into()));
        }
        let k = model.n_classes;
        let dst = slice::from_raw_parts_mut(out, n_rows * k);
        for (row, chunk) in data.chunks_exact(n_features).zip(dst.chunks_exact_mut(k)) {
            chunk.copy_from_slice(&model.predict_row(row));
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnl_model_free(model: *mut PnlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Area under the ROC curve; `labels` are 0/1 bytes (nonzero = positive).
///
/// # Safety
/// `scores` and `labels` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnl_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> PnlStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return Err(null("scores, labels or out"));
        }
        let s = slice::from_raw_parts(scores, n);
        let pos: Vec<bool> = slice::from_raw_parts(labels, n).iter().map(|&b| b != 0).collect();
        *out = auc(s, &pos)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_library() {
        assert_eq!(PNL_SLOTS, SLOTS);
        assert_eq!(PNL_METRIC_COUNT, NetworkMetrics::column_names().len());
    }

    #[test]
    fn error_is_cleared_by_next_success() {
        let mut out = 0.0;
        let st = unsafe { pnl_auc([0.1, 0.2].as_ptr(), [1u8, 1].as_ptr(), 2, &mut out) };
        assert_eq!(st, PnlStatus::NumericError);
        assert!(!pnl_last_error().is_null());
        let st = unsafe { pnl_auc([0.1, 0.2].as_ptr(), [0u8, 1].as_ptr(), 2, &mut out) };
        assert_eq!(st, PnlStatus::Ok);
        assert!(pnl_last_error().is_null());
        assert_eq!(out, 1.0);
    }
}
