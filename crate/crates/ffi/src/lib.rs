//! C ABI over the spikefolio core: load or build networks, run inference on
//! float and quantized networks, and compute back-test metrics.
//!
//! Handles are opaque and owned by the caller once returned. Every fallible
//! call returns an `SfStatus`; the message for the most recent failure on the
//! calling thread is available from `sf_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spikefolio::checkpoint::{Checkpoint, QuantizedCheckpoint};
use spikefolio::quantizer::{infer_quantized, quantize_network, QuantizedNetwork};
use spikefolio::seed::{component_rng, RngCore, SeededRng};
use spikefolio::snn::{infer, EncodingMode, NetworkSpec, SdpNetwork};
use spikefolio::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Io = 5,
    Checkpoint = 6,
    Dimension = 7,
    Quantize = 8,
    Metrics = 9,
    Panic = 10,
    Internal = 11,
}

/// Float network plus the encoder generator used in probabilistic mode.
pub struct SfNetwork {
    net: SdpNetwork,
    rng: SeededRng,
}

pub struct SfQuantizedNetwork {
    net: QuantizedNetwork,
    rng: SeededRng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> SfStatus {
    use spikefolio::snn::SnnError;
    match err {
        Error::FileNotFound(_) => SfStatus::NotFound,
        Error::Io { .. } => SfStatus::Io,
        Error::Checkpoint(_) => SfStatus::Checkpoint,
        Error::Quantize(_) => SfStatus::Quantize,
        Error::Metrics(_) => SfStatus::Metrics,
        Error::Snn(SnnError::DimensionMismatch { .. }) => SfStatus::Dimension,
        Error::Snn(_) | Error::Config(_) => SfStatus::InvalidArgument,
        _ => SfStatus::Internal,
    }
}

/// Runs `body`, recording failures and converting panics into `SfStatus::Panic`.
fn guard(body: impl FnOnce() -> Result<(), (SfStatus, String)>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside spikefolio");
            SfStatus::Panic
        }
    }
}

fn fail(err: impl Into<Error>) -> (SfStatus, String) {
    let err = err.into();
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (SfStatus, String) {
    (SfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (SfStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| (SfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (SfStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_action(action: &[f64], out: *mut f64, out_len: usize) -> Result<(), (SfStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len != action.len() {
        return Err((SfStatus::Dimension, format!("output buffer holds {out_len} values, action has {}", action.len())));
    }
    std::ptr::copy_nonoverlapping(action.as_ptr(), out, action.len());
    Ok(())
}

fn wrap(net: SdpNetwork) -> *mut SfNetwork {
    let rng = component_rng(net.seed, "ffi-encoder");
    Box::into_raw(Box::new(SfNetwork { net, rng }))
}

fn wrap_quantized(net: QuantizedNetwork) -> *mut SfQuantizedNetwork {
    let rng = component_rng(net.seed, "ffi-encoder");
    Box::into_raw(Box::new(SfQuantizedNetwork { net, rng }))
}

/// Message of the last failed call on this thread, or NULL if none.
/// Free with `sf_string_free`.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Fresh network with default hyperparameters for `assets` risky assets.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn sf_network_init(assets: usize, seed: u64, out: *mut *mut SfNetwork) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = NetworkSpec { assets, ..NetworkSpec::default() };
        let net = SdpNetwork::init(&spec, seed).map_err(fail)?;
        *out = wrap(net);
        Ok(())
    })
}

/// Loads a float checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_network_load(path: *const c_char, out: *mut *mut SfNetwork) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = Checkpoint::load(Path::new(path)).map_err(fail)?;
        *out = wrap(ckpt.network);
        Ok(())
    })
}

/// Parses checkpoint JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_network_from_json(json: *const c_char, out: *mut *mut SfNetwork) -> SfStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = Checkpoint::from_json(json).map_err(fail)?;
        *out = wrap(ckpt.network);
        Ok(())
    })
}

/// Checkpoint JSON for the network, or NULL on failure. Free with `sf_string_free`.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_network_to_json(net: *const SfNetwork) -> *mut c_char {
    let mut text = None;
    let status = guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let json = Checkpoint::new(net.net.clone(), None, 0).to_json();
        text = Some(CString::new(json).map_err(|e| (SfStatus::Internal, e.to_string()))?);
        Ok(())
    });
    match (status, text) {
        (SfStatus::Ok, Some(s)) => s.into_raw(),
        _ => std::ptr::null_mut(),
    }
}

/// Length of the state vector the network expects; 0 for a NULL handle.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_network_state_dim(net: *const SfNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.state_dim())
}

/// Number of portfolio weights (cash first) the network emits; 0 for a NULL handle.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_network_num_actions(net: *const SfNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.num_actions())
}

/// One inference: writes `out_len` portfolio weights to `out`.
///
/// # Safety
/// `net` must be a live handle, `state` must hold `state_len` doubles and
/// `out` must have room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_network_forward(
    net: *mut SfNetwork,
    state: *const f64,
    state_len: usize,
    out: *mut f64,
    out_len: usize,
) -> SfStatus {
    guard(|| {
        let handle = net.as_mut().ok_or_else(|| null("net"))?;
        let state = slice_arg(state, state_len, "state")?;
        let rng: Option<&mut dyn RngCore> = match handle.net.coder.mode {
            EncodingMode::Probabilistic => Some(&mut handle.rng),
            EncodingMode::Deterministic => None,
        };
        let action = infer(&handle.net, state, rng).map_err(fail)?;
        write_action(action.as_slice(), out, out_len)
    })
}

/// # Safety
/// `net` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sf_network_free(net: *mut SfNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Rescales every layer to integers with weights in `[-w_max, w_max]`.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_network_quantize(net: *const SfNetwork, w_max: i32, out: *mut *mut SfQuantizedNetwork) -> SfStatus {
    guard(|| {
        let handle = net.as_ref().ok_or_else(|| null("net"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let q = quantize_network(&handle.net, w_max).map_err(fail)?;
        *out = wrap_quantized(q);
        Ok(())
    })
}

/// Loads a quantized checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_quantized_load(path: *const c_char, out: *mut *mut SfQuantizedNetwork) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = QuantizedCheckpoint::load(Path::new(path)).map_err(fail)?;
        *out = wrap_quantized(ckpt.network);
        Ok(())
    })
}

/// # Safety
/// Same contract as `sf_network_forward`.
#[no_mangle]
pub unsafe extern "C" fn sf_quantized_forward(
    net: *mut SfQuantizedNetwork,
    state: *const f64,
    state_len: usize,
    out: *mut f64,
    out_len: usize,
) -> SfStatus {
    guard(|| {
        let handle = net.as_mut().ok_or_else(|| null("net"))?;
        let state = slice_arg(state, state_len, "state")?;
        let action = infer_quantized(&handle.net, state, Some(&mut handle.rng)).map_err(fail)?;
        write_action(action.as_slice(), out, out_len)
    })
}

/// Threshold of quantized layer `layer`, or -1 if out of range.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_quantized_threshold(net: *const SfQuantizedNetwork, layer: usize) -> i64 {
    net.as_ref().and_then(|n| n.net.layers.get(layer)).map_or(-1, |l| l.v_th)
}

/// # Safety
/// `net` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sf_quantized_free(net: *mut SfQuantizedNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Final accumulated portfolio value of an equity curve.
///
/// # Safety
/// `values` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_fapv(values: *const f64, len: usize, out: *mut f64) -> SfStatus {
    guard(|| {
        let values = slice_arg(values, len, "values")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if values.is_empty() || !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err((SfStatus::InvalidArgument, "curve must be non-empty and positive".into()));
        }
        *out = spikefolio::metrics::fapv(values);
        Ok(())
    })
}

/// Maximum drawdown of an equity curve.
///
/// # Safety
/// `values` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_mdd(values: *const f64, len: usize, out: *mut f64) -> SfStatus {
    guard(|| {
        let values = slice_arg(values, len, "values")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if values.is_empty() || !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err((SfStatus::InvalidArgument, "curve must be non-empty and positive".into()));
        }
        *out = spikefolio::metrics::mdd(values);
        Ok(())
    })
}

/// Per-period Sharpe ratio of `returns` against `risk_free`.
///
/// # Safety
/// `returns` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_sharpe(returns: *const f64, len: usize, risk_free: f64, out: *mut f64) -> SfStatus {
    guard(|| {
        let returns = slice_arg(returns, len, "returns")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = spikefolio::metrics::sharpe(returns, risk_free).map_err(fail)?;
        Ok(())
    })
}
