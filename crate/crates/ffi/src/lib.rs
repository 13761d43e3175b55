//! C ABI for the randpush simulation library.
//!
//! Conventions, mirrored in the generated `include/randpush.h`:
//!
//! - Every fallible function returns an [`RpStatus`]; `RP_STATUS_OK` (0)
//!   means success. Out-parameters are written only on success.
//! - Ensembles travel through the boundary as opaque `RpEnsemble*`
//!   handles created by `rp_ensemble_from_json` / `rp_ensemble_load_file`
//!   and released with `rp_ensemble_free`.
//! - Strings handed to the caller are heap-allocated, NUL-terminated
//!   UTF-8; release them with `rp_string_free`. Strings accepted from the
//!   caller must be NUL-terminated UTF-8.
//! - After a failure, `rp_last_error_message` returns a human-readable
//!   description. The pointer stays valid until the next failing call on
//!   the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::sync::Arc;

use randpush::bounds::BoundConstants;
use randpush::graph::{load_ensemble, EnsembleSpec, GraphEnsemble};
use randpush::harness::emit::{build_summary, format_metrics_csv, render_json};
use randpush::harness::fit::fit_rate;
use randpush::harness::{run_experiment, ExperimentConfig, HarnessError, ResolvedExperiment};

/// Result of a C ABI call. Zero is success; everything else is an error
/// whose description is available via `rp_last_error_message`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The input was well-formed but semantically invalid.
    InvalidArgument = 3,
    /// A file could not be read.
    IoError = 4,
    /// JSON (or CSV) could not be parsed.
    ParseError = 5,
    /// The simulation itself failed.
    RunError = 6,
}

/// Opaque handle to a validated graph ensemble.
pub struct RpEnsemble {
    inner: Arc<GraphEnsemble>,
}

/// Constants derived from an ensemble: node count, window length, the
/// window selection probability floor `p`, gate threshold `delta`, `c1`,
/// and the contraction factor `lambda` in log space (`ln_lambda` and
/// `ln(1 - lambda)`, the only faithful representations when `lambda`
/// rounds to 1 in double precision).
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RpBoundConstants {
    pub n: usize,
    pub window: usize,
    pub p: f64,
    pub delta: f64,
    pub c1: f64,
    pub ln_lambda: f64,
    pub ln_one_minus_lambda: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: RpStatus, message: &str) -> RpStatus {
    let owned = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
    status
}

fn fail_harness(err: &HarnessError) -> RpStatus {
    let status = match err {
        HarnessError::Io { .. } => RpStatus::IoError,
        HarnessError::Parse { .. } => RpStatus::ParseError,
        HarnessError::InvalidConfig(_) => RpStatus::InvalidArgument,
        HarnessError::Ensemble(_) | HarnessError::Objective(_) | HarnessError::Bounds(_) => {
            RpStatus::InvalidArgument
        }
        _ => RpStatus::RunError,
    };
    fail(status, &err.to_string())
}

/// Message describing the most recent failure on the calling thread, or
/// an empty string if none occurred. Valid until the next failing call
/// on this thread; do not free.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `ptr` must be NULL or a NUL-terminated string valid for reads.
unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, RpStatus> {
    if ptr.is_null() {
        return Err(fail(
            RpStatus::NullPointer,
            &format!("{what} must not be NULL"),
        ));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(RpStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

fn give_string(text: String, out: *mut *mut c_char) -> Result<(), RpStatus> {
    if out.is_null() {
        return Ok(());
    }
    match CString::new(text) {
        Ok(c) => {
            // Safety: checked non-NULL above; the caller promises `out`
            // points to writable storage.
            unsafe { *out = c.into_raw() };
            Ok(())
        }
        Err(_) => Err(fail(
            RpStatus::RunError,
            "output contained an interior NUL byte",
        )),
    }
}

fn ensemble_to_handle(ensemble: GraphEnsemble, out: *mut *mut RpEnsemble) -> RpStatus {
    if out.is_null() {
        return fail(RpStatus::NullPointer, "out handle must not be NULL");
    }
    let handle = Box::new(RpEnsemble {
        inner: Arc::new(ensemble),
    });
    // Safety: `out` checked non-NULL; caller promises it is writable.
    unsafe { *out = Box::into_raw(handle) };
    RpStatus::Ok
}

/// Parse and validate an ensemble from its JSON document. On success,
/// writes a handle the caller must release with `rp_ensemble_free`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must point to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn rp_ensemble_from_json(
    json: *const c_char,
    out: *mut *mut RpEnsemble,
) -> RpStatus {
    let text = match str_arg(json, "json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let spec: EnsembleSpec = match serde_json::from_str(text) {
        Ok(s) => s,
        Err(e) => return fail(RpStatus::ParseError, &format!("cannot parse ensemble: {e}")),
    };
    match spec.build() {
        Ok(ens) => ensemble_to_handle(ens, out),
        Err(e) => fail(RpStatus::InvalidArgument, &e.to_string()),
    }
}

/// Load and validate an ensemble from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn rp_ensemble_load_file(
    path: *const c_char,
    out: *mut *mut RpEnsemble,
) -> RpStatus {
    let path = match str_arg(path, "path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match load_ensemble(Path::new(path)) {
        Ok(ens) => ensemble_to_handle(ens, out),
        Err(e) => {
            let status = if matches!(e, randpush::graph::EnsembleError::Io { .. }) {
                RpStatus::IoError
            } else {
                RpStatus::InvalidArgument
            };
            fail(status, &e.to_string())
        }
    }
}

/// Release a handle returned by the `rp_ensemble_*` constructors.
/// Passing NULL is a no-op.
///
/// # Safety
/// `handle` must be NULL or a pointer previously returned by an
/// `rp_ensemble_*` constructor, released at most once.
#[no_mangle]
pub unsafe extern "C" fn rp_ensemble_free(handle: *mut RpEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of nodes, or 0 if the handle is NULL.
///
/// # Safety
/// `handle` must be NULL or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn rp_ensemble_node_count(handle: *const RpEnsemble) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.n())
}

/// Number of member graphs, or 0 if the handle is NULL.
///
/// # Safety
/// `handle` must be NULL or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn rp_ensemble_graph_count(handle: *const RpEnsemble) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.len())
}

/// Compute the constants the ensemble determines (see
/// [`RpBoundConstants`]). Fails with `RP_STATUS_INVALID_ARGUMENT` for
/// single-node ensembles, which have none.
///
/// # Safety
/// `handle` must be a live ensemble handle; `out` must point to writable
/// `RpBoundConstants` storage.
#[no_mangle]
pub unsafe extern "C" fn rp_bound_constants(
    handle: *const RpEnsemble,
    out: *mut RpBoundConstants,
) -> RpStatus {
    let Some(h) = handle.as_ref() else {
        return fail(RpStatus::NullPointer, "handle must not be NULL");
    };
    if out.is_null() {
        return fail(RpStatus::NullPointer, "out must not be NULL");
    }
    match BoundConstants::from_ensemble(&h.inner) {
        Ok(c) => {
            *out = RpBoundConstants {
                n: c.n,
                window: c.window,
                p: c.p,
                delta: c.delta,
                c1: c.c1,
                ln_lambda: c.ln_lambda,
                ln_one_minus_lambda: c.ln_one_minus_lambda,
            };
            RpStatus::Ok
        }
        Err(e) => fail(RpStatus::InvalidArgument, &e.to_string()),
    }
}

/// Run every validation check on an ensemble JSON document and return
/// the report as JSON: `{"valid": bool, "checks": [...]}`. The call
/// succeeds even when the ensemble is invalid; only malformed JSON or a
/// NULL argument fails.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_report` must be NULL or
/// point to writable pointer storage (free the result with
/// `rp_string_free`).
#[no_mangle]
pub unsafe extern "C" fn rp_validate_ensemble_json(
    json: *const c_char,
    out_report: *mut *mut c_char,
) -> RpStatus {
    let text = match str_arg(json, "json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let spec: EnsembleSpec = match serde_json::from_str(text) {
        Ok(s) => s,
        Err(e) => return fail(RpStatus::ParseError, &format!("cannot parse ensemble: {e}")),
    };
    let report = spec.validate();
    let payload = serde_json::json!({
        "valid": report.is_valid(),
        "checks": report.checks,
    });
    match give_string(render_json(&payload), out_report) {
        Ok(()) => RpStatus::Ok,
        Err(status) => status,
    }
}

/// Run a full experiment from a config JSON document (the same schema
/// the CLI reads; ensemble paths are resolved against the process
/// working directory). On success, writes the metrics CSV to
/// `out_metrics_csv` and the run summary JSON to `out_summary_json`;
/// either may be NULL to skip that artifact. Free both with
/// `rp_string_free`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; the out-parameters
/// must be NULL or point to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn rp_run_experiment_json(
    config_json: *const c_char,
    out_metrics_csv: *mut *mut c_char,
    out_summary_json: *mut *mut c_char,
) -> RpStatus {
    let text = match str_arg(config_json, "config_json") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let config: ExperimentConfig = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => return fail(RpStatus::ParseError, &format!("cannot parse config: {e}")),
    };
    let exp = match ResolvedExperiment::resolve(config, None) {
        Ok(e) => e,
        Err(e) => return fail_harness(&e),
    };
    let rows = match run_experiment(&exp) {
        Ok(r) => r,
        Err(e) => return fail_harness(&e),
    };
    let fit = fit_rate(&rows, 1, u64::MAX).ok();
    let summary = build_summary(&exp, &rows, fit);
    if let Err(status) = give_string(format_metrics_csv(&rows), out_metrics_csv) {
        return status;
    }
    if let Err(status) = give_string(render_json(&summary), out_summary_json) {
        return status;
    }
    RpStatus::Ok
}

/// Release a string returned by this library. Passing NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a pointer previously returned through one of this
/// library's string out-parameters, released at most once.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
