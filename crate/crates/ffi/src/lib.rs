//! C ABI over the core evaluators. Inputs and outputs cross the boundary as
//! JSON strings in the same wire formats the CLI uses; kernels can be held
//! behind an opaque handle to amortize parsing and canonicalization.
//!
//! Conventions:
//! * Every function returns a status code; `UB_STATUS_OK` is 0.
//! * On any nonzero status, `ub_last_error_message` returns a heap-allocated
//!   copy of the error text for the calling thread.
//! * Strings returned through `char**` out-parameters are heap-allocated and
//!   must be released with `ub_string_free`; handles with `ub_kernel_free`.
//! * Passing a null pointer where a value is required yields
//!   `UB_STATUS_NULL_POINTER`, never undefined behavior.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ubound::bounds::{iid_tail_bound, moment_bound, tail_bound, BoundOptions};
use ubound::experiment::{run_experiment, ExperimentConfig};
use ubound::kernel::{KernelEnsemble, KernelInput};
use ubound::poisson::{theorem8_tail_bound, theorem8_threshold, ProcessSpec, StepKernel};
use ubound::tensor::{partition_norm, MultiIndexArray, NormConfig, NormMethod, Partition};
use ubound::Error;

/// Success.
pub const UB_STATUS_OK: i32 = 0;
/// A gated verification check failed (the run itself succeeded).
pub const UB_STATUS_VERIFICATION_FAILED: i32 = 1;
/// Malformed input: bad JSON, bad partition spec, domain errors.
pub const UB_STATUS_INVALID_INPUT: i32 = 2;
/// Kernel failed the degeneracy gate.
pub const UB_STATUS_NOT_CANONICAL: i32 = 3;
/// A required pointer argument was null.
pub const UB_STATUS_NULL_POINTER: i32 = 4;
/// Internal panic; the library state is still consistent.
pub const UB_STATUS_PANIC: i32 = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn status_of(err: &Error) -> i32 {
    match err.exit_code() {
        3 => UB_STATUS_NOT_CANONICAL,
        _ => UB_STATUS_INVALID_INPUT,
    }
}

fn fail(err: &Error) -> i32 {
    set_error(&err.to_string());
    status_of(err)
}

/// Runs `body` with panics converted to `UB_STATUS_PANIC`.
fn guarded(body: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            UB_STATUS_PANIC
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string that outlives the
/// call.
unsafe fn required_str<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(UB_STATUS_NULL_POINTER);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        UB_STATUS_INVALID_INPUT
    })
}

/// # Safety
/// Same contract as [`required_str`], but null maps to `None`.
unsafe fn optional_str<'a>(ptr: *const c_char) -> Result<Option<&'a str>, i32> {
    if ptr.is_null() {
        return Ok(None);
    }
    unsafe { required_str(ptr) }.map(Some)
}

fn emit_string(out: *mut *mut c_char, text: String) -> i32 {
    if out.is_null() {
        set_error("null output pointer");
        return UB_STATUS_NULL_POINTER;
    }
    match CString::new(text) {
        Ok(text) => {
            unsafe { *out = text.into_raw() };
            UB_STATUS_OK
        }
        Err(_) => {
            set_error("output contains an interior NUL byte");
            UB_STATUS_INVALID_INPUT
        }
    }
}

fn emit_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> i32 {
    match serde_json::to_string_pretty(value) {
        Ok(text) => emit_string(out, text),
        Err(err) => {
            set_error(&err.to_string());
            UB_STATUS_INVALID_INPUT
        }
    }
}

fn parse_options(json: Option<&str>) -> Result<BoundOptions, Error> {
    match json {
        None => Ok(BoundOptions::default()),
        Some(text) => Ok(serde_json::from_str(text)?),
    }
}

/// Opaque kernel handle: a fully expanded ensemble.
pub struct UbKernel {
    ensemble: KernelEnsemble,
}

/// Returns the last error message for this thread as a heap string, or null
/// when no error has occurred. Release with `ub_string_free`.
#[no_mangle]
pub extern "C" fn ub_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|text| text.clone().into_raw())
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn ub_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parses a kernel (shared or expanded JSON form) into a handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn ub_kernel_parse(
    json: *const c_char,
    out: *mut *mut UbKernel,
) -> i32 {
    guarded(|| {
        let json = match unsafe { required_str(json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        if out.is_null() {
            set_error("null output pointer");
            return UB_STATUS_NULL_POINTER;
        }
        let input: KernelInput = match serde_json::from_str(json) {
            Ok(input) => input,
            Err(err) => return fail(&Error::from(err)),
        };
        match input.ensemble() {
            Ok(ensemble) => {
                let handle = Box::new(UbKernel { ensemble });
                unsafe { *out = Box::into_raw(handle) };
                UB_STATUS_OK
            }
            Err(err) => fail(&err),
        }
    })
}

/// Releases a kernel handle.
///
/// # Safety
/// `kernel` must be null or a handle from `ub_kernel_parse` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ub_kernel_free(kernel: *mut UbKernel) {
    if !kernel.is_null() {
        drop(unsafe { Box::from_raw(kernel) });
    }
}

/// Re-centers the kernel in place so every coordinate is degenerate.
///
/// # Safety
/// `kernel` must be a live handle from `ub_kernel_parse`.
#[no_mangle]
pub unsafe extern "C" fn ub_kernel_canonicalize(kernel: *mut UbKernel) -> i32 {
    guarded(|| {
        if kernel.is_null() {
            set_error("null kernel handle");
            return UB_STATUS_NULL_POINTER;
        }
        let kernel = unsafe { &mut *kernel };
        kernel.ensemble = kernel.ensemble.canonicalize();
        UB_STATUS_OK
    })
}

/// Serializes the kernel back to its expanded JSON form.
///
/// # Safety
/// `kernel` must be a live handle; `out` valid writable memory. The result
/// must be released with `ub_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ub_kernel_to_json(
    kernel: *const UbKernel,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if kernel.is_null() {
            set_error("null kernel handle");
            return UB_STATUS_NULL_POINTER;
        }
        let kernel = unsafe { &*kernel };
        emit_json(out, &kernel.ensemble)
    })
}

/// Moment bound at order `p`; writes a bound-report JSON.
/// `options_json` is an options object or null for defaults.
///
/// # Safety
/// `kernel` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ub_moment_bound(
    kernel: *const UbKernel,
    p: f64,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if kernel.is_null() {
            set_error("null kernel handle");
            return UB_STATUS_NULL_POINTER;
        }
        let kernel = unsafe { &*kernel };
        let options = match unsafe { optional_str(options_json) } {
            Ok(text) => match parse_options(text) {
                Ok(options) => options,
                Err(err) => return fail(&err),
            },
            Err(status) => return status,
        };
        match moment_bound(&kernel.ensemble, p, &options) {
            Ok(report) => emit_json(out, &report),
            Err(err) => fail(&err),
        }
    })
}

/// Tail bound at level `t`; writes a bound-report JSON.
///
/// # Safety
/// Same contract as `ub_moment_bound`.
#[no_mangle]
pub unsafe extern "C" fn ub_tail_bound(
    kernel: *const UbKernel,
    t: f64,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        if kernel.is_null() {
            set_error("null kernel handle");
            return UB_STATUS_NULL_POINTER;
        }
        let kernel = unsafe { &*kernel };
        let options = match unsafe { optional_str(options_json) } {
            Ok(text) => match parse_options(text) {
                Ok(options) => options,
                Err(err) => return fail(&err),
            },
            Err(status) => return status,
        };
        match tail_bound(&kernel.ensemble, t, &options) {
            Ok(report) => emit_json(out, &report),
            Err(err) => fail(&err),
        }
    })
}

/// Replicated-coordinate tail bound from a shared kernel JSON (the handle
/// path cannot be used: the bound needs the unexpanded form).
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ub_iid_tail_bound(
    shared_json: *const c_char,
    n: usize,
    t: f64,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let json = match unsafe { required_str(shared_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let input: KernelInput = match serde_json::from_str(json) {
            Ok(input) => input,
            Err(err) => return fail(&Error::from(err)),
        };
        let Some(shared) = input.shared() else {
            return fail(&Error::InvalidArgument(
                "the iid bound needs the shared kernel form".into(),
            ));
        };
        let options = match unsafe { optional_str(options_json) } {
            Ok(text) => match parse_options(text) {
                Ok(options) => options,
                Err(err) => return fail(&err),
            },
            Err(status) => return status,
        };
        match iid_tail_bound(shared, n, t, &options) {
            Ok(report) => emit_json(out, &report),
            Err(err) => fail(&err),
        }
    })
}

/// Partition norm of an array JSON under a spec like "{1,3}|{2}".
/// `method` is "auto", "exact2", "alternating", or "oracle" (null = auto);
/// `config_json` is a norm-config object or null for defaults.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ub_partition_norm(
    array_json: *const c_char,
    partition: *const c_char,
    method: *const c_char,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let array_json = match unsafe { required_str(array_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let partition_spec = match unsafe { required_str(partition) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let array: MultiIndexArray = match serde_json::from_str(array_json) {
            Ok(array) => array,
            Err(err) => return fail(&Error::from(err)),
        };
        let partition = match Partition::parse(partition_spec) {
            Ok(partition) => partition,
            Err(err) => return fail(&err),
        };
        let method = match unsafe { optional_str(method) } {
            Ok(None) => NormMethod::Auto,
            Ok(Some(name)) => match name.parse() {
                Ok(method) => method,
                Err(err) => return fail(&err),
            },
            Err(status) => return status,
        };
        let config: NormConfig = match unsafe { optional_str(config_json) } {
            Ok(None) => NormConfig::default(),
            Ok(Some(text)) => match serde_json::from_str(text) {
                Ok(config) => config,
                Err(err) => return fail(&Error::from(err)),
            },
            Err(status) => return status,
        };
        match partition_norm(&array, &partition, method, &config) {
            Ok(certificate) => emit_json(out, &certificate),
            Err(err) => fail(&err),
        }
    })
}

fn step_kernel_and_process(
    kernel_json: &str,
    process_json: Option<&str>,
) -> Result<(StepKernel, ProcessSpec), Error> {
    let kernel: StepKernel = serde_json::from_str(kernel_json)?;
    let process = match process_json {
        Some(text) => {
            let spec: ProcessSpec = serde_json::from_str(text)?;
            spec.validate_for(&kernel)?;
            spec
        }
        None => ProcessSpec::homogeneous(&kernel, 1.0)?,
    };
    Ok((kernel, process))
}

/// Poisson threshold report at order `p` for a step kernel. A null
/// `process_json` means a homogeneous unit-rate process.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ub_theorem8_threshold(
    step_kernel_json: *const c_char,
    process_json: *const c_char,
    p: f64,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let kernel_json = match unsafe { required_str(step_kernel_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let process_json = match unsafe { optional_str(process_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let options = match unsafe { optional_str(options_json) } {
            Ok(text) => match parse_options(text) {
                Ok(options) => options,
                Err(err) => return fail(&err),
            },
            Err(status) => return status,
        };
        let (kernel, process) =
            match step_kernel_and_process(kernel_json, process_json) {
                Ok(pair) => pair,
                Err(err) => return fail(&err),
            };
        match theorem8_threshold(&kernel, &process, p, &options) {
            Ok(report) => emit_json(out, &report),
            Err(err) => fail(&err),
        }
    })
}

/// Poisson tail bound at level `t` for a step kernel.
///
/// # Safety
/// Same contract as `ub_theorem8_threshold`.
#[no_mangle]
pub unsafe extern "C" fn ub_theorem8_tail_bound(
    step_kernel_json: *const c_char,
    process_json: *const c_char,
    t: f64,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let kernel_json = match unsafe { required_str(step_kernel_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let process_json = match unsafe { optional_str(process_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let options = match unsafe { optional_str(options_json) } {
            Ok(text) => match parse_options(text) {
                Ok(options) => options,
                Err(err) => return fail(&err),
            },
            Err(status) => return status,
        };
        let (kernel, process) =
            match step_kernel_and_process(kernel_json, process_json) {
                Ok(pair) => pair,
                Err(err) => return fail(&err),
            };
        match theorem8_tail_bound(&kernel, &process, t, &options) {
            Ok(report) => emit_json(out, &report),
            Err(err) => fail(&err),
        }
    })
}

/// Runs a verification experiment config. `base_dir` resolves file
/// references inside the config (null = current directory). Writes the
/// report JSON and returns `UB_STATUS_VERIFICATION_FAILED` when a gated
/// check fails; artifacts are not written to disk.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ub_run_experiment(
    config_json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let config_json = match unsafe { required_str(config_json) } {
            Ok(text) => text,
            Err(status) => return status,
        };
        let base_dir = match unsafe { optional_str(base_dir) } {
            Ok(text) => text.unwrap_or("."),
            Err(status) => return status,
        };
        let config: ExperimentConfig = match serde_json::from_str(config_json)
        {
            Ok(config) => config,
            Err(err) => return fail(&Error::from(err)),
        };
        match run_experiment(&config, Path::new(base_dir)) {
            Ok(output) => {
                let status = emit_string(out, output.report_json);
                if status != UB_STATUS_OK {
                    return status;
                }
                if output.pass {
                    UB_STATUS_OK
                } else {
                    set_error("a gated verification check failed");
                    UB_STATUS_VERIFICATION_FAILED
                }
            }
            Err(err) => fail(&err),
        }
    })
}
