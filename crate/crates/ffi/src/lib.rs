//! C ABI over the optimizer.
//!
//! Handles are opaque; every fallible call returns a [`UrisStatus`] and the
//! thread-local message of the last failure is available through
//! [`uris_last_error`]. Strings returned to the caller are released with
//! [`uris_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use uris_mec::optimizer::{Algorithm, ReportStatus, SolveReport};
use uris_mec::scenario::{default_scenario, load_scenario, to_json, ScenarioConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    InvalidArgument = 4,
    SolveFailed = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrisAlgorithm {
    MaxTotalEe = 0,
    MaxMinEe = 1,
    HeuristicTraj = 2,
    UavServer = 3,
}

impl From<UrisAlgorithm> for Algorithm {
    fn from(a: UrisAlgorithm) -> Self {
        match a {
            UrisAlgorithm::MaxTotalEe => Algorithm::MaxTotalEe,
            UrisAlgorithm::MaxMinEe => Algorithm::MaxMinEe,
            UrisAlgorithm::HeuristicTraj => Algorithm::HeuristicTraj,
            UrisAlgorithm::UavServer => Algorithm::UavServer,
        }
    }
}

/// Outer-loop outcome of a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrisRunStatus {
    Converged = 0,
    Stalled = 1,
    MaxOuter = 2,
}

/// Opaque scenario handle.
pub struct UrisScenario {
    config: ScenarioConfig,
}

/// Opaque result of one run.
pub struct UrisReport {
    report: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: UrisStatus, msg: impl Into<String>) -> UrisStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into [`UrisStatus::Panic`].
fn guard(f: impl FnOnce() -> UrisStatus) -> UrisStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(UrisStatus::Panic, "internal panic"),
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, UrisStatus> {
    p.as_ref().ok_or_else(|| fail(UrisStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> UrisStatus {
    if out.is_null() {
        return fail(UrisStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    UrisStatus::Ok
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize) -> UrisStatus {
    if len < src.len() {
        return fail(
            UrisStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    if buf.is_null() {
        return fail(UrisStatus::NullPointer, "buffer is null");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    UrisStatus::Ok
}

fn string_out(text: String, out: *mut *mut c_char) -> UrisStatus {
    match CString::new(text) {
        Ok(c) => unsafe { write_out(out, c.into_raw()) },
        Err(_) => fail(UrisStatus::InvalidArgument, "string contains NUL"),
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn uris_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uris_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn uris_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in default scenario.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_scenario_default(out: *mut *mut UrisScenario) -> UrisStatus {
    guard(|| {
        let handle = Box::into_raw(Box::new(UrisScenario {
            config: default_scenario(),
        }));
        write_out(out, handle)
    })
}

/// Parses and validates a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_scenario_from_json(json: *const c_char, out: *mut *mut UrisScenario) -> UrisStatus {
    guard(|| {
        if json.is_null() {
            return fail(UrisStatus::NullPointer, "json is null");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(UrisStatus::InvalidUtf8, e.to_string()),
        };
        match load_scenario(text) {
            Ok(config) => write_out(out, Box::into_raw(Box::new(UrisScenario { config }))),
            Err(e) => fail(UrisStatus::InvalidScenario, e.to_string()),
        }
    })
}

/// Serializes a scenario; free the result with [`uris_string_free`].
///
/// # Safety
/// `scenario` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_scenario_to_json(scenario: *const UrisScenario, out: *mut *mut c_char) -> UrisStatus {
    guard(|| match deref(scenario, "scenario") {
        Ok(s) => string_out(to_json(&s.config), out),
        Err(e) => e,
    })
}

/// # Safety
/// `scenario` must be a live handle; `users` and `slots` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_scenario_dims(
    scenario: *const UrisScenario,
    users: *mut usize,
    slots: *mut usize,
) -> UrisStatus {
    guard(|| {
        let s = match deref(scenario, "scenario") {
            Ok(s) => s,
            Err(e) => return e,
        };
        match write_out(users, s.config.num_users) {
            UrisStatus::Ok => write_out(slots, s.config.num_slots),
            e => e,
        }
    })
}

/// Changes the slot count, keeping the slot length.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn uris_scenario_set_slots(scenario: *mut UrisScenario, num_slots: usize) -> UrisStatus {
    guard(|| {
        let s = match scenario.as_mut() {
            Some(s) => s,
            None => return fail(UrisStatus::NullPointer, "scenario is null"),
        };
        let next = s.config.with_slots(num_slots);
        match next.validate() {
            Ok(()) => {
                s.config = next;
                UrisStatus::Ok
            }
            Err(e) => fail(UrisStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uris_scenario_free(scenario: *mut UrisScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one algorithm. `tol` is the relative outer-loop tolerance.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_run(
    scenario: *const UrisScenario,
    algorithm: UrisAlgorithm,
    tol: f64,
    max_outer: usize,
    out: *mut *mut UrisReport,
) -> UrisStatus {
    guard(|| {
        let s = match deref(scenario, "scenario") {
            Ok(s) => s,
            Err(e) => return e,
        };
        if out.is_null() {
            return fail(UrisStatus::NullPointer, "output pointer is null");
        }
        if !(tol > 0.0 && tol.is_finite()) || max_outer == 0 {
            return fail(UrisStatus::InvalidArgument, "tol must be positive and max_outer at least 1");
        }
        match Algorithm::from(algorithm).run(&s.config, tol, max_outer) {
            Ok(report) => write_out(out, Box::into_raw(Box::new(UrisReport { report }))),
            Err(e) => fail(UrisStatus::SolveFailed, e.to_string()),
        }
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uris_report_free(report: *mut UrisReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Energy efficiency (bits/J), total bits, weighted total energy (J).
///
/// # Safety
/// `report` must be a live handle; every non-null output valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_summary(
    report: *const UrisReport,
    ee: *mut f64,
    total_bits: *mut f64,
    total_energy: *mut f64,
) -> UrisStatus {
    guard(|| {
        let r = match deref(report, "report") {
            Ok(r) => &r.report,
            Err(e) => return e,
        };
        for (out, v) in [(ee, r.ee), (total_bits, r.total_bits()), (total_energy, r.energy.total_weighted)] {
            if !out.is_null() {
                out.write(v);
            }
        }
        UrisStatus::Ok
    })
}

/// # Safety
/// `report` must be a live handle; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_status(
    report: *const UrisReport,
    status: *mut UrisRunStatus,
    outer_iterations: *mut usize,
) -> UrisStatus {
    guard(|| {
        let r = match deref(report, "report") {
            Ok(r) => &r.report,
            Err(e) => return e,
        };
        let s = match r.status {
            ReportStatus::Converged => UrisRunStatus::Converged,
            ReportStatus::Stalled => UrisRunStatus::Stalled,
            ReportStatus::MaxOuter => UrisRunStatus::MaxOuter,
        };
        match write_out(status, s) {
            UrisStatus::Ok => write_out(outer_iterations, r.outer_iterations),
            e => e,
        }
    })
}

/// Copies the `N + 1` waypoints as interleaved `x, y` into `buf`
/// (`len` counts doubles, at least `2 (N + 1)`).
///
/// # Safety
/// `report` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_waypoints(report: *const UrisReport, buf: *mut f64, len: usize) -> UrisStatus {
    guard(|| match deref(report, "report") {
        Ok(r) => {
            let flat: Vec<f64> = r.report.trajectory.waypoints.iter().flat_map(|q| [q.x, q.y]).collect();
            copy_out(&flat, buf, len)
        }
        Err(e) => e,
    })
}

/// Copies the zero-based user served in each of the `N` slots.
///
/// # Safety
/// `report` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_schedule(report: *const UrisReport, buf: *mut u32, len: usize) -> UrisStatus {
    guard(|| match deref(report, "report") {
        Ok(r) => {
            let served: Vec<u32> = r.report.schedule.served().iter().map(|&k| k as u32).collect();
            copy_out(&served, buf, len)
        }
        Err(e) => e,
    })
}

/// Copies offloaded bits, local bits and server CPU frequency per user;
/// each buffer holds `len >= K` values.
///
/// # Safety
/// `report` must be a live handle; every buffer valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_allocation(
    report: *const UrisReport,
    l_offload: *mut f64,
    l_local: *mut f64,
    f_server: *mut f64,
    len: usize,
) -> UrisStatus {
    guard(|| {
        let a = match deref(report, "report") {
            Ok(r) => &r.report.allocation,
            Err(e) => return e,
        };
        for (src, buf) in [(&a.l_offload, l_offload), (&a.l_local, l_local), (&a.f_server, f_server)] {
            let s = copy_out(src, buf, len);
            if s != UrisStatus::Ok {
                return s;
            }
        }
        UrisStatus::Ok
    })
}

/// Number of entries in the outer-loop objective trace.
///
/// # Safety
/// `report` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_trace_len(report: *const UrisReport, out: *mut usize) -> UrisStatus {
    guard(|| match deref(report, "report") {
        Ok(r) => write_out(out, r.report.ee_trace.len()),
        Err(e) => e,
    })
}

/// # Safety
/// `report` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_trace(report: *const UrisReport, buf: *mut f64, len: usize) -> UrisStatus {
    guard(|| match deref(report, "report") {
        Ok(r) => copy_out(&r.report.ee_trace, buf, len),
        Err(e) => e,
    })
}

/// Full report as JSON; free the result with [`uris_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn uris_report_to_json(report: *const UrisReport, out: *mut *mut c_char) -> UrisStatus {
    guard(|| match deref(report, "report") {
        Ok(r) => match serde_json::to_string(&r.report) {
            Ok(text) => string_out(text, out),
            Err(e) => fail(UrisStatus::InvalidArgument, e.to_string()),
        },
        Err(e) => e,
    })
}
