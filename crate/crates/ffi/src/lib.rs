//! C ABI over the etpoisson solver.
//!
//! Instances, configurations and reports are opaque heap handles created and
//! freed through this API. Every fallible function returns an [`EtpStatus`];
//! on failure a message is available from [`etp_last_error_message`] on the
//! same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use etpoisson::comm::DelayModel;
use etpoisson::event::EventParams;
use etpoisson::grid::ProblemInstance;
use etpoisson::problems::{bubble_instance, manufactured_instance, read_instance, BubbleSpec};
use etpoisson::runner::{run, Backend, PolicyKind, RunConfig, RunError, RunReport};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidInstance = 3,
    InvalidConfig = 4,
    /// The iteration blew up; the configuration is unstable for the instance.
    Diverged = 5,
    /// The requested value does not exist for this run, such as virtual
    /// time on the threaded backend.
    NotApplicable = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtpPolicy {
    Sync = 0,
    Async = 1,
    Event = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtpBackend {
    Virtual = 0,
    Threads = 1,
}

pub struct EtpInstance(ProblemInstance);

pub struct EtpConfig(RunConfig);

pub struct EtpReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (EtpStatus, String);

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EtpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EtpStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EtpStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    (EtpStatus::NullArgument, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| (EtpStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

fn run_failure(e: RunError) -> Failure {
    let status = match e {
        RunError::Diverged { .. } => EtpStatus::Diverged,
        RunError::Grid(_) | RunError::Event(_) | RunError::Conv(_) | RunError::Config(_) => EtpStatus::InvalidConfig,
        RunError::Comm(_) | RunError::ThreadPanic => EtpStatus::Internal,
    };
    (status, e.to_string())
}

/// Message for the last failing call on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn etp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn etp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Periodic unit-density instance with a known discrete solution.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn etp_instance_manufactured(nx: usize, ny: usize, out: *mut *mut EtpInstance) -> EtpStatus {
    guard(|| {
        let inst = manufactured_instance(nx, ny).map_err(|e| (EtpStatus::InvalidInstance, e.to_string()))?;
        put(out, EtpInstance(inst))
    })
}

/// Three bubbles at a 1000:1 density ratio with a seeded right-hand side.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn etp_instance_bubble(
    nx: usize,
    ny: usize,
    dt: f64,
    seed: u64,
    out: *mut *mut EtpInstance,
) -> EtpStatus {
    guard(|| {
        if nx == 0 {
            return Err((EtpStatus::InvalidInstance, "nx must be positive".into()));
        }
        let spec = BubbleSpec::default_for(1.0, ny as f64 / nx as f64);
        let inst = bubble_instance(nx, ny, &spec, dt, seed).map_err(|e| (EtpStatus::InvalidInstance, e.to_string()))?;
        put(out, EtpInstance(inst))
    })
}

/// Parses and validates an instance serialized as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn etp_instance_from_json(json: *const c_char, out: *mut *mut EtpInstance) -> EtpStatus {
    guard(|| {
        let s = text(json, "json")?;
        let inst = read_instance(s.as_bytes()).map_err(|e| (EtpStatus::InvalidInstance, e.to_string()))?;
        put(out, EtpInstance(inst))
    })
}

/// Number of cells, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_instance_cells(inst: *const EtpInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.cells())
}

/// # Safety
/// `inst` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etp_instance_free(inst: *mut EtpInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Default configuration: 8 PEs, asynchronous, virtual backend.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn etp_config_new(out: *mut *mut EtpConfig) -> EtpStatus {
    guard(|| put(out, EtpConfig(RunConfig::default())))
}

/// Parses a full configuration serialized as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn etp_config_from_json(json: *const c_char, out: *mut *mut EtpConfig) -> EtpStatus {
    guard(|| {
        let s = text(json, "json")?;
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| (EtpStatus::InvalidConfig, e.to_string()))?;
        put(out, EtpConfig(cfg))
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_pes(cfg: *mut EtpConfig, n_pes: usize) -> EtpStatus {
    guard(|| {
        if n_pes == 0 {
            return Err((EtpStatus::InvalidArgument, "at least one PE is required".into()));
        }
        get_mut(cfg, "cfg")?.0.n_pes = n_pes;
        Ok(())
    })
}

/// Selects a policy. `Event` uses default threshold parameters until
/// [`etp_config_set_event`] is called.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_policy(cfg: *mut EtpConfig, policy: EtpPolicy) -> EtpStatus {
    guard(|| {
        let cfg = get_mut(cfg, "cfg")?;
        cfg.0.policy = match policy {
            EtpPolicy::Sync => PolicyKind::Synchronous,
            EtpPolicy::Async => PolicyKind::Asynchronous,
            EtpPolicy::Event => PolicyKind::EventTriggered(cfg.0.policy.event_params().copied().unwrap_or_default()),
        };
        Ok(())
    })
}

/// Switches to the event-triggered policy with the given horizon, decay and
/// warm-up length.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_event(cfg: *mut EtpConfig, horizon: f64, decay: f64, warmup: u64) -> EtpStatus {
    guard(|| {
        let cfg = get_mut(cfg, "cfg")?;
        let params = EventParams {
            horizon,
            decay,
            warmup,
            ..EventParams::default()
        };
        params.validate().map_err(|e| (EtpStatus::InvalidArgument, e.to_string()))?;
        cfg.0.policy = PolicyKind::EventTriggered(params);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_backend(cfg: *mut EtpConfig, backend: EtpBackend) -> EtpStatus {
    guard(|| {
        get_mut(cfg, "cfg")?.0.backend = match backend {
            EtpBackend::Virtual => Backend::Virtual,
            EtpBackend::Threads => Backend::Threads,
        };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_omega(cfg: *mut EtpConfig, omega: f64) -> EtpStatus {
    guard(|| {
        if !(omega > 0.0 && omega < 2.0) {
            return Err((EtpStatus::InvalidArgument, format!("omega must lie in (0, 2), got {omega}")));
        }
        get_mut(cfg, "cfg")?.0.omega = omega;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_tol(cfg: *mut EtpConfig, tol: f64) -> EtpStatus {
    guard(|| {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err((EtpStatus::InvalidArgument, format!("tolerance must be positive, got {tol}")));
        }
        get_mut(cfg, "cfg")?.0.tol = tol;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_seed(cfg: *mut EtpConfig, seed: u64) -> EtpStatus {
    guard(|| {
        get_mut(cfg, "cfg")?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_step_limit(cfg: *mut EtpConfig, limit: u64) -> EtpStatus {
    guard(|| {
        get_mut(cfg, "cfg")?.0.step_limit = limit;
        Ok(())
    })
}

/// Uses randomized compute and latency delays instead of unit compute and
/// instant delivery.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_jitter(cfg: *mut EtpConfig, jitter: bool) -> EtpStatus {
    guard(|| {
        let cfg = get_mut(cfg, "cfg")?;
        let mut delays = if jitter {
            DelayModel::jittered()
        } else {
            DelayModel::zero_latency()
        };
        delays.slow = std::mem::take(&mut cfg.0.delays.slow);
        delays.tick_us = cfg.0.delays.tick_us;
        cfg.0.delays = delays;
        Ok(())
    })
}

/// Multiplies the compute delay of PE `pe` by `factor`.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_slow_pe(cfg: *mut EtpConfig, pe: usize, factor: u64) -> EtpStatus {
    guard(|| {
        if factor == 0 {
            return Err((EtpStatus::InvalidArgument, "slow-down factor must be at least 1".into()));
        }
        let cfg = get_mut(cfg, "cfg")?;
        cfg.0.delays = std::mem::take(&mut cfg.0.delays).with_slow(pe, factor);
        Ok(())
    })
}

/// Microseconds of sleep per unit of delay in the threaded backend.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_config_set_tick_us(cfg: *mut EtpConfig, tick_us: u64) -> EtpStatus {
    guard(|| {
        get_mut(cfg, "cfg")?.0.delays.tick_us = tick_us;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etp_config_free(cfg: *mut EtpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Solves `inst` under `cfg`. A run that hits the step limit still returns
/// `Ok` with a report whose `passed` flag is false.
///
/// # Safety
/// `inst` and `cfg` must be live handles; `out` must be valid for a pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn etp_run(inst: *const EtpInstance, cfg: *const EtpConfig, out: *mut *mut EtpReport) -> EtpStatus {
    guard(|| {
        let inst = get(inst, "inst")?;
        let cfg = get(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = run(&inst.0, &cfg.0).map_err(run_failure)?;
        put(out, EtpReport(report))
    })
}

/// Terminated normally with the assembled relative residual below
/// tolerance. False for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn etp_report_passed(report: *const EtpReport) -> bool {
    report.as_ref().is_some_and(|r| r.0.passed())
}

/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn etp_report_final_residual(report: *const EtpReport, out: *mut f64) -> EtpStatus {
    guard(|| {
        let r = get(report, "report")?;
        *get_mut(out, "out")? = r.0.final_relative_residual;
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn etp_report_total_halo_messages(report: *const EtpReport, out: *mut u64) -> EtpStatus {
    guard(|| {
        let r = get(report, "report")?;
        *get_mut(out, "out")? = r.0.total_halo_messages;
        Ok(())
    })
}

/// Virtual completion time; `NotApplicable` on the threaded backend.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn etp_report_virtual_time(report: *const EtpReport, out: *mut u64) -> EtpStatus {
    guard(|| {
        let r = get(report, "report")?;
        let t = r.0.virtual_time.ok_or((EtpStatus::NotApplicable, "no virtual time for this run".into()))?;
        *get_mut(out, "out")? = t;
        Ok(())
    })
}

/// Wall time in milliseconds; `NotApplicable` on the virtual backend.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn etp_report_wall_time_ms(report: *const EtpReport, out: *mut f64) -> EtpStatus {
    guard(|| {
        let r = get(report, "report")?;
        let t = r.0.wall_time_ms.ok_or((EtpStatus::NotApplicable, "no wall time for this run".into()))?;
        *get_mut(out, "out")? = t;
        Ok(())
    })
}

/// Copies the solution, row-major, into `buf`. `len` is the capacity of
/// `buf` in values; the needed length is always written to `needed` when it
/// is non-null, and `BufferTooSmall` is returned if `len` falls short.
///
/// # Safety
/// `report` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn etp_report_solution(
    report: *const EtpReport,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> EtpStatus {
    guard(|| {
        let r = get(report, "report")?;
        let n = r.0.solution.len();
        if let Some(needed) = needed.as_mut() {
            *needed = n;
        }
        if len < n {
            return Err((EtpStatus::BufferTooSmall, format!("solution needs {n} values, buffer holds {len}")));
        }
        if n > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, n).copy_from_slice(&r.0.solution);
        }
        Ok(())
    })
}

/// Serializes the whole report as JSON. Free the string with
/// [`etp_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn etp_report_to_json(report: *const EtpReport, out: *mut *mut c_char) -> EtpStatus {
    guard(|| {
        let r = get(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = serde_json::to_string(&r.0).map_err(|e| (EtpStatus::Internal, e.to_string()))?;
        let c = CString::new(json).map_err(|e| (EtpStatus::Internal, e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etp_report_free(report: *mut EtpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from [`etp_report_to_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
