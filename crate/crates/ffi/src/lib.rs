//! C ABI for `topkmon`.
//!
//! Conventions:
//! - Every fallible function returns a [`TkmStatus`]; results go through
//!   out-pointers that are written only on success.
//! - Objects are opaque handles created by `tkm_*_new`/`tkm_*_generate`/
//!   `tkm_*_load` and released by the matching `tkm_*_free`. Freeing NULL is
//!   a no-op.
//! - After a non-`TKM_STATUS_OK` return, [`tkm_last_error`] describes the
//!   failure on the calling thread.
//! - Panics never cross the boundary; they surface as `TKM_STATUS_PANIC`.
//! - Node ids are 1-based, times are 1-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use topkmon::harness::{simulate, RunConfig, TraceSource};
use topkmon::oracle::{compute_delta, opt_lower_bound};
use topkmon::protocols::InvocationKey;
use topkmon::{
    generate, lemma3_bound, load_csv, run_extremum, Error, Fabric, Family, GeneratorSpec, MessageTally, Mode,
    Monitor, MonitorConfig, NodeId, ProtocolConfig, RandomSource, Snapshot, Trace, Value,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TkmStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was out of range or inconsistent (k, n, lengths, times).
    InvalidArgument = 2,
    /// Reading or writing a file failed.
    Io = 3,
    /// Input could not be parsed (CSV trace, path encoding).
    Parse = 4,
    /// The monitor's answer disagreed with the brute-force oracle.
    OracleMismatch = 5,
    /// The caller's buffer is too small; the required length was reported.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TkmFamily {
    RandomWalk = 0,
    Uniform = 1,
    AdversarialCrossing = 2,
    Constant = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TkmMode {
    Max = 0,
    Min = 1,
}

/// Message counts per kind.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TkmTally {
    pub protocol_upload: u64,
    pub protocol_round_broadcast: u64,
    pub filter_broadcast: u64,
    pub initiation_broadcast: u64,
    pub direct_down: u64,
    pub total: u64,
}

/// Summary of one monitor step.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TkmStepReport {
    pub t: u64,
    pub violations: u64,
    pub handler_invoked: bool,
    pub reset_invoked: bool,
    pub filters_changed: bool,
    /// Messages sent during this step.
    pub messages: u64,
}

/// Result of one extremum protocol run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TkmProtocolOutcome {
    /// 1-based index into the caller's value array.
    pub winner: u32,
    pub winner_value: u64,
    pub rounds: u32,
    pub uploads: u64,
    pub round_broadcasts: u64,
}

/// Outcome of a full simulation checked against the oracle.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TkmRunSummary {
    pub tally: TkmTally,
    pub opt_lower_bound: u64,
    pub delta: u64,
    pub resets: u64,
    pub max_handlers_between_resets: u32,
    pub within_envelope: bool,
    pub passed: bool,
}

/// Opaque trace handle.
pub struct TkmTrace {
    inner: Trace,
}

/// Opaque monitor handle: the coordinator, its nodes and the message fabric.
pub struct TkmMonitor {
    monitor: Monitor,
    fabric: Fabric,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> TkmStatus {
    match err {
        Error::Io(_) => TkmStatus::Io,
        Error::Csv { .. } | Error::Json(_) => TkmStatus::Parse,
        Error::OracleMismatch { .. } => TkmStatus::OracleMismatch,
        _ => TkmStatus::InvalidArgument,
    }
}

struct Failure(TkmStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TkmStatus::NullPointer, format!("`{what}` is NULL"))
}

/// Runs `body`, converting errors and panics into a status plus last-error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TkmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TkmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            TkmStatus::Panic
        }
    }
}

unsafe fn values_arg<'a>(values: *const u64, len: usize) -> Result<&'a [Value], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if values.is_null() {
        return Err(null("values"));
    }
    Ok(slice::from_raw_parts(values, len))
}

unsafe fn out_arg<'a, T>(out: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    out.as_mut().ok_or_else(|| null(what))
}

fn tally(t: MessageTally) -> TkmTally {
    TkmTally {
        protocol_upload: t.protocol_upload,
        protocol_round_broadcast: t.protocol_round_broadcast,
        filter_broadcast: t.filter_broadcast,
        initiation_broadcast: t.initiation_broadcast,
        direct_down: t.direct_down,
        total: t.total,
    }
}

/// Message for the most recent failure on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tkm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn tkm_status_name(status: TkmStatus) -> *const c_char {
    let name: &'static CStr = match status {
        TkmStatus::Ok => c"ok",
        TkmStatus::NullPointer => c"null pointer",
        TkmStatus::InvalidArgument => c"invalid argument",
        TkmStatus::Io => c"i/o error",
        TkmStatus::Parse => c"parse error",
        TkmStatus::OracleMismatch => c"oracle mismatch",
        TkmStatus::BufferTooSmall => c"buffer too small",
        TkmStatus::Panic => c"panic",
    };
    name.as_ptr()
}

// ---------------------------------------------------------------------------
// Traces

/// Builds a trace from `t * n` values laid out row by row (time-major).
///
/// # Safety
/// `values` must point to `t * n` readable `u64`s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_new(values: *const u64, n: usize, t: usize, out: *mut *mut TkmTrace) -> TkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let len = n.checked_mul(t).ok_or_else(|| Failure(TkmStatus::InvalidArgument, "n * t overflows".into()))?;
        let values = values_arg(values, len)?;
        let rows = if n == 0 { Vec::new() } else { values.chunks(n).map(<[Value]>::to_vec).collect() };
        *out = Box::into_raw(Box::new(TkmTrace { inner: Trace::new(n, rows)? }));
        Ok(())
    })
}

/// Generates a synthetic trace with default generator parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_generate(
    family: TkmFamily,
    n: usize,
    k: usize,
    t: u64,
    seed: u64,
    out: *mut *mut TkmTrace,
) -> TkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let family = match family {
            TkmFamily::RandomWalk => Family::RandomWalk,
            TkmFamily::Uniform => Family::Uniform,
            TkmFamily::AdversarialCrossing => Family::AdversarialCrossing,
            TkmFamily::Constant => Family::Constant,
        };
        let trace = generate(&GeneratorSpec::new(family, n, k, t, seed))?;
        *out = Box::into_raw(Box::new(TkmTrace { inner: trace }));
        Ok(())
    })
}

/// Loads a `t,node,value` CSV trace.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_load(path: *const c_char, out: *mut *mut TkmTrace) -> TkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Failure(TkmStatus::Parse, format!("path is not UTF-8: {e}")))?;
        *out = Box::into_raw(Box::new(TkmTrace { inner: load_csv(Path::new(path))? }));
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_free(trace: *mut TkmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_nodes(trace: *const TkmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.n())
}

/// Number of time steps, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_len(trace: *const TkmTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies the `n` values at time `t` into `out`, which holds `cap` slots.
///
/// # Safety
/// `trace` must be a live handle; `out` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn tkm_trace_values(trace: *const TkmTrace, t: u64, out: *mut u64, cap: usize) -> TkmStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let snap = trace.inner.snapshot(t)?;
        copy_out(snap.values, out, cap, None)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, cap: usize, len: Option<&mut usize>) -> Result<(), Failure> {
    if let Some(len) = len {
        *len = src.len();
    }
    if cap < src.len() {
        return Err(Failure(TkmStatus::BufferTooSmall, format!("need {} slots, got {cap}", src.len())));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Oracle and full runs

/// Greedy lower bound on the filter updates any filter-based algorithm needs.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_oracle_lower_bound(trace: *const TkmTrace, k: usize, out: *mut u64) -> TkmStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out_arg(out, "out")?;
        *out = opt_lower_bound(&trace.inner, k)?.lower_bound;
        Ok(())
    })
}

/// Largest gap between the k-th and (k+1)-st value over the trace.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_oracle_delta(trace: *const TkmTrace, k: usize, out: *mut u64) -> TkmStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out_arg(out, "out")?;
        *out = compute_delta(&trace.inner, k)?;
        Ok(())
    })
}

/// Runs the monitor over the whole trace, checking every step against the
/// oracle. Returns `TKM_STATUS_ORACLE_MISMATCH` on a wrong answer.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_simulate(
    trace: *const TkmTrace,
    k: usize,
    seed: u64,
    out: *mut TkmRunSummary,
) -> TkmStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let out = out_arg(out, "out")?;
        let config = RunConfig {
            n: trace.inner.n(),
            k,
            t: trace.inner.len(),
            seed,
            source: TraceSource::File { path: "<ffi>".into() },
            silent_rounds: false,
        };
        let r = simulate(&trace.inner, config, false)?.report;
        *out = TkmRunSummary {
            tally: tally(r.tally),
            opt_lower_bound: r.opt_lower_bound,
            delta: r.delta,
            resets: r.resets,
            max_handlers_between_resets: r.max_handlers_between_resets,
            within_envelope: r.within_envelope,
            passed: r.passed,
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Step-by-step monitoring

/// Creates a monitor and runs the initial filter reset on `values` at t = 1.
///
/// # Safety
/// `values` must point to `n` readable `u64`s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_monitor_new(
    values: *const u64,
    n: usize,
    k: usize,
    seed: u64,
    out: *mut *mut TkmMonitor,
) -> TkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let values = values_arg(values, n)?;
        let mut fabric = Fabric::new();
        let monitor = Monitor::initialize(Snapshot { t: 1, values }, MonitorConfig::new(k, seed), &mut fabric)?;
        *out = Box::into_raw(Box::new(TkmMonitor { monitor, fabric }));
        Ok(())
    })
}

/// # Safety
/// `monitor` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tkm_monitor_free(monitor: *mut TkmMonitor) {
    if !monitor.is_null() {
        drop(Box::from_raw(monitor));
    }
}

/// Advances one time step with the nodes' new `values`.
///
/// # Safety
/// `monitor` must be a live handle; `values` must point to `n` readable
/// `u64`s; `report` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tkm_monitor_step(
    monitor: *mut TkmMonitor,
    values: *const u64,
    n: usize,
    report: *mut TkmStepReport,
) -> TkmStatus {
    guard(|| {
        let m = monitor.as_mut().ok_or_else(|| null("monitor"))?;
        let values = values_arg(values, n)?;
        let t = m.monitor.time() + 1;
        let r = m.monitor.step(Snapshot { t, values }, &mut m.fabric)?;
        if let Some(report) = report.as_mut() {
            *report = TkmStepReport {
                t: r.t,
                violations: r.violations.len() as u64,
                handler_invoked: r.handler_invoked,
                reset_invoked: r.reset_invoked,
                filters_changed: r.filters_changed,
                messages: r.tally_delta.total,
            };
        }
        Ok(())
    })
}

/// Writes the monitored top-k node ids (1-based, ascending) into `out`.
/// `len` receives k even when the buffer is too small.
///
/// # Safety
/// `monitor` must be a live handle; `out` must have room for `cap` ids;
/// `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_monitor_top_k(
    monitor: *const TkmMonitor,
    out: *mut u32,
    cap: usize,
    len: *mut usize,
) -> TkmStatus {
    guard(|| {
        let m = monitor.as_ref().ok_or_else(|| null("monitor"))?;
        let len = out_arg(len, "len")?;
        let ids: Vec<u32> = m.monitor.answer().into_iter().map(NodeId::get).collect();
        copy_out(&ids, out, cap, Some(len))
    })
}

/// Cumulative message counts, initialization included.
///
/// # Safety
/// `monitor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_monitor_tally(monitor: *const TkmMonitor, out: *mut TkmTally) -> TkmStatus {
    guard(|| {
        let m = monitor.as_ref().ok_or_else(|| null("monitor"))?;
        *out_arg(out, "out")? = tally(m.fabric.tally_snapshot());
        Ok(())
    })
}

/// Current time step, or 0 for NULL.
///
/// # Safety
/// `monitor` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tkm_monitor_time(monitor: *const TkmMonitor) -> u64 {
    monitor.as_ref().map_or(0, |m| m.monitor.time())
}

// ---------------------------------------------------------------------------
// Extremum protocol

/// Runs one extremum protocol among `len` participants holding `values`,
/// with participant bound `bound` (0 means `len`).
///
/// # Safety
/// `values` must point to `len` readable `u64`s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tkm_protocol_run(
    mode: TkmMode,
    values: *const u64,
    len: usize,
    bound: u64,
    seed: u64,
    out: *mut TkmProtocolOutcome,
) -> TkmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let values = values_arg(values, len)?;
        let mode = match mode {
            TkmMode::Max => Mode::Max,
            TkmMode::Min => Mode::Min,
        };
        let participants = values.iter().enumerate().map(|(i, &v)| (NodeId::from_index(i), v)).collect();
        let bound = if bound == 0 { len as u64 } else { bound };
        let config = ProtocolConfig::new(mode, bound, participants);
        let o = run_extremum(&config, &RandomSource::new(seed), InvocationKey { t: 0, seq: 0 }, &mut Fabric::new())?;
        *out = TkmProtocolOutcome {
            winner: o.winner.get(),
            winner_value: o.winner_value,
            rounds: o.rounds,
            uploads: o.uploads,
            round_broadcasts: o.round_broadcasts,
        };
        Ok(())
    })
}

/// Upper bound on the probability that the node of rank `rank` uploads
/// during a protocol with bound `bound`. Returns NaN for invalid input.
#[no_mangle]
pub extern "C" fn tkm_send_probability_bound(rank: u64, bound: u64) -> f64 {
    if rank == 0 || bound == 0 || rank > bound {
        return f64::NAN;
    }
    catch_unwind(|| lemma3_bound(rank, bound)).unwrap_or(f64::NAN)
}
