//! C interface over the detection pipeline. Profiles travel as opaque
//! handles, traces and decision logs as files, and every function
//! returns a status code; the message behind the most recent failure on
//! the calling thread comes from `dfs_last_error`.
//!
//! The canonical declarations live in `include/dfsense.h`; struct
//! layouts here must stay field-for-field identical with that header.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, c_double, c_int, size_t};

use dfsense::detect::{self, DetectorParams};
use dfsense::eval::{self, AlarmChannel};
use dfsense::io;
use dfsense::profile::{build_profile, load_bundle, save_bundle, FeatureKind, NormalProfile};
use dfsense::trace::{self, StreamId};
use dfsense::Error;

pub const DFS_OK: c_int = 0;
/// A required pointer was null.
pub const DFS_ERR_NULL_ARG: c_int = 1;
/// A parameter, path encoding, or configuration value was rejected.
pub const DFS_ERR_INVALID: c_int = 2;
/// The underlying file operation failed.
pub const DFS_ERR_IO: c_int = 3;
/// Input parsed but was malformed, inconsistent, or too short.
pub const DFS_ERR_DATA: c_int = 4;
/// Internal failure; the library state is still consistent.
pub const DFS_ERR_PANIC: c_int = 5;

pub const DFS_FEATURE_VARIANCE: c_int = 0;
pub const DFS_FEATURE_STDDEV: c_int = 1;
pub const DFS_FEATURE_MEAN: c_int = 2;

/// Opaque collection of per-stream silence profiles.
pub struct DfsProfiles(BTreeMap<StreamId, NormalProfile>);

/// Mirror of the engine's detector parameters. `feature` takes the
/// DFS_FEATURE_* codes; `update_enabled` is 0 or 1.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct DfsDetectorParams {
    pub l: size_t,
    pub alpha: c_double,
    pub l_update: size_t,
    pub update_enabled: c_int,
    pub beta: c_double,
    pub rel_threshold: c_double,
    pub feature: c_int,
    pub rate_hz: c_double,
    pub warmup_ticks: size_t,
    pub level_coeff: c_double,
    pub onset_window_ticks: size_t,
    pub monitor_start_t: c_double,
}

#[repr(C)]
#[derive(Clone, Copy, Default)]
pub struct DfsRunStats {
    pub decisions: u64,
    pub basic_alarms: u64,
    pub refined_alarms: u64,
}

/// `latency_p90_s` is NaN when no motion interval was detected.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct DfsEvalSummary {
    pub precision: c_double,
    pub recall: c_double,
    pub f_measure: c_double,
    pub fp_rate: c_double,
    pub fn_rate: c_double,
    pub latency_p90_s: c_double,
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn fail(code: c_int, msg: &str) -> c_int {
    set_error(msg);
    code
}

fn code_of(e: &Error) -> c_int {
    match e {
        Error::Io { .. } => DFS_ERR_IO,
        Error::InvalidParam(_) | Error::Config(_) => DFS_ERR_INVALID,
        _ => DFS_ERR_DATA,
    }
}

fn fail_err(e: &Error) -> c_int {
    fail(code_of(e), &e.to_string())
}

/// Shields the C boundary from unwinding.
fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(DFS_ERR_PANIC, "internal panic"),
    }
}

/// Borrows a UTF-8 path or string argument.
///
/// # Safety
/// `p` must be null or a NUL-terminated string valid for the call.
unsafe fn utf8_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, c_int> {
    if p.is_null() {
        return Err(fail(DFS_ERR_NULL_ARG, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DFS_ERR_INVALID, &format!("{what} is not valid UTF-8")))
}

fn feature_kind(code: c_int) -> Result<FeatureKind, c_int> {
    match code {
        DFS_FEATURE_VARIANCE => Ok(FeatureKind::Variance),
        DFS_FEATURE_STDDEV => Ok(FeatureKind::StdDev),
        DFS_FEATURE_MEAN => Ok(FeatureKind::Mean),
        other => Err(fail(DFS_ERR_INVALID, &format!("unknown feature code {other}"))),
    }
}

fn engine_params(c: &DfsDetectorParams) -> Result<DetectorParams, c_int> {
    Ok(DetectorParams {
        l: c.l,
        alpha: c.alpha,
        l_update: c.l_update,
        update_enabled: c.update_enabled != 0,
        beta: c.beta,
        rel_threshold: c.rel_threshold,
        feature: feature_kind(c.feature)?,
        rate_hz: c.rate_hz,
        warmup_ticks: c.warmup_ticks,
        level_coeff: c.level_coeff,
        onset_window_ticks: c.onset_window_ticks,
        monitor_start_t: c.monitor_start_t,
    })
}

/// Message behind the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dfs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fills `out` with the engine defaults.
///
/// # Safety
/// `out` must be null or point to writable memory for one struct.
#[no_mangle]
pub unsafe extern "C" fn dfs_detector_params_default(out: *mut DfsDetectorParams) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(DFS_ERR_NULL_ARG, "out is null");
        }
        let d = DetectorParams::default();
        *out = DfsDetectorParams {
            l: d.l,
            alpha: d.alpha,
            l_update: d.l_update,
            update_enabled: d.update_enabled as c_int,
            beta: d.beta,
            rel_threshold: d.rel_threshold,
            feature: match d.feature {
                FeatureKind::Variance => DFS_FEATURE_VARIANCE,
                FeatureKind::StdDev => DFS_FEATURE_STDDEV,
                FeatureKind::Mean => DFS_FEATURE_MEAN,
            },
            rate_hz: d.rate_hz,
            warmup_ticks: d.warmup_ticks,
            level_coeff: d.level_coeff,
            onset_window_ticks: d.onset_window_ticks,
            monitor_start_t: d.monitor_start_t,
        };
        DFS_OK
    })
}

/// Trains one profile per stream from the trace slice
/// `[train_start, train_end)` and hands ownership to the caller.
///
/// # Safety
/// `trace_path` must be a NUL-terminated string, `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn dfs_profiles_train(
    trace_path: *const c_char,
    train_start: c_double,
    train_end: c_double,
    l: size_t,
    alpha: c_double,
    feature: c_int,
    out: *mut *mut DfsProfiles,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(DFS_ERR_NULL_ARG, "out is null");
        }
        let path = match utf8_arg(trace_path, "trace_path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        let kind = match feature_kind(feature) {
            Ok(k) => k,
            Err(code) => return code,
        };
        let trace = match trace::load_trace(Path::new(path)) {
            Ok(t) => t,
            Err(e) => return fail_err(&e),
        };
        let train = trace.slice(train_start, train_end);
        let mut profiles = BTreeMap::new();
        for id in trace.stream_ids() {
            match build_profile(&train, id, l, alpha, kind) {
                Ok(p) => profiles.insert(id.clone(), p),
                Err(e) => return fail_err(&e),
            };
        }
        if profiles.is_empty() {
            return fail(DFS_ERR_DATA, &format!("no streams in {path}"));
        }
        *out = Box::into_raw(Box::new(DfsProfiles(profiles)));
        DFS_OK
    })
}

/// Loads a profile bundle written by `dfs_profiles_save` or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn dfs_profiles_load(
    path: *const c_char,
    out: *mut *mut DfsProfiles,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(DFS_ERR_NULL_ARG, "out is null");
        }
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        match load_bundle(Path::new(path)) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(DfsProfiles(p)));
                DFS_OK
            }
            Err(e) => fail_err(&e),
        }
    })
}

/// # Safety
/// `profiles` must come from this library; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dfs_profiles_save(
    profiles: *const DfsProfiles,
    path: *const c_char,
) -> c_int {
    guarded(|| {
        if profiles.is_null() {
            return fail(DFS_ERR_NULL_ARG, "profiles is null");
        }
        let path = match utf8_arg(path, "path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        match save_bundle(Path::new(path), &(*profiles).0) {
            Ok(()) => DFS_OK,
            Err(e) => fail_err(&e),
        }
    })
}

/// Number of streams covered; 0 for null.
///
/// # Safety
/// `profiles` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn dfs_profiles_count(profiles: *const DfsProfiles) -> size_t {
    if profiles.is_null() {
        return 0;
    }
    (*profiles).0.len()
}

/// Anomaly score of one feature value under a stream's profile; >= 1
/// means anomalous.
///
/// # Safety
/// Pointer arguments as in `dfs_profiles_save`; `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn dfs_profiles_score(
    profiles: *const DfsProfiles,
    stream: *const c_char,
    value: c_double,
    out_score: *mut c_double,
) -> c_int {
    guarded(|| {
        if profiles.is_null() || out_score.is_null() {
            return fail(DFS_ERR_NULL_ARG, "profiles or out_score is null");
        }
        let name = match utf8_arg(stream, "stream") {
            Ok(s) => s,
            Err(code) => return code,
        };
        let id: StreamId = match name.parse() {
            Ok(id) => id,
            Err(e) => return fail_err(&e),
        };
        match (*profiles).0.get(&id) {
            Some(p) => {
                *out_score = p.score(value);
                DFS_OK
            }
            None => fail(DFS_ERR_DATA, &format!("no profile for stream {name}")),
        }
    })
}

/// # Safety
/// `profiles` must be null or an owned handle from this library; it is
/// invalid after this call.
#[no_mangle]
pub unsafe extern "C" fn dfs_profiles_free(profiles: *mut DfsProfiles) {
    if !profiles.is_null() {
        drop(Box::from_raw(profiles));
    }
}

/// Runs the full pipeline over a trace file. `decisions_out` and
/// `verdicts_out` receive JSONL when non-null; `updated_out` receives
/// the post-update profiles; `stats` receives row and alarm counts.
///
/// # Safety
/// String arguments NUL-terminated; out pointers null or writable;
/// `profiles` from this library.
#[no_mangle]
pub unsafe extern "C" fn dfs_run_trace(
    trace_path: *const c_char,
    profiles: *const DfsProfiles,
    params: *const DfsDetectorParams,
    decisions_out: *const c_char,
    verdicts_out: *const c_char,
    updated_out: *mut *mut DfsProfiles,
    stats: *mut DfsRunStats,
) -> c_int {
    guarded(|| {
        if profiles.is_null() || params.is_null() {
            return fail(DFS_ERR_NULL_ARG, "profiles or params is null");
        }
        let path = match utf8_arg(trace_path, "trace_path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        let engine = match engine_params(&*params) {
            Ok(p) => p,
            Err(code) => return code,
        };
        let trace = match trace::load_trace(Path::new(path)) {
            Ok(t) => t,
            Err(e) => return fail_err(&e),
        };
        let out = match detect::run(&trace, &(*profiles).0, &engine) {
            Ok(o) => o,
            Err(e) => return fail_err(&e),
        };
        if !decisions_out.is_null() {
            let p = match utf8_arg(decisions_out, "decisions_out") {
                Ok(p) => p,
                Err(code) => return code,
            };
            if let Err(e) = io::write_jsonl(Path::new(p), &out.decisions) {
                return fail_err(&e);
            }
        }
        if !verdicts_out.is_null() {
            let p = match utf8_arg(verdicts_out, "verdicts_out") {
                Ok(p) => p,
                Err(code) => return code,
            };
            if let Err(e) = io::write_jsonl(Path::new(p), &out.verdicts) {
                return fail_err(&e);
            }
        }
        if !stats.is_null() {
            *stats = DfsRunStats {
                decisions: out.decisions.len() as u64,
                basic_alarms: out.decisions.iter().filter(|d| d.basic_alarm).count() as u64,
                refined_alarms: out.decisions.iter().filter(|d| d.refined_alarm).count() as u64,
            };
        }
        if !updated_out.is_null() {
            *updated_out = Box::into_raw(Box::new(DfsProfiles(out.final_profiles)));
        }
        DFS_OK
    })
}

/// Scores a decision log against a label file. `refined_channel`
/// selects the refined (1) or basic (0) alarm stream.
///
/// # Safety
/// String arguments NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dfs_eval_decisions(
    decisions_path: *const c_char,
    labels_path: *const c_char,
    refined_channel: c_int,
    out: *mut DfsEvalSummary,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(DFS_ERR_NULL_ARG, "out is null");
        }
        let dp = match utf8_arg(decisions_path, "decisions_path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        let lp = match utf8_arg(labels_path, "labels_path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        let decisions: Vec<detect::GlobalDecision> = match io::read_jsonl(Path::new(dp)) {
            Ok(d) => d,
            Err(e) => return fail_err(&e),
        };
        let labels = match trace::load_labels(Path::new(lp)) {
            Ok(l) => l,
            Err(e) => return fail_err(&e),
        };
        let channel =
            if refined_channel != 0 { AlarmChannel::Refined } else { AlarmChannel::Basic };
        let alarms = eval::decision_alarms(&decisions, channel);
        let report = match eval::score(&alarms, &labels, "capi") {
            Ok(r) => r,
            Err(e) => return fail_err(&e),
        };
        *out = DfsEvalSummary {
            precision: report.precision,
            recall: report.recall,
            f_measure: report.f_measure,
            fp_rate: report.fp_rate,
            fn_rate: report.fn_rate,
            latency_p90_s: report.latency_p90_s.unwrap_or(f64::NAN),
            true_pos: report.counts.tp as u64,
            false_pos: report.counts.fp as u64,
            true_neg: report.counts.tn as u64,
            false_neg: report.counts.fn_ as u64,
        };
        DFS_OK
    })
}
