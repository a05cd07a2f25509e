//! C ABI over `smra-core`.
//!
//! Scenarios and trial results are opaque handles created and released
//! through this interface. Every fallible call returns an [`SmraStatus`];
//! on failure [`smra_last_error_message`] describes the error. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`smra_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde_json::json;
use smra_core::oracle::optimal_welfare;
use smra_core::scenario::{
    build_builtin, parse_partition, run_trials, BuiltinParams, Scenario, TrialOptions, TrialStats,
};
use smra_core::{degree_of_submodularity, Error, Valuation};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OracleTooLarge = 3,
    Internal = 4,
    Panic = 5,
}

/// Opaque scenario handle.
pub struct SmraScenario(Scenario);

/// Opaque handle to the results of a batch of trials.
pub struct SmraTrialStats(TrialStats);

/// Parameters for [`smra_scenario_builtin`]. Zero leaves a parameter at its
/// default; a null `partition` likewise.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SmraBuiltinParams {
    pub big_m: i64,
    pub k: i64,
    pub n: i64,
    pub alpha: i64,
    pub h: i64,
    pub l: i64,
    /// Parts for `scripted_partition`, e.g. `"0,1;2"`.
    pub partition: *const c_char,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> SmraStatus {
    match e {
        Error::OracleTooLarge { .. } => SmraStatus::OracleTooLarge,
        Error::Internal(_) => SmraStatus::Internal,
        _ => SmraStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SmraStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            SmraStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("panic inside smra".into());
            SmraStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure::Core(Error::Internal(e.to_string())))?;
    write_out(out, c.into_raw(), "out")
}

fn opt_usize(v: i64, name: &str) -> Result<Option<usize>, Failure> {
    match v {
        0 => Ok(None),
        v if v > 0 => Ok(Some(v as usize)),
        _ => Err(Failure::Core(Error::InvalidArgument(format!(
            "{name} must be nonnegative"
        )))),
    }
}

fn opt_i64(v: i64) -> Option<i64> {
    (v != 0).then_some(v)
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn smra_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn smra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a scenario from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_scenario_from_json(json: *const c_char, out: *mut *mut SmraScenario) -> SmraStatus {
    guard(|| {
        let s = Scenario::from_json(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(SmraScenario(s))), "out")
    })
}

/// Builds a named built-in scenario.
///
/// # Safety
/// `name` must be a NUL-terminated string, `params` null or valid, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn smra_scenario_builtin(
    name: *const c_char,
    params: *const SmraBuiltinParams,
    out: *mut *mut SmraScenario,
) -> SmraStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let mut p = BuiltinParams::default();
        if let Some(c) = params.as_ref() {
            p.big_m = opt_i64(c.big_m);
            p.k = opt_usize(c.k, "k")?;
            p.n = opt_usize(c.n, "n")?;
            p.alpha = opt_i64(c.alpha);
            p.h = opt_i64(c.h);
            p.l = opt_usize(c.l, "l")?;
            if !c.partition.is_null() {
                p.partition = Some(parse_partition(read_str(c.partition, "partition")?)?);
            }
        }
        let s = build_builtin(name, &p)?;
        write_out(out, Box::into_raw(Box::new(SmraScenario(s))), "out")
    })
}

/// Serializes a scenario to JSON.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_scenario_to_json(scenario: *const SmraScenario, out: *mut *mut c_char) -> SmraStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        write_string(out, s.0.to_json()?)
    })
}

/// Number of items in the scenario, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smra_scenario_items(scenario: *const SmraScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.m)
}

/// Number of bidders in the scenario, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smra_scenario_bidders(scenario: *const SmraScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.bidders.len())
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn smra_scenario_free(scenario: *mut SmraScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Optimal welfare and an optimal assignment as JSON.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_oracle_json(scenario: *const SmraScenario, out: *mut *mut c_char) -> SmraStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        let opt = optimal_welfare(&s.0.valuations())?;
        let value = json!({ "scenario": s.0.name, "optimal": opt.welfare, "assignment": opt.assignment });
        write_string(out, value.to_string())
    })
}

/// Degree of submodularity of a valuation given as JSON.
///
/// # Safety
/// `valuation_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_analyze_json(valuation_json: *const c_char, out: *mut *mut c_char) -> SmraStatus {
    guard(|| {
        let v: Valuation = serde_json::from_str(read_str(valuation_json, "valuation_json")?)?;
        let report = degree_of_submodularity(&v)?;
        write_string(out, serde_json::to_string(&report)?)
    })
}

/// Runs `trials` independent auctions. `jobs` 0 or 1 runs serially;
/// `max_rounds` 0 uses the default cap.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_run_trials(
    scenario: *const SmraScenario,
    trials: usize,
    seed: u64,
    jobs: usize,
    max_rounds: usize,
    out: *mut *mut SmraTrialStats,
) -> SmraStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let opts = TrialOptions {
            jobs: jobs.max(1),
            max_rounds: (max_rounds > 0).then_some(max_rounds),
            capture_trace: false,
        };
        let stats = run_trials(&s.0, trials, seed, &opts)?;
        write_out(out, Box::into_raw(Box::new(SmraTrialStats(stats))), "out")
    })
}

/// Releases trial results. Null is ignored.
///
/// # Safety
/// `stats` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_free(stats: *mut SmraTrialStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Number of trials, or 0 for a null handle.
///
/// # Safety
/// `stats` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_trials(stats: *const SmraTrialStats) -> usize {
    stats.as_ref().map_or(0, |s| s.0.rows.len())
}

/// Optimal welfare of the scenario.
///
/// # Safety
/// `stats` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_optimal(stats: *const SmraTrialStats, out: *mut i64) -> SmraStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        write_out(out, s.0.optimal.welfare, "out")
    })
}

/// Welfare and round count of one trial. Either out-pointer may be null.
///
/// # Safety
/// `stats` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_trial(
    stats: *const SmraTrialStats,
    index: usize,
    welfare: *mut i64,
    rounds: *mut usize,
) -> SmraStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        let row = s.0.rows.get(index).ok_or_else(|| {
            Failure::Core(Error::InvalidArgument(format!(
                "trial {index} out of range ({} trials)",
                s.0.rows.len()
            )))
        })?;
        if !welfare.is_null() {
            welfare.write(row.welfare);
        }
        if !rounds.is_null() {
            rounds.write(row.rounds);
        }
        Ok(())
    })
}

/// Fraction of trials in which the named event held.
///
/// # Safety
/// `stats` must be a live handle, `event` a NUL-terminated string, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_event_frequency(
    stats: *const SmraTrialStats,
    event: *const c_char,
    out: *mut f64,
) -> SmraStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        let name = read_str(event, "event")?;
        let freq =
            s.0.aggregates
                .event_frequencies
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, f)| *f)
                .ok_or_else(|| Failure::Core(Error::InvalidArgument(format!("unknown event {name}"))))?;
        write_out(out, freq, "out")
    })
}

/// One CSV row per trial, with a header line.
///
/// # Safety
/// `stats` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_to_csv(stats: *const SmraTrialStats, out: *mut *mut c_char) -> SmraStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        write_string(out, s.0.to_csv_string()?)
    })
}

/// Aggregate summary as JSON.
///
/// # Safety
/// `stats` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smra_stats_summary_json(stats: *const SmraTrialStats, out: *mut *mut c_char) -> SmraStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        write_string(out, s.0.summary().to_string())
    })
}
