use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use smra_ffi::*;

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { smra_string_free(p) };
    s
}

fn last_error() -> String {
    let p = smra_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn builtin(name: &str, params: Option<SmraBuiltinParams>) -> *mut SmraScenario {
    let name = CString::new(name).unwrap();
    let mut out = ptr::null_mut();
    let p = params.as_ref().map_or(ptr::null(), |p| p as *const _);
    let st = unsafe { smra_scenario_builtin(name.as_ptr(), p, &mut out) };
    assert_eq!(st, SmraStatus::Ok, "{}", last_error());
    out
}

fn params() -> SmraBuiltinParams {
    SmraBuiltinParams {
        big_m: 0,
        k: 0,
        n: 0,
        alpha: 0,
        h: 0,
        l: 0,
        partition: ptr::null(),
    }
}

#[test]
fn bad_pair_round_trip() {
    let s = builtin("bad_pair", Some(SmraBuiltinParams { big_m: 10, ..params() }));
    assert_eq!(unsafe { smra_scenario_items(s) }, 2);
    assert_eq!(unsafe { smra_scenario_bidders(s) }, 2);

    let mut stats = ptr::null_mut();
    assert_eq!(unsafe { smra_run_trials(s, 300, 5, 2, 0, &mut stats) }, SmraStatus::Ok);
    assert_eq!(unsafe { smra_stats_trials(stats) }, 300);

    let mut opt = 0i64;
    assert_eq!(unsafe { smra_stats_optimal(stats, &mut opt) }, SmraStatus::Ok);
    assert_eq!(opt, 10);

    let event = CString::new("welfare_2").unwrap();
    let mut freq = 0.0;
    assert_eq!(
        unsafe { smra_stats_event_frequency(stats, event.as_ptr(), &mut freq) },
        SmraStatus::Ok
    );
    assert!((0.4..=0.6).contains(&freq), "{freq}");

    let (mut welfare, mut rounds) = (0i64, 0usize);
    assert_eq!(
        unsafe { smra_stats_trial(stats, 0, &mut welfare, &mut rounds) },
        SmraStatus::Ok
    );
    assert!(welfare == 2 || welfare == 10);
    assert!(rounds >= 1);
    assert_eq!(
        unsafe { smra_stats_trial(stats, 300, &mut welfare, ptr::null_mut()) },
        SmraStatus::InvalidArgument
    );
    assert!(last_error().contains("out of range"));

    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { smra_stats_to_csv(stats, &mut csv) }, SmraStatus::Ok);
    assert_eq!(take_string(csv).lines().count(), 301);

    let mut summary = ptr::null_mut();
    assert_eq!(unsafe { smra_stats_summary_json(stats, &mut summary) }, SmraStatus::Ok);
    let summary: serde_json::Value = serde_json::from_str(&take_string(summary)).unwrap();
    assert_eq!(summary["trials"], 300);
    assert_eq!(summary["freq_welfare_2"], freq);

    unsafe {
        smra_stats_free(stats);
        smra_scenario_free(s);
    }
}

#[test]
fn scenario_json_round_trip_and_oracle() {
    let s = builtin(
        "truthful_tight",
        Some(SmraBuiltinParams {
            k: 4,
            alpha: 3,
            ..params()
        }),
    );
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { smra_scenario_to_json(s, &mut text) }, SmraStatus::Ok);
    let text = CString::new(take_string(text)).unwrap();

    let mut again = ptr::null_mut();
    assert_eq!(
        unsafe { smra_scenario_from_json(text.as_ptr(), &mut again) },
        SmraStatus::Ok
    );
    let mut oracle = ptr::null_mut();
    assert_eq!(unsafe { smra_oracle_json(again, &mut oracle) }, SmraStatus::Ok);
    let oracle: serde_json::Value = serde_json::from_str(&take_string(oracle)).unwrap();
    assert_eq!(oracle["optimal"], 10);
    unsafe {
        smra_scenario_free(again);
        smra_scenario_free(s);
    }
}

#[test]
fn partition_parameter_and_analyze() {
    let parts = CString::new("0,1;2").unwrap();
    let s = builtin(
        "scripted_partition",
        Some(SmraBuiltinParams {
            partition: parts.as_ptr(),
            ..params()
        }),
    );
    let mut stats = ptr::null_mut();
    assert_eq!(unsafe { smra_run_trials(s, 3, 0, 0, 0, &mut stats) }, SmraStatus::Ok);
    let event = CString::new("partition_reproduced").unwrap();
    let mut freq = 0.0;
    assert_eq!(
        unsafe { smra_stats_event_frequency(stats, event.as_ptr(), &mut freq) },
        SmraStatus::Ok
    );
    assert_eq!(freq, 1.0);
    unsafe {
        smra_stats_free(stats);
        smra_scenario_free(s);
    }

    let v = CString::new(r#"{"form":"pair_bonus","m":2,"unit":1,"pair":100}"#).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { smra_analyze_json(v.as_ptr(), &mut report) }, SmraStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take_string(report)).unwrap();
    assert_eq!(report["alpha"], "99");
}

#[test]
fn error_codes() {
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { smra_scenario_from_json(ptr::null(), &mut s) },
        SmraStatus::NullPointer
    );
    assert!(last_error().contains("json"));

    let bad = CString::new("{").unwrap();
    assert_eq!(
        unsafe { smra_scenario_from_json(bad.as_ptr(), &mut s) },
        SmraStatus::InvalidArgument
    );
    assert!(s.is_null());

    let name = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { smra_scenario_builtin(name.as_ptr(), ptr::null(), &mut s) },
        SmraStatus::InvalidArgument
    );

    let name = CString::new("bad_pair").unwrap();
    let neg = SmraBuiltinParams { k: -1, ..params() };
    assert_eq!(
        unsafe { smra_scenario_builtin(name.as_ptr(), &neg, &mut s) },
        SmraStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { smra_scenario_builtin(name.as_ptr(), ptr::null(), ptr::null_mut()) },
        SmraStatus::NullPointer
    );

    let big = builtin(
        "truthful_tight",
        Some(SmraBuiltinParams {
            k: 17,
            l: 20,
            ..params()
        }),
    );
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { smra_oracle_json(big, &mut out) }, SmraStatus::OracleTooLarge);
    assert!(out.is_null());
    let mut stats = ptr::null_mut();
    assert_eq!(
        unsafe { smra_run_trials(big, 1, 0, 1, 0, &mut stats) },
        SmraStatus::OracleTooLarge
    );
    unsafe { smra_scenario_free(big) };

    let s = builtin("bad_pair", None);
    assert_eq!(
        unsafe { smra_run_trials(s, 0, 0, 1, 0, &mut stats) },
        SmraStatus::InvalidArgument
    );
    unsafe { smra_scenario_free(s) };

    assert_eq!(
        unsafe { smra_stats_optimal(ptr::null(), ptr::null_mut()) },
        SmraStatus::NullPointer
    );
    assert_eq!(unsafe { smra_scenario_items(ptr::null()) }, 0);
    unsafe {
        smra_scenario_free(ptr::null_mut());
        smra_stats_free(ptr::null_mut());
        smra_string_free(ptr::null_mut());
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_exported_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/smra.h")).unwrap();
    for item in [
        "typedef struct SmraScenario SmraScenario;",
        "typedef struct SmraTrialStats SmraTrialStats;",
        "SMRA_STATUS_OK = 0",
        "SMRA_STATUS_INVALID_ARGUMENT = 2",
        "SMRA_STATUS_ORACLE_TOO_LARGE = 3",
        "SMRA_STATUS_INTERNAL = 4",
        "smra_scenario_from_json(",
        "smra_scenario_builtin(",
        "smra_run_trials(",
        "smra_stats_summary_json(",
        "smra_stats_to_csv(",
        "smra_oracle_json(",
        "smra_analyze_json(",
        "smra_last_error_message(void)",
        "smra_string_free(",
    ] {
        assert!(header.contains(item), "header lacks {item}");
    }
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libsmra_ffi.a");
    lib.exists().then_some(lib)
}

fn have_cc() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_against_the_static_library() {
    if !have_cc() {
        eprintln!("no C compiler on PATH, skipping");
        return;
    }
    let lib = static_lib().expect("libsmra_ffi.a next to the test binary");
    let dir = crate_dir();
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let exe = out_dir.join("smra_smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(
        run.status.success(),
        "{}{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("optimal=10 trials=200"));
}
