use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ccfair_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ccf_last_error();
    assert!(!p.is_null(), "a failing call must leave a message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(k: usize, l: usize, seed: u64) -> *mut CcfScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ccf_scenario_generate(k, l, 4.0, 1.0, seed, &mut s) }, CcfStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn generate_solve_and_read_back() {
    let s = scenario(8, 6, 3);
    let (mut k, mut l) = (0, 0);
    assert_eq!(unsafe { ccf_scenario_dims(s, &mut k, &mut l) }, CcfStatus::Ok);
    assert_eq!((k, l), (8, 6));

    let mut r = ptr::null_mut();
    let alpha = cstr("0");
    assert_eq!(unsafe { ccf_solve(s, 2, alpha.as_ptr(), ptr::null(), 3, &mut r) }, CcfStatus::Ok);
    assert!(ccf_last_error().is_null());

    let mut m = CcfMetrics::default();
    assert_eq!(unsafe { ccf_report_metrics(r, &mut m) }, CcfStatus::Ok);
    assert_eq!((m.case_id, m.num_users, m.num_subnetworks), (1, 8, 2));
    assert!(m.fairness_index >= 0.5 && m.fairness_index <= 1.0 + 1e-12);

    let mut users = vec![usize::MAX; 8];
    assert_eq!(unsafe { ccf_report_user_assignment(r, users.as_mut_ptr(), users.len()) }, CcfStatus::Ok);
    assert!(users.iter().all(|&u| u < 2));
    assert!((0..2).all(|j| users.contains(&j)), "every subnetwork has a user");

    let mut caps = [0.0; 2];
    assert_eq!(unsafe { ccf_report_capacities(r, caps.as_mut_ptr(), 2) }, CcfStatus::Ok);
    assert!((caps.iter().sum::<f64>() - m.c_sum).abs() < 1e-9);
    assert!((caps.iter().copied().fold(f64::INFINITY, f64::min) - m.c_min).abs() < 1e-12);

    unsafe {
        ccf_report_free(r);
        ccf_scenario_free(s);
    }
}

#[test]
fn solver_settings_are_parsed() {
    let s = scenario(6, 4, 1);
    let mut r = ptr::null_mut();
    let (alpha, settings) = (cstr("inf"), cstr("t_a = 20"));
    assert_eq!(unsafe { ccf_solve(s, 2, alpha.as_ptr(), settings.as_ptr(), 1, &mut r) }, CcfStatus::Ok);
    let mut m = CcfMetrics::default();
    assert_eq!(unsafe { ccf_report_metrics(r, &mut m) }, CcfStatus::Ok);
    assert_eq!(m.case_id, 4);
    unsafe { ccf_report_free(r) };

    let bad = cstr("no_such_field = 1");
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { ccf_solve(s, 2, alpha.as_ptr(), bad.as_ptr(), 1, &mut r) }, CcfStatus::Parse);
    assert!(r.is_null());
    assert!(last_error().contains("no_such_field"));
    unsafe { ccf_scenario_free(s) };
}

#[test]
fn error_codes() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ccf_scenario_generate(0, 4, 4.0, 1.0, 0, &mut s) }, CcfStatus::InvalidArgument);
    assert!(s.is_null());
    assert!(last_error().contains("k_users"));

    assert_eq!(unsafe { ccf_scenario_generate(3, 4, 4.0, 1.0, 0, ptr::null_mut()) }, CcfStatus::NullPointer);

    let mut case = 0;
    let bad = cstr("1.5.2");
    assert_ne!(unsafe { ccf_classify_alpha(bad.as_ptr(), &mut case) }, CcfStatus::Ok);

    // More subnetworks than users.
    let s = scenario(2, 4, 0);
    let mut r = ptr::null_mut();
    let alpha = cstr("0");
    assert_eq!(unsafe { ccf_solve(s, 3, alpha.as_ptr(), ptr::null(), 0, &mut r) }, CcfStatus::Infeasible);

    // Buffer too small.
    assert_eq!(unsafe { ccf_solve(s, 2, alpha.as_ptr(), ptr::null(), 0, &mut r) }, CcfStatus::Ok);
    let mut one = [0usize; 1];
    assert_eq!(unsafe { ccf_report_user_assignment(r, one.as_mut_ptr(), 1) }, CcfStatus::BufferTooSmall);
    unsafe {
        ccf_report_free(r);
        ccf_scenario_free(s);
        ccf_scenario_free(ptr::null_mut());
        ccf_report_free(ptr::null_mut());
    }
}

#[test]
fn classify_alpha_cases() {
    for (alpha, expected) in [("0", 1), ("4", 1), ("3", 2), ("1", 3), ("1/2", 3), ("inf", 4)] {
        let a = cstr(alpha);
        let mut case = 0;
        assert_eq!(unsafe { ccf_classify_alpha(a.as_ptr(), &mut case) }, CcfStatus::Ok);
        assert_eq!(case, expected, "alpha = {alpha}");
    }
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("layout.json").to_str().unwrap());
    let s = scenario(5, 4, 9);
    assert_eq!(unsafe { ccf_scenario_save(s, path.as_ptr()) }, CcfStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ccf_scenario_load(path.as_ptr(), &mut back) }, CcfStatus::Ok);

    let alpha = cstr("3");
    let users = |sc| {
        let mut r = ptr::null_mut();
        assert_eq!(unsafe { ccf_solve(sc, 2, alpha.as_ptr(), ptr::null(), 9, &mut r) }, CcfStatus::Ok);
        let mut u = vec![0usize; 5];
        assert_eq!(unsafe { ccf_report_user_assignment(r, u.as_mut_ptr(), 5) }, CcfStatus::Ok);
        unsafe { ccf_report_free(r) };
        u
    };
    assert_eq!(users(s), users(back));

    let missing = cstr(dir.path().join("missing.json").to_str().unwrap());
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { ccf_scenario_load(missing.as_ptr(), &mut none) }, CcfStatus::Io);
    unsafe {
        ccf_scenario_free(s);
        ccf_scenario_free(back);
    }
}

fn header_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("ccfair.h")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    for name in [
        "ccf_last_error",
        "ccf_version",
        "ccf_scenario_generate",
        "ccf_scenario_load",
        "ccf_scenario_save",
        "ccf_scenario_dims",
        "ccf_scenario_free",
        "ccf_classify_alpha",
        "ccf_solve",
        "ccf_report_metrics",
        "ccf_report_user_assignment",
        "ccf_report_capacities",
        "ccf_report_free",
        "CCF_STATUS_BUFFER_TOO_SMALL",
        "typedef struct CcfScenario CcfScenario;",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a C program against the static library when a C
/// compiler is available.
#[test]
fn c_program_links_against_static_library() {
    let target_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target_dir.join("libccfair_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or no static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "ccfair.h"

int main(void) {
    CcfScenario *s = NULL;
    CcfReport *r = NULL;
    CcfMetrics m;
    size_t users[6];
    if (ccf_scenario_generate(6, 4, 4.0, 1.0, 5, &s) != CCF_STATUS_OK) return 1;
    if (ccf_solve(s, 2, "1", NULL, 5, &r) != CCF_STATUS_OK) return 2;
    if (ccf_report_metrics(r, &m) != CCF_STATUS_OK || m.case_id != 3) return 3;
    if (ccf_report_user_assignment(r, users, 6) != CCF_STATUS_OK) return 4;
    if (ccf_solve(s, 9, "1", NULL, 5, &r) != CCF_STATUS_INFEASIBLE || ccf_last_error() == NULL) return 5;
    printf("%s %.6f\n", ccf_version(), m.c_sum);
    ccf_report_free(r);
    ccf_scenario_free(s);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C program failed to compile or link");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with(env!("CARGO_PKG_VERSION")));
}
