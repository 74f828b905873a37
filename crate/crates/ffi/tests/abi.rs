//! Calls through the C ABI from Rust, plus a C program compiled against the
//! generated header.

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mdimlab_ffi::*;

fn last_error() -> String {
    let p = mdim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn doubling_map_and_counts() {
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(mdim_system_doubling(1, &mut sys), MdimStatus::Ok);
        assert_eq!(mdim_system_dim(sys), 1);
        let mut y = [0.0];
        assert_eq!(
            mdim_system_apply(sys, [0.375].as_ptr(), y.as_mut_ptr(), 1),
            MdimStatus::Ok
        );
        assert_eq!(y[0], 0.75);
        // 0.1 and 0.15 double apart: 0.05, 0.1, 0.2
        let mut d = 0.0;
        assert_eq!(
            mdim_dyn_distance(sys, 3, [0.1].as_ptr(), [0.15].as_ptr(), 1, &mut d),
            MdimStatus::Ok
        );
        assert!((d - 0.2).abs() < 1e-12, "{d}");
        // dyadic lattice: 2^(m + j - 1) separated points at eps 2^-j
        let mut count = 0;
        assert_eq!(
            mdim_separated_count_lattice(sys, 1 << 12, 4, 1.0 / 32.0, &mut count),
            MdimStatus::Ok
        );
        assert_eq!(count, 1 << 8);
        let pts = [0.0, 0.25, 0.5, 0.75];
        assert_eq!(
            mdim_separated_count_points(sys, pts.as_ptr(), 4, 1, 1, 0.3, &mut count),
            MdimStatus::Ok
        );
        assert_eq!(count, 2);
        mdim_system_free(sys);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(mdim_system_doubling(0, &mut sys), MdimStatus::InvalidParams);
        assert!(sys.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(mdim_system_cat_map(ptr::null_mut()), MdimStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(mdim_system_cat_map(&mut sys), MdimStatus::Ok);
        assert!(mdim_last_error().is_null());
        let mut y = [0.0; 3];
        assert_eq!(
            mdim_system_apply(sys, [0.1, 0.2, 0.3].as_ptr(), y.as_mut_ptr(), 3),
            MdimStatus::Dimension
        );
        mdim_system_free(sys);
        let mut h = ptr::null_mut();
        assert_eq!(
            mdim_horseshoe_build(2, 0.25, 0, 1, 1.5, 0, &mut h),
            MdimStatus::InvalidParams
        );
        let bad = CString::new("{not json").unwrap();
        assert_eq!(mdim_horseshoe_from_json(bad.as_ptr(), &mut h), MdimStatus::Format);
        mdim_system_free(ptr::null_mut());
        mdim_horseshoe_free(ptr::null_mut());
        mdim_string_free(ptr::null_mut());
    }
}

#[test]
fn horseshoe_round_trip_and_verify() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(mdim_horseshoe_build(2, 0.25, 1, 3, 1.5, 9, &mut h), MdimStatus::Ok);
        assert_eq!(mdim_horseshoe_n_symbols(h), 4);
        assert_eq!(mdim_horseshoe_n_stages(h), 3);
        let mut failures = 99;
        assert_eq!(mdim_horseshoe_verify(h, 8, &mut failures), MdimStatus::Ok);
        assert_eq!(failures, 0);
        let mut json = ptr::null_mut();
        assert_eq!(mdim_horseshoe_to_json(h, &mut json), MdimStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mdim_horseshoe_from_json(json, &mut back), MdimStatus::Ok);
        assert_eq!(mdim_horseshoe_n_stages(back), 3);
        mdim_string_free(json);

        // a rectangle center stays in the domain for one step
        let mut sys = ptr::null_mut();
        assert_eq!(mdim_horseshoe_system(back, &mut sys), MdimStatus::Ok);
        assert_eq!(mdim_system_dim(sys), 2);
        mdim_system_free(sys);
        mdim_horseshoe_free(back);
        mdim_horseshoe_free(h);
    }
}

fn target_dir() -> PathBuf {
    // tests/abi binary lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libmdimlab_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "mdimlab.h"
int main(void) {
    MdimHorseshoe *h = NULL;
    if (mdim_horseshoe_build(2, 0.25, 1, 1, 1.5, 0, &h) != MDIM_STATUS_OK) return 1;
    uint64_t failures = 1;
    if (mdim_horseshoe_verify(h, 4, &failures) != MDIM_STATUS_OK || failures != 0) return 2;
    MdimSystem *s = NULL;
    if (mdim_system_doubling(0, &s) != MDIM_STATUS_INVALID_PARAMS) return 3;
    if (mdim_last_error() == NULL) return 4;
    printf("%zu\n", mdim_horseshoe_n_symbols(h));
    mdim_horseshoe_free(h);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("cc runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4");
}
