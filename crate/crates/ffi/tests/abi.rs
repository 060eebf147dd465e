//! Exercises the C surface through the exported symbols, exactly as a
//! foreign caller would, plus an end-to-end compile-and-run of a small C
//! client against the generated header.

use std::ffi::CStr;
use std::ptr;

use robust_sketch_ffi::*;

fn flat_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n * d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
}

#[test]
fn distance_roundtrip_through_c_abi() {
    let (n, d) = (6, 32);
    let points = flat_points(n, d, 1);
    let mut handle: *mut RsDistanceEstimator = ptr::null_mut();
    let code = unsafe { rs_distance_build(points.as_ptr(), n, d, 3, 0.3, 7, &mut handle) };
    assert_eq!(code, RsStatus::Ok);
    assert!(!handle.is_null());
    assert!(unsafe { rs_distance_stored_reals(handle) } > 0);
    assert_eq!(unsafe { rs_distance_remaining_budget(handle) }, 3);

    // Query at the third stored point: its own distance is exactly zero.
    let query = &points[2 * d..3 * d];
    let mut out = vec![f64::NAN; n];
    let code = unsafe { rs_distance_query(handle, query.as_ptr(), d, out.as_mut_ptr(), n) };
    assert_eq!(code, RsStatus::Ok);
    assert_eq!(out[2], 0.0);
    assert!(out.iter().all(|v| v.is_finite()));

    // Mismatched output length is rejected with a message.
    let code = unsafe { rs_distance_query(handle, query.as_ptr(), d, out.as_mut_ptr(), n + 1) };
    assert_eq!(code, RsStatus::DimensionMismatch);
    let msg = unsafe { CStr::from_ptr(rs_last_error()) }.to_str().unwrap();
    assert!(msg.contains("dimension"), "{msg}");

    // Budget runs out after the remaining two queries.
    unsafe {
        rs_distance_query(handle, query.as_ptr(), d, out.as_mut_ptr(), n);
        rs_distance_query(handle, query.as_ptr(), d, out.as_mut_ptr(), n);
        let code = rs_distance_query(handle, query.as_ptr(), d, out.as_mut_ptr(), n);
        assert_eq!(code, RsStatus::BudgetExhausted);
        rs_distance_free(handle);
    }
}

#[test]
fn kde_roundtrip_through_c_abi() {
    let (n, d) = (200, 2);
    let points = flat_points(n, d, 3);
    let mut handle: *mut RsKdeEstimator = ptr::null_mut();
    let code = unsafe {
        rs_kde_build(
            points.as_ptr(),
            n,
            d,
            4,
            0.3,
            0.1,
            RsKernel::Exp,
            1.0,
            11,
            &mut handle,
        )
    };
    assert_eq!(code, RsStatus::Ok);
    let query = [0.0, 0.0];
    let mut value = f64::NAN;
    let mut promise = -1;
    let code = unsafe { rs_kde_query(handle, query.as_ptr(), d, &mut value, &mut promise) };
    assert_eq!(code, RsStatus::Ok);
    assert!(value.is_finite() && value >= 0.0);
    assert!(promise == 0 || promise == 1);
    unsafe { rs_kde_free(handle) };
}

#[test]
fn kde_rejects_bad_kernel_scale() {
    let points = flat_points(10, 2, 5);
    let mut handle: *mut RsKdeEstimator = ptr::null_mut();
    let code = unsafe {
        rs_kde_build(
            points.as_ptr(),
            10,
            2,
            1,
            0.3,
            0.1,
            RsKernel::Rational,
            -1.0,
            1,
            &mut handle,
        )
    };
    assert_eq!(code, RsStatus::InvalidArgument);
    assert!(handle.is_null());
}

#[test]
fn regression_roundtrip_through_c_abi() {
    let (rows, cols) = (40, 4);
    let design = flat_points(rows, cols, 7);
    let labels = flat_points(rows, 1, 9);
    let mut handle: *mut RsRegression = ptr::null_mut();
    let code = unsafe {
        rs_regression_build(
            design.as_ptr(),
            rows,
            cols,
            labels.as_ptr(),
            0.2,
            2,
            13,
            &mut handle,
        )
    };
    assert_eq!(code, RsStatus::Ok);

    let mut exact = f64::NAN;
    let code = unsafe {
        rs_regression_exact_cost(design.as_ptr(), rows, cols, labels.as_ptr(), &mut exact)
    };
    assert_eq!(code, RsStatus::Ok);

    let indices = [3usize, 17];
    let values = [0.5, -0.25];
    let mut estimate = f64::NAN;
    let code = unsafe {
        rs_regression_step(handle, indices.as_ptr(), values.as_ptr(), 2, &mut estimate)
    };
    assert_eq!(code, RsStatus::Ok);
    assert!(estimate.is_finite());

    // Duplicate indices in one update are invalid.
    let dup_idx = [1usize, 1];
    let code = unsafe {
        rs_regression_step(handle, dup_idx.as_ptr(), values.as_ptr(), 2, &mut estimate)
    };
    assert_eq!(code, RsStatus::InvalidArgument);
    unsafe { rs_regression_free(handle) };
}

#[test]
fn private_median_through_c_abi() {
    let values = vec![2.0; 80];
    let mut out = f64::NAN;
    let code = unsafe {
        rs_private_median(values.as_ptr(), values.len(), 0.1, 10.0, 1.05, 1.0, 21, &mut out)
    };
    assert_eq!(code, RsStatus::Ok);
    assert!((out / 2.0).max(2.0 / out) <= 1.05, "median {out}");
}

/// Compiles and runs a small C client against the generated header and the
/// cdylib. Skips silently when no C compiler is available.
#[test]
fn c_client_links_and_runs() {
    let manifest = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(
        header_dir.join("robust_sketch.h").exists(),
        "header was not generated"
    );

    // target/<profile>/ holds the cdylib; tests run from target/<profile>/deps.
    let mut lib_dir = std::env::current_exe().unwrap();
    lib_dir.pop();
    if lib_dir.ends_with("deps") {
        lib_dir.pop();
    }
    let lib_path = lib_dir.join("librobust_sketch_ffi.so");
    if !lib_path.exists() {
        eprintln!("skipping: cdylib not found at {}", lib_path.display());
        return;
    }
    let cc = which_cc();
    let Some(cc) = cc else {
        eprintln!("skipping: no C compiler on PATH");
        return;
    };

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "robust_sketch.h"

int main(void) {
    double points[8] = {0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0};
    RsDistanceEstimator *est = NULL;
    if (rs_distance_build(points, 4, 2, 2, 0.4, 42, &est) != RS_STATUS_OK) {
        fprintf(stderr, "build failed: %s\n", rs_last_error());
        return 1;
    }
    double query[2] = {0.0, 0.0};
    double out[4];
    if (rs_distance_query(est, query, 2, out, 4) != RS_STATUS_OK) {
        fprintf(stderr, "query failed: %s\n", rs_last_error());
        return 1;
    }
    if (out[0] != 0.0) {
        fprintf(stderr, "self distance %f\n", out[0]);
        return 1;
    }
    rs_distance_free(est);
    printf("ok %s\n", rs_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("client");
    let status = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lrobust_sketch_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("compiler invocation");
    assert!(status.success(), "C client failed to compile");

    let output = std::process::Command::new(&exe)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .expect("client run");
    assert!(
        output.status.success(),
        "client exited with {:?}: {}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("ok "));
}

fn which_cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|cc| {
        std::process::Command::new(cc)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    })
}
