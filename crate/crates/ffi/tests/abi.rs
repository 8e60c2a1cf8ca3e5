use std::ffi::{c_char, CString};
use std::ptr;

use bqci_ffi::*;

const SMALL: &str = include_str!("../../../configs/small.toml");

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { bqci_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn scalar(n: usize, f: impl Fn([f64; 3]) -> f64) -> *mut BqciField {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let mut data = Vec::with_capacity(n * n * n);
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                data.push(f([ix as f64 * h, iy as f64 * h, iz as f64 * h]));
            }
        }
    }
    let mut out = ptr::null_mut();
    let s = unsafe { bqci_field_from_samples(n, BqciRank::Scalar, data.as_ptr(), data.len(), &mut out) };
    assert_eq!(s, BqciStatus::Ok);
    out
}

fn samples(f: *const BqciField) -> Vec<f64> {
    let mut len = 0;
    unsafe {
        assert_eq!(bqci_field_sample_count(f, &mut len), BqciStatus::Ok);
        let mut v = vec![0.0; len];
        assert_eq!(bqci_field_samples(f, v.as_mut_ptr(), len), BqciStatus::Ok);
        v
    }
}

#[test]
fn samples_round_trip_and_shape() {
    let f = scalar(8, |x| x[0].sin() + (2.0 * x[2]).cos());
    let v = samples(f);
    assert_eq!(v.len(), 512);
    let (mut n, mut rank) = (0, BqciRank::Vector);
    unsafe {
        assert_eq!(bqci_field_shape(f, &mut n, &mut rank), BqciStatus::Ok);
        bqci_field_free(f);
    }
    assert_eq!((n, rank), (8, BqciRank::Scalar));
    assert!((v[0] - 1.0).abs() < 1e-13);
}

#[test]
fn operators_compose() {
    let f = scalar(16, |x| (x[0] + 2.0 * x[1]).sin() * x[2].cos());
    let (mut g, mut lap, mut div, mut curl) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(bqci_field_apply(f, BqciOp::Gradient, &mut g), BqciStatus::Ok);
        assert_eq!(bqci_field_apply(g, BqciOp::Divergence, &mut div), BqciStatus::Ok);
        assert_eq!(bqci_field_apply(f, BqciOp::Laplacian, &mut lap), BqciStatus::Ok);
        assert_eq!(bqci_field_apply(g, BqciOp::Curl, &mut curl), BqciStatus::Ok);
    }
    let (a, b) = (samples(div), samples(lap));
    let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-11, "{err}");
    let (mut l2, mut sup) = (0.0, 0.0);
    unsafe {
        assert_eq!(bqci_field_norms(curl, &mut l2, &mut sup), BqciStatus::Ok);
        for h in [f, g, lap, div, curl] {
            bqci_field_free(h);
        }
    }
    assert!(sup < 1e-11 && l2 < 1e-10);
}

#[test]
fn errors_carry_codes_and_messages() {
    let data = [0.0; 27];
    let mut out = ptr::null_mut();
    let s = unsafe { bqci_field_from_samples(3, BqciRank::Scalar, data.as_ptr(), 27, &mut out) };
    assert_eq!(s, BqciStatus::InvalidParameter);
    assert!(out.is_null());
    assert!(last_error().contains('n'));

    let f = scalar(8, |x| x[0].sin());
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(bqci_field_apply(f, BqciOp::Curl, &mut r), BqciStatus::RankMismatch);
        assert_eq!(bqci_field_apply(ptr::null(), BqciOp::Curl, &mut r), BqciStatus::NullPointer);
        assert_eq!(bqci_field_samples(f, ptr::null_mut(), 512), BqciStatus::NullPointer);
        let mut small = [0.0; 4];
        assert_eq!(bqci_field_samples(f, small.as_mut_ptr(), 4), BqciStatus::InvalidArgument);
        assert!(last_error().contains("512"));
        bqci_field_free(f);
        bqci_field_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates() {
    let bad = CString::new("not = [toml").unwrap();
    let mut s = ptr::null_mut();
    assert_ne!(unsafe { bqci_schedule_from_toml(bad.as_ptr(), &mut s) }, BqciStatus::Ok);
    let mut buf = [1 as c_char; 4];
    let full = unsafe { bqci_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(full > 3);
    assert_eq!(buf[3], 0);
    assert_eq!(unsafe { bqci_last_error(ptr::null_mut(), 0) }, full);
}

#[test]
fn schedule_from_toml() {
    let text = CString::new(SMALL).unwrap();
    let mut s = ptr::null_mut();
    let mut count = 0;
    let mut p = BqciStageParams::default();
    unsafe {
        assert_eq!(bqci_schedule_from_toml(text.as_ptr(), &mut s), BqciStatus::Ok);
        assert_eq!(bqci_schedule_stage_count(s, &mut count), BqciStatus::Ok);
        assert!(count >= 2);
        assert_eq!(bqci_schedule_stage(s, 0, &mut p), BqciStatus::Ok);
        assert_eq!(bqci_schedule_stage(s, 1000, &mut p), BqciStatus::InvalidParameter);
        bqci_schedule_free(s);
    }
    assert_eq!(p.q, 0);
    assert!(p.lambda_next > p.lambda_q);
    assert!(p.delta_next < p.delta_q);
    assert!(p.big_m.is_nan());
}

#[test]
fn mikado_amplitudes_at_identity() {
    let mut m = ptr::null_mut();
    let mut radius = 0.0;
    let id = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let far = [3.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let mut gamma = [0.0; 6];
    unsafe {
        assert_eq!(bqci_mikado_build(0.5, 32, 0, &mut m), BqciStatus::Ok);
        assert_eq!(bqci_mikado_admissible_radius(m, &mut radius), BqciStatus::Ok);
        assert_eq!(bqci_mikado_amplitudes(m, id.as_ptr(), gamma.as_mut_ptr()), BqciStatus::Ok);
        assert!(gamma.iter().all(|&g| g > 0.0));
        assert_eq!(bqci_mikado_amplitudes(m, far.as_ptr(), gamma.as_mut_ptr()), BqciStatus::Admissibility);
        let mut w = ptr::null_mut();
        assert_eq!(bqci_mikado_field(m, id.as_ptr(), 16, &mut w), BqciStatus::Ok);
        let (mut n, mut rank) = (0, BqciRank::Scalar);
        assert_eq!(bqci_field_shape(w, &mut n, &mut rank), BqciStatus::Ok);
        assert_eq!((n, rank), (16, BqciRank::Vector));
        bqci_field_free(w);
        bqci_mikado_free(m);
    }
    assert!(radius > 0.0 && radius < 1.0);
}

#[test]
fn run_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = CString::new(SMALL).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut summary = BqciRunSummary::default();
    let s = unsafe { bqci_run(text.as_ptr(), out.as_ptr(), 1, &mut summary) };
    assert_eq!(s, BqciStatus::Ok, "{}", last_error());
    assert_eq!(summary.status, 0);
    assert_eq!(summary.stage_reached, 1);
    assert_eq!(summary.failed_checks, 0);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("stage_1/v.bqci").exists());
}

#[test]
fn header_is_current_and_compiles() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/bqci.h")).unwrap();
    for sym in ["bqci_run", "bqci_field_apply", "bqci_mikado_amplitudes", "bqci_last_error", "BQCI_STATUS_OK"] {
        assert!(header.contains(sym), "{sym}");
    }
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let st = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", &format!("{dir}/include/bqci.h")])
        .status()
        .unwrap();
    assert!(st.success());
}

#[test]
fn version_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(bqci_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
