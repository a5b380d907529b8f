use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;
use std::sync::Arc;

use langevin_kl::{Ensemble, InitLaw, Potential};
use langevin_kl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { lk_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn diag_potential(a: &[f64]) -> *mut LkPotential {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { lk_potential_quadratic_diagonal(a.as_ptr(), a.len(), &mut p) }, LkStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn potential_round_trip() {
    let p = diag_potential(&[1.0, 2.0]);
    let (mut m, mut l, mut d) = (0.0, 0.0, 0usize);
    assert_eq!(unsafe { lk_potential_constants(p, &mut m, &mut l, &mut d) }, LkStatus::Ok);
    assert_eq!((m, l, d), (1.0, 2.0, 2));

    let x = [1.0, -3.0];
    let mut u = 0.0;
    assert_eq!(unsafe { lk_potential_value(p, x.as_ptr(), 2, &mut u) }, LkStatus::Ok);
    assert_eq!(u, 0.5 * 1.0 + 0.5 * 2.0 * 9.0);
    let mut g = [0.0; 2];
    assert_eq!(unsafe { lk_potential_gradient(p, x.as_ptr(), 2, g.as_mut_ptr()) }, LkStatus::Ok);
    assert_eq!(g, [1.0, -6.0]);

    assert_eq!(unsafe { lk_potential_value(p, x.as_ptr(), 3, &mut u) }, LkStatus::DimensionMismatch);
    unsafe { lk_potential_free(p) };
    unsafe { lk_potential_free(ptr::null_mut()) };
}

#[test]
fn full_and_huber_potentials() {
    let a = [2.0, 0.5, 0.5, 1.0];
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { lk_potential_quadratic_full(a.as_ptr(), 2, &mut p) }, LkStatus::Ok);
    let mut u = 0.0;
    let x = [1.0, 1.0];
    assert_eq!(unsafe { lk_potential_value(p, x.as_ptr(), 2, &mut u) }, LkStatus::Ok);
    assert!((u - 2.0).abs() < 1e-15);
    unsafe { lk_potential_free(p) };

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lk_potential_huber(1.0, 1, &mut h) }, LkStatus::Ok);
    let mut g = [0.0];
    assert_eq!(unsafe { lk_potential_gradient(h, [5.0].as_ptr(), 1, g.as_mut_ptr()) }, LkStatus::Ok);
    assert_eq!(g, [1.0]);
    unsafe { lk_potential_free(h) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut p = ptr::null_mut();
    let bad = [1.0, -1.0];
    assert_eq!(unsafe { lk_potential_quadratic_diagonal(bad.as_ptr(), 2, &mut p) }, LkStatus::InvalidPotential);
    assert!(p.is_null());
    assert!(last_error().contains("positive"));

    assert_eq!(unsafe { lk_potential_quadratic_diagonal(ptr::null(), 2, &mut p) }, LkStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { lk_potential_huber(1.0, 1, ptr::null_mut()) }, LkStatus::NullPointer);

    let mut plan = LkPlan { h: 0.0, k: 0, epsilon: 0.0 };
    assert_eq!(unsafe { lk_plan_strong(1.0, 1.0, 1, 2.0, &mut plan) }, LkStatus::Planning);
    assert_eq!(plan.k, 0);

    let s = unsafe { CStr::from_ptr(lk_status_string(LkStatus::Planning)) };
    assert_eq!(s.to_str().unwrap(), "planning error");
}

#[test]
fn plans_match_library() {
    let mut plan = LkPlan { h: 0.0, k: 0, epsilon: 0.0 };
    assert_eq!(unsafe { lk_plan_strong(1.0, 2.0, 2, 0.1, &mut plan) }, LkStatus::Ok);
    assert_eq!(plan.k, 4722);
    assert!((plan.h - 7.8125e-4).abs() <= 1e-12 * 7.8125e-4);

    let e = std::f64::consts::E;
    assert_eq!(unsafe { lk_plan_weak(1.0, 1.0, f64::INFINITY, e, 1.0, 1, 0.1, &mut plan) }, LkStatus::Ok);
    assert_eq!(plan.k, 105_600);
    assert!((plan.h - 0.01 / 48.0).abs() <= 1e-12 * plan.h);
}

#[test]
fn ensemble_matches_library_bit_for_bit() {
    let p = diag_potential(&[1.0, 2.0]);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { lk_ensemble_new(p, 64, 9, &mut e) }, LkStatus::Ok);
    assert_eq!(unsafe { lk_ensemble_step(e, 0.05, 10) }, LkStatus::Ok);
    let (mut n, mut d, mut step) = (0usize, 0usize, 0u64);
    assert_eq!(unsafe { lk_ensemble_shape(e, &mut n, &mut d, &mut step) }, LkStatus::Ok);
    assert_eq!((n, d, step), (64, 2, 10));
    let mut states = vec![0.0; n * d];
    assert_eq!(unsafe { lk_ensemble_states(e, states.as_mut_ptr(), states.len()) }, LkStatus::Ok);
    assert_eq!(unsafe { lk_ensemble_states(e, states.as_mut_ptr(), 3) }, LkStatus::DimensionMismatch);

    let pot = Arc::new(Potential::quadratic_diagonal(vec![1.0, 2.0]).unwrap());
    let mut reference = Ensemble::init(pot, &InitLaw::GaussianOneOverM, 64, 9).unwrap();
    for _ in 0..10 {
        reference.step(0.05).unwrap();
    }
    assert_eq!(states, reference.states());

    unsafe { lk_ensemble_free(e) };
    unsafe { lk_potential_free(p) };
}

#[test]
fn ensemble_reports_divergence() {
    let p = diag_potential(&[1.0]);
    let mut e = ptr::null_mut();
    let (mean, var) = ([0.0], [1.0]);
    assert_eq!(unsafe { lk_ensemble_new_gaussian(p, mean.as_ptr(), var.as_ptr(), 1, 8, 1, &mut e) }, LkStatus::Ok);
    assert_eq!(unsafe { lk_ensemble_step(e, 5.0, 2000) }, LkStatus::NonFinite);
    unsafe { lk_ensemble_free(e) };

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lk_potential_huber(1.0, 1, &mut h) }, LkStatus::Ok);
    assert_eq!(unsafe { lk_ensemble_new(h, 8, 1, &mut e) }, LkStatus::InvalidArgument);
    unsafe { lk_potential_free(h) };
    unsafe { lk_potential_free(p) };
}

#[test]
fn gaussian_distances() {
    // N(0, 1) against N(1, 4): KL = ln 2 + (1 + 1)/8 − ½, W2² = 1 + (2 − 1)²
    let (mp, cp, mq, cq) = ([0.0], [1.0], [1.0], [4.0]);
    let mut kl = 0.0;
    let mut w2 = 0.0;
    assert_eq!(unsafe { lk_gaussian_kl(mp.as_ptr(), cp.as_ptr(), mq.as_ptr(), cq.as_ptr(), 1, &mut kl) }, LkStatus::Ok);
    assert_eq!(unsafe { lk_gaussian_w2(mp.as_ptr(), cp.as_ptr(), mq.as_ptr(), cq.as_ptr(), 1, &mut w2) }, LkStatus::Ok);
    assert!((kl - (2f64.ln() + 0.25 - 0.5)).abs() < 1e-14);
    assert!((w2 - 2f64.sqrt()).abs() < 1e-14);

    let singular = [1.0, 1.0, 1.0, 1.0];
    let m2 = [0.0, 0.0];
    let id = [1.0, 0.0, 0.0, 1.0];
    let status = unsafe { lk_gaussian_kl(m2.as_ptr(), id.as_ptr(), m2.as_ptr(), singular.as_ptr(), 2, &mut kl) };
    assert_ne!(status, LkStatus::Ok);
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("langevin_kl.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).expect("header is generated by the build script");
    for name in [
        "typedef struct LkPotential LkPotential",
        "typedef struct LkEnsemble LkEnsemble",
        "LK_STATUS_OK = 0",
        "lk_potential_quadratic_diagonal",
        "lk_plan_strong",
        "lk_plan_weak",
        "lk_ensemble_step",
        "lk_ensemble_states",
        "lk_gaussian_kl",
        "lk_gaussian_w2",
        "lk_last_error_message",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "langevin_kl.h"

int main(void) {
    LkPlan plan;
    if (lk_plan_strong(1.0, 2.0, 2, 0.1, &plan) != LK_STATUS_OK || plan.k != 4722) return 1;
    double a[2] = {1.0, 2.0};
    LkPotential *p = NULL;
    if (lk_potential_quadratic_diagonal(a, 2, &p) != LK_STATUS_OK) return 2;
    LkEnsemble *e = NULL;
    if (lk_ensemble_new(p, 16, 3, &e) != LK_STATUS_OK) return 3;
    if (lk_ensemble_step(e, plan.h, 100) != LK_STATUS_OK) return 4;
    double states[32];
    if (lk_ensemble_states(e, states, 32) != LK_STATUS_OK) return 5;
    for (int i = 0; i < 32; i++) if (!isfinite(states[i])) return 6;
    if (lk_potential_huber(-1.0, 1, &p) != LK_STATUS_INVALID_POTENTIAL) return 7;
    char msg[128];
    if (lk_last_error_message(msg, sizeof msg) == 0) return 8;
    lk_ensemble_free(e);
    lk_potential_free(p);
    puts("ok");
    return 0;
}
"#;

/// Compile and run a C client against the header and the static library,
/// when a C compiler and the archive are available.
#[test]
fn c_client_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    // target/<profile>/deps/<test> -> target/<profile>
    let Some(profile_dir) = exe.parent().and_then(|d| d.parent()) else { return };
    let archive = profile_dir.join("liblangevin_kl_ffi.a");
    if !archive.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C client: compiler or {} missing", archive.display());
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("client.c");
    let bin = dir.join("client");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "cc failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "client exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
    let _ = std::fs::remove_dir_all(&dir);
}

fn tempfile_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("c-client-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
