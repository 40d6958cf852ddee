use std::ffi::{CStr, CString};
use std::ptr;

use roughdelay_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rd_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn sample_lift_and_round_trip_through_a_file() {
    unsafe {
        let mut path = ptr::null_mut();
        assert_eq!(rd_path_sample_brownian(2, -1.0, 3.0, 1.0 / 128.0, 9, &mut path), RdStatus::Ok);
        let n = rd_path_len(path);
        assert_eq!(n, 513);
        let mut vals = vec![0.0; n * 2];
        assert_eq!(rd_path_values(path, vals.as_mut_ptr(), vals.len()), RdStatus::Ok);
        assert_eq!(rd_path_values(path, vals.as_mut_ptr(), 3), RdStatus::BufferTooSmall);

        let mut rp = ptr::null_mut();
        assert_eq!(rd_roughpath_lift(path, 1.0 / 16.0, 1.0, 0.45, RdConvention::Ito, &mut rp), RdStatus::Ok);
        assert_eq!(rd_roughpath_intervals(rp), 48);
        let triples = [0i64, 10, 30, 5, 5, 47, 2, 20, 48];
        let mut res = f64::NAN;
        assert_eq!(rd_roughpath_chen_residual(rp, triples.as_ptr(), 3, &mut res), RdStatus::Ok);
        assert!(res < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        let file = CString::new(dir.path().join("rp.txt").to_str().unwrap()).unwrap();
        assert_eq!(rd_roughpath_write(rp, file.as_ptr()), RdStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rd_roughpath_read(file.as_ptr(), &mut back), RdStatus::Ok);
        assert_eq!(rd_roughpath_intervals(back), 48);

        rd_roughpath_free(back);
        rd_roughpath_free(rp);
        rd_path_free(path);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut path = ptr::null_mut();
        assert_eq!(rd_path_sample_brownian(0, 0.0, 1.0, 0.1, 1, &mut path), RdStatus::Config);
        assert!(path.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(rd_roughpath_lift(ptr::null(), 0.1, 1.0, 0.45, RdConvention::Ito, ptr::null_mut()), RdStatus::NullPointer);
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/rp.txt").unwrap();
        let mut rp = ptr::null_mut();
        assert_eq!(rd_roughpath_read(missing.as_ptr(), &mut rp), RdStatus::Io);

        let bad = CString::new("[noise]\nstepz = 3\n").unwrap();
        let mut sys = ptr::null_mut();
        assert_eq!(rd_system_from_toml(bad.as_ptr(), &mut sys), RdStatus::Config);
        assert!(last_error().contains("noise.stepz"));

        rd_path_free(ptr::null_mut());
        rd_roughpath_free(ptr::null_mut());
        rd_system_free(ptr::null_mut());
    }
}

#[test]
fn unordered_triples_are_rejected() {
    unsafe {
        let mut path = ptr::null_mut();
        rd_path_sample_brownian(1, 0.0, 2.0, 1.0 / 64.0, 2, &mut path);
        let mut rp = ptr::null_mut();
        rd_roughpath_lift(path, 1.0 / 8.0, 1.0, 0.45, RdConvention::Stratonovich, &mut rp);
        let triples = [5i64, 3, 9];
        let mut res = 0.0;
        assert_eq!(rd_roughpath_chen_residual(rp, triples.as_ptr(), 1, &mut res), RdStatus::InvalidArgument);
        rd_roughpath_free(rp);
        rd_path_free(path);
    }
}

#[test]
fn system_lyapunov_matches_characteristic_root() {
    let toml = CString::new(
        "[noise]\nkind = \"zero\"\nsteps = 32\nrefine = 2\n[field]\ndrift_delay = -0.3\ninitial = 0.0\n[run]\nsegments = 200\n",
    )
    .unwrap();
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(rd_system_from_toml(toml.as_ptr(), &mut sys), RdStatus::Ok, "{}", last_error());
        let mut mu = [0.0];
        assert_eq!(rd_system_lyapunov(sys, 1, mu.as_mut_ptr(), 1), RdStatus::Ok);
        // λ e^λ = −0.3 on the principal branch
        let mut l: f64 = -0.5;
        for _ in 0..60 {
            l -= (l + 0.3 * (-l).exp()) / (1.0 - 0.3 * (-l).exp());
        }
        assert!((mu[0] - l).abs() < 2e-2, "{} vs {l}", mu[0]);
        let mut y = [f64::NAN];
        assert_eq!(rd_system_solve_final(sys, 1, y.as_mut_ptr(), 1), RdStatus::Ok);
        assert_eq!(y[0], 0.0);
        assert_eq!(rd_system_lyapunov(sys, 1, mu.as_mut_ptr(), 0), RdStatus::BufferTooSmall);
        rd_system_free(sys);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/roughdelay.h")).unwrap();
    for name in [
        "rd_last_error_message",
        "rd_version",
        "rd_path_sample_brownian",
        "rd_path_values",
        "rd_path_free",
        "rd_roughpath_lift",
        "rd_roughpath_chen_residual",
        "rd_roughpath_write",
        "rd_roughpath_read",
        "rd_roughpath_free",
        "rd_system_from_toml",
        "rd_system_lyapunov",
        "rd_system_solve_final",
        "rd_system_free",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    let version = unsafe { CStr::from_ptr(rd_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"roughdelay.h\"\nint main(void) { rd_path *p = 0; rd_status s = rd_path_sample_brownian(1, 0.0, 1.0, 0.01, 1, &p); rd_path_free(p); return (int)s; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc);
        }
    }
    Err(())
}
