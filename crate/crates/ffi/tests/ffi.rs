use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use tristirap_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ts_last_error_message()) }.to_string_lossy().into_owned()
}

fn short_scenario() -> *mut TsScenario {
    let mut sc = ptr::null_mut();
    let name = CString::new("fig3").unwrap();
    assert_eq!(unsafe { ts_scenario_from_preset(name.as_ptr(), &mut sc) }, TsStatus::TsOk);
    for key in ["pulses.tau_us", "pulses.delta_t_us"] {
        let key = CString::new(key).unwrap();
        assert_eq!(unsafe { ts_scenario_set(sc, key.as_ptr(), 5.0) }, TsStatus::TsOk, "{}", last_error());
    }
    sc
}

#[test]
fn full_transfer_through_the_abi() {
    let sc = short_scenario();
    let mut res = TsFullTransfer::default();
    let mut series = ptr::null_mut();
    assert_eq!(unsafe { ts_run_full_transfer(sc, 0, &mut res, &mut series) }, TsStatus::TsOk);
    assert!(res.p_q_final > 0.9 && res.invariants_hold == 1);

    let n = unsafe { ts_series_len(series) };
    assert!(n > 10);
    let mut times = vec![0.0; n];
    let mut written = 0;
    assert_eq!(unsafe { ts_series_column(series, 0, times.as_mut_ptr(), n, &mut written) }, TsStatus::TsOk);
    assert_eq!(written, n);
    assert!(times.windows(2).all(|w| w[1] > w[0]));

    let mut row = [0.0; TS_SAMPLE_WIDTH];
    assert_eq!(unsafe { ts_series_sample(series, n - 1, row.as_mut_ptr()) }, TsStatus::TsOk);
    assert_eq!(row[0], times[n - 1]);
    assert_eq!(unsafe { ts_series_sample(series, n, row.as_mut_ptr()) }, TsStatus::TsErrInvalidArg);
    assert!(last_error().contains("out of range"));

    let name = unsafe { CStr::from_ptr(ts_column_name(4)) };
    assert_eq!(name.to_str().unwrap(), "rho_QQ");
    assert!(ts_column_name(TS_SAMPLE_WIDTH).is_null());
    unsafe {
        ts_series_free(series);
        ts_scenario_free(sc);
    }
}

#[test]
fn error_codes() {
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { ts_scenario_from_preset(ptr::null(), &mut sc) }, TsStatus::TsErrNull);
    let bad = CString::new("nope").unwrap();
    assert_eq!(unsafe { ts_scenario_from_preset(bad.as_ptr(), &mut sc) }, TsStatus::TsErrInvalidArg);
    assert!(sc.is_null());
    let garbage = CString::new("[lasers.B\n").unwrap();
    assert_eq!(unsafe { ts_scenario_from_toml(garbage.as_ptr(), &mut sc) }, TsStatus::TsErrConfig);
    let missing = CString::new("[pulses]\ntau_us = -1\n").unwrap();
    assert_eq!(unsafe { ts_scenario_from_toml(missing.as_ptr(), &mut sc) }, TsStatus::TsErrValidation);
    assert!(last_error().contains("pulses.tau_us"), "{}", last_error());

    let sc = short_scenario();
    let mut res = TsFullTransfer::default();
    assert_eq!(unsafe { ts_run_full_transfer(sc, 7, &mut res, ptr::null_mut()) }, TsStatus::TsErrInvalidArg);
    assert_eq!(unsafe { ts_run_full_transfer(sc, 0, ptr::null_mut(), ptr::null_mut()) }, TsStatus::TsErrNull);
    let mut partial = TsPartialStirap::default();
    assert_eq!(unsafe { ts_run_partial_stirap(sc, 0, 1e6, &mut partial, ptr::null_mut()) }, TsStatus::TsErrInvalidArg);
    assert!(last_error().contains("outside the window"));
    unsafe {
        ts_scenario_free(sc);
        ts_scenario_free(ptr::null_mut());
        ts_series_free(ptr::null_mut());
    }
}

#[test]
fn helpers_and_metadata() {
    let mut dr = 0.0;
    let two_pi = 2.0 * std::f64::consts::PI;
    assert_eq!(unsafe { ts_resonance_detuning(100.0 * two_pi, 100.0 * two_pi, 10.0 * two_pi, 0, &mut dr) }, TsStatus::TsOk);
    assert!((dr / two_pi + 0.25).abs() < 1e-12);
    assert_eq!(unsafe { ts_resonance_detuning(1.0, 0.0, 1.0, 0, &mut dr) }, TsStatus::TsErrInvalidArg);

    let mut frame = TsDressedFrame::default();
    assert_eq!(unsafe { ts_dressed_frame(50.0, 10.0, 1, &mut frame) }, TsStatus::TsOk);
    assert_eq!(frame.alpha_c, 2.5);
    assert!(frame.alpha < frame.alpha_c && frame.beta < frame.alpha);

    assert!(ts_preset_count() >= 11);
    let names: Vec<String> = (0..ts_preset_count())
        .map(|i| unsafe { CStr::from_ptr(ts_preset_name(i)) }.to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n == "fig8"));
    assert!(ts_preset_name(ts_preset_count()).is_null());
    let version = unsafe { CStr::from_ptr(ts_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));

    let sc = short_scenario();
    let mut needed = 0;
    assert_eq!(unsafe { ts_scenario_to_toml(sc, ptr::null_mut(), 0, &mut needed) }, TsStatus::TsOk);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    assert_eq!(unsafe { ts_scenario_to_toml(sc, buf.as_mut_ptr(), needed, ptr::null_mut()) }, TsStatus::TsOk);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert!(text.contains("tau_us = 5.0"), "{text}");
    unsafe { ts_scenario_free(sc) };
}

#[test]
fn pumping_and_reverse() {
    let sc = short_scenario();
    let mut pump = TsOpticalPumping::default();
    assert_eq!(unsafe { ts_run_optical_pumping(sc, 0, &mut pump) }, TsStatus::TsOk);
    assert!(pump.final_rho_dd > 1.0 - 1e-6 && pump.pump_time > 0.0);
    let mut rev = TsReverseTransfer::default();
    let mut prep = ptr::null_mut();
    assert_eq!(unsafe { ts_run_reverse_transfer(sc, 0, &mut rev, &mut prep, ptr::null_mut()) }, TsStatus::TsOk);
    assert!(rev.prep_fidelity_to_qs > 1.0 - 1e-6);
    assert!(unsafe { ts_series_len(prep) } > 0);
    unsafe {
        ts_series_free(prep);
        ts_scenario_free(sc);
    }
}

/// Compiles the C smoke program against the generated header and static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("tristirap.h").exists(), "header is generated by build.rs");
    // target/<profile>/deps/<test exe> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libtristirap_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "compiling the C smoke test failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}\n{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("P_Q"));
}
